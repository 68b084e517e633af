/// @file
/// @brief Tests for the evaluation metrics, each checked against hand
/// calculations, brute-force oracles, or constructions with known closed-form
/// answers.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "melisa/io.hpp"
#include "melisa/metrics.hpp"
#include "melisa/rng.hpp"

using namespace melisa;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor random_tensor(Rng& rng, std::vector<int> shape, double s = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = s * rng.normal();
    return t;
}

/// Dense (non-separable) reference SSIM: explicit 7x7 window sums with zero
/// padding at every pixel, evaluating the formula directly.
double ssim_dense_oracle(const Tensor& x, const Tensor& y) {
    const int h = x.dim(0), w = x.dim(1);
    std::vector<double> k1(7);
    double ks = 0.0;
    for (int i = 0; i < 7; ++i) {
        double d = i - 3;
        k1[i] = std::exp(-0.5 * d * d / (1.5 * 1.5));
        ks += k1[i];
    }
    for (double& v : k1) v /= ks;
    double lo = x[0], hi = x[0];
    for (int64_t i = 0; i < x.numel(); ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    double range = hi - lo;
    double c1 = (0.01 * range) * (0.01 * range);
    double c2 = (0.03 * range) * (0.03 * range);
    double acc = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int a = -3; a <= 3; ++a)
                for (int b = -3; b <= 3; ++b) {
                    int ii = i + a, jj = j + b;
                    if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                    double wgt = k1[size_t(a + 3)] * k1[size_t(b + 3)];
                    double xv = x[int64_t(ii) * w + jj];
                    double yv = y[int64_t(ii) * w + jj];
                    mx += wgt * xv;
                    my += wgt * yv;
                    sxx += wgt * xv * xv;
                    syy += wgt * yv * yv;
                    sxy += wgt * xv * yv;
                }
            double vx = sxx - mx * mx, vy = syy - my * my;
            double cxy = sxy - mx * my;
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return acc / double(h * w);
}

/// Solves M c = y by Gaussian elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<double> m, std::vector<double> y) {
    const int n = int(y.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(m[size_t(r) * n + col]) >
                std::abs(m[size_t(piv) * n + col]))
                piv = r;
        for (int c = 0; c < n; ++c)
            std::swap(m[size_t(col) * n + c], m[size_t(piv) * n + c]);
        std::swap(y[size_t(col)], y[size_t(piv)]);
        for (int r = col + 1; r < n; ++r) {
            double f = m[size_t(r) * n + col] / m[size_t(col) * n + col];
            for (int c = col; c < n; ++c)
                m[size_t(r) * n + c] -= f * m[size_t(col) * n + c];
            y[size_t(r)] -= f * y[size_t(col)];
        }
    }
    std::vector<double> x(size_t(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double acc = y[size_t(r)];
        for (int c = r + 1; c < n; ++c)
            acc -= m[size_t(r) * n + c] * x[size_t(c)];
        x[size_t(r)] = acc / m[size_t(r) * n + r];
    }
    return x;
}

/// Trajectory pair whose normalized autocorrelation equals target(l) exactly:
/// one cos/sin pixel pair per DCT-I frequency plus a negated twin trajectory.
/// Requires the solved cosine weights to be nonnegative.
std::vector<Tensor> exact_autocorr_trajs(const std::vector<double>& target,
                                         int frames) {
    const int k = int(target.size()) - 1;
    std::vector<double> m(size_t(k + 1) * size_t(k + 1));
    for (int l = 0; l <= k; ++l)
        for (int j = 0; j <= k; ++j)
            m[size_t(l) * size_t(k + 1) + size_t(j)] =
                std::cos(kPi * j * l / k);
    std::vector<double> c = solve_dense(m, target);
    for (double v : c) REQUIRE(v > -1e-9);
    Tensor traj({frames, 1, 1, 2 * (k + 1)});
    for (int t = 0; t < frames; ++t)
        for (int j = 0; j <= k; ++j) {
            double a = std::sqrt(std::max(c[size_t(j)], 0.0));
            double w = kPi * j / k;
            traj[int64_t(t) * 2 * (k + 1) + 2 * j] = a * std::cos(w * t);
            traj[int64_t(t) * 2 * (k + 1) + 2 * j + 1] = a * std::sin(w * t);
        }
    Tensor neg(traj.shape());
    for (int64_t i = 0; i < traj.numel(); ++i) neg[i] = -traj[i];
    return {traj, neg};
}

/// Smooth drifting-phase trajectory with positive decorrelation rate.
Tensor smooth_traj(int frames, int n, double drift, uint64_t seed) {
    Rng rng(seed);
    double p1 = rng.uniform() * 2.0 * kPi, p2 = rng.uniform() * 2.0 * kPi;
    Tensor t({frames, 1, n, n});
    for (int f = 0; f < frames; ++f)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                t[(int64_t(f) * n + i) * n + j] =
                    std::sin(2.0 * kPi * j / n + p1 + drift * f) *
                        std::cos(2.0 * kPi * i / n) +
                    0.5 * std::cos(4.0 * kPi * j / n - 1.3 * drift * f + p2);
    return t;
}

}  // namespace

TEST_CASE("relative L2 error identities") {
    Rng rng(3);
    Tensor ref = random_tensor(rng, {6, 1, 4, 4});
    CHECK(rl2_traj(ref, ref, 6) == 0.0);
    CHECK(rl2_traj(ref, ref, 3) == 0.0);
    Tensor zero = Tensor::zeros({6, 1, 4, 4});
    CHECK(std::abs(rl2_traj(zero, ref, 6) - 1.0) < 1e-9);
    Tensor twice(ref.shape());
    for (int64_t i = 0; i < ref.numel(); ++i) twice[i] = 2.0 * ref[i];
    CHECK(std::abs(rl2_traj(twice, ref, 6) - 1.0) < 1e-9);
    // Only the first t_eval frames count.
    Tensor tampered = ref;
    tampered[ref.numel() - 1] += 100.0;
    CHECK(rl2_traj(tampered, ref, 5) == 0.0);
    CHECK_THROWS_AS(rl2_traj(ref, ref, 0), ConfigError);
    CHECK_THROWS_AS(rl2_traj(ref, ref, 7), ConfigError);
    CHECK_THROWS_AS(rl2_traj(ref, random_tensor(rng, {6, 1, 4, 5}), 3),
                    DataError);
}

TEST_CASE("SSIM: self-similarity, constant rule, and dense-window oracle") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {12, 12});
    CHECK(std::abs(ssim_frame(x, x) - 1.0) <= 1e-12);

    Tensor c = Tensor::full({8, 8}, 2.5);
    CHECK(ssim_frame(c, c) == 1.0);
    Tensor c2 = Tensor::full({8, 8}, 2.5);
    c2[12] += 1e-3;
    CHECK(ssim_frame(c, c2) == 0.0);

    // Direct per-pixel evaluation of the windowed formula.
    for (uint64_t seed : {7u, 8u, 9u}) {
        Rng r2(seed);
        Tensor a = random_tensor(r2, {4, 4});
        Tensor b(a.shape());
        for (int64_t i = 0; i < a.numel(); ++i)
            b[i] = a[i] + 0.2 * r2.normal();
        CHECK(std::abs(ssim_frame(a, b) - ssim_dense_oracle(a, b)) < 1e-12);
    }
    // Larger frames too, where separability actually matters.
    Tensor a = random_tensor(rng, {10, 14});
    Tensor b(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) b[i] = a[i] + 0.1 * rng.normal();
    CHECK(std::abs(ssim_frame(a, b) - ssim_dense_oracle(a, b)) < 1e-12);

    // Symmetry when both frames share the same data range.
    Tensor s1({6, 6}), s2({6, 6});
    Rng r3(11);
    for (int64_t i = 0; i < 36; ++i) {
        s1[i] = r3.uniform();
        s2[i] = r3.uniform();
    }
    s1[0] = 0.0;
    s1[35] = 1.0;
    s2[0] = 0.0;
    s2[35] = 1.0;
    CHECK(std::abs(ssim_frame(s1, s2) - ssim_frame(s2, s1)) < 1e-12);
}

TEST_CASE("radial spectrum: bin placement and Parseval partition") {
    Tensor flat = Tensor::full({16, 16}, 3.0);
    std::vector<double> bins = radial_spectrum(flat);
    CHECK(bins[0] == doctest::Approx(9.0 * 256.0 * 256.0).epsilon(1e-12));
    for (size_t r = 1; r < bins.size(); ++r) CHECK(std::abs(bins[r]) < 1e-12);

    Tensor wave({16, 16});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            wave[int64_t(i) * 16 + j] = std::cos(3.0 * 2.0 * kPi * j / 16.0);
    std::vector<double> wb = radial_spectrum(wave);
    CHECK(wb[3] > 1.0);
    for (size_t r = 0; r < wb.size(); ++r)
        if (r != 3) CHECK(wb[r] < 1e-12 * wb[3]);

    // Bin populations partition the grid.
    std::vector<int64_t> counts = radial_bin_counts(12, 16);
    int64_t total = 0;
    for (int64_t n : counts) total += n;
    CHECK(total == 12 * 16);

    // Sum of bin averages times populations recovers total power, which by
    // Parseval is H*W times the squared field norm.
    Rng rng(13);
    Tensor f = random_tensor(rng, {12, 16});
    std::vector<double> rb = radial_spectrum(f);
    REQUIRE(rb.size() == counts.size());
    double spectral = 0.0;
    for (size_t r = 0; r < rb.size(); ++r) spectral += rb[r] * double(counts[r]);
    double direct = 0.0;
    for (int64_t i = 0; i < f.numel(); ++i) direct += f[i] * f[i];
    direct *= 12.0 * 16.0;
    CHECK(std::abs(spectral - direct) / direct < 1e-8);
}

TEST_CASE("PSDD: identity, scale invariance, and the two-bin hand value") {
    Rng rng(17);
    Tensor x = random_tensor(rng, {16, 16});
    Tensor y = random_tensor(rng, {16, 16});
    CHECK(psdd_frames({x}, {x}, kr_default(16, 16)) == 0.0);

    double base = psdd_frames({x}, {y}, 8);
    Tensor x2(x.shape()), y2(y.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        x2[i] = 7.0 * x[i];
        y2[i] = 0.3 * y[i];
    }
    CHECK(std::abs(psdd_frames({x2}, {y2}, 8) - base) < 1e-12);
    CHECK(base > 0.0);

    double hand = psdd_from_profiles({0.75, 0.25}, {0.25, 0.75}, 2);
    CHECK(std::abs(hand - std::log(3.0)) < 1e-9);

    CHECK(kr_default(256, 256) == 220);
    CHECK(kr_default(64, 64) == int(radial_bin_counts(64, 64).size()));
    CHECK_THROWS_AS(psdd_from_profiles({1.0}, {1.0}, 2), ConfigError);
}

TEST_CASE("TKED: identity, temporal-mean invariance, and the hand case") {
    Rng rng(19);
    Tensor ref = random_tensor(rng, {5, 1, 3, 3});
    CHECK(tked({ref}, {ref}) == 0.0);

    // Adding a time-constant field leaves fluctuations untouched. Integer
    // data with T=2 keeps every intermediate exact.
    Tensor r2({2, 1, 2, 2}, {0, 1, 2, 4, 2, 3, 6, 8});
    Tensor shifted(r2.shape());
    Tensor offset({1, 2, 2}, {3, 7, 11, 5});
    for (int f = 0; f < 2; ++f)
        for (int64_t j = 0; j < 4; ++j)
            shifted[int64_t(f) * 4 + j] = r2[int64_t(f) * 4 + j] + offset[j];
    CHECK(tked({shifted}, {r2}) == 0.0);

    // ref frames {0,2} give TKE 1; pred frames {0,4} give TKE 4; score 9.
    Tensor a({2, 1, 1, 1}, {0.0, 2.0});
    Tensor b({2, 1, 1, 1}, {0.0, 4.0});
    CHECK(tked({b}, {a}) == 9.0);

    Tensor ma = tke_map_mean({a});
    REQUIRE(ma.numel() == 1);
    CHECK(ma[0] == 1.0);
    CHECK(tke_map_mean({a, b})[0] == 2.5);

    CHECK_THROWS_AS(tked({ref}, {random_tensor(rng, {5, 1, 3, 4})}), DataError);
}

TEST_CASE("mixing rate: exact exponential fixture recovers lambda = 0.2") {
    const int k = 20;
    std::vector<double> target(k + 1);
    for (int l = 0; l <= k; ++l) target[size_t(l)] = std::exp(-0.2 * l);
    std::vector<Tensor> trajs = exact_autocorr_trajs(target, 48);
    double lam = mixing_rate(trajs, k);
    CHECK(std::abs(lam - 0.2) < 1e-6);

    std::vector<double> cbar = autocorrelation(trajs, k);
    REQUIRE(cbar.size() == size_t(k + 1));
    CHECK(cbar[0] == 1.0);
    for (int l = 0; l <= k; ++l)
        CHECK(std::abs(cbar[size_t(l)] - target[size_t(l)]) < 1e-12);
}

TEST_CASE("mixing rate: constraint boundary and white-noise saturation") {
    // Perfectly persistent data drives the fit to the lambda = 0 boundary.
    const int k = 10;
    std::vector<double> ones(k + 1, 1.0);
    std::vector<Tensor> persistent = exact_autocorr_trajs(ones, 30);
    CHECK(mixing_rate(persistent, k) < 1e-6);

    // White-in-time data decorrelates immediately; the fit saturates high.
    Rng rng(23);
    std::vector<Tensor> white = {random_tensor(rng, {60, 1, 4, 4})};
    CHECK(mixing_rate(white, 20) > 2.0);

    // Constant data has no decorrelation to fit.
    std::vector<Tensor> conste = {Tensor::full({30, 1, 2, 2}, 1.5)};
    CHECK_THROWS_AS(mixing_rate(conste, 10), DataError);
    // Too few frames for the requested lag count.
    CHECK_THROWS_AS(mixing_rate(persistent, 15), DataError);

    CHECK(mixing_lags_default(320) == 20);
    CHECK(mixing_lags_default(9) == 4);
}

TEST_CASE("mixing-rate difference identities") {
    CHECK(mrd(0.2, 0.2) == 0.0);
    CHECK(mrd(0.4, 0.2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mrd(0.0, 0.2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(mrd(0.1, 0.0), DataError);
}

TEST_CASE("CRPS: single member, zero spread, and the double-sum oracle") {
    CHECK(crps_point({3.0}, 1.0) == 2.0);
    CHECK(crps_point({2.0, 2.0, 2.0}, 2.0) == 0.0);

    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> members(10);
        for (double& v : members) v = rng.normal();
        double y = rng.normal();
        double got = crps_point(members, y);
        double t1 = 0.0, t2 = 0.0;
        for (double a : members) t1 += std::abs(a - y);
        for (double a : members)
            for (double b : members) t2 += std::abs(a - b);
        double want = t1 / 10.0 - t2 / 200.0;
        CHECK(std::abs(got - want) < 1e-12);
        CHECK(got <= t1 / 10.0 + 1e-12);  // never above the ensemble MAE
        CHECK(got >= 0.0);
    }

    // Field version averages the pointwise scores.
    Tensor ref({2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor m1({2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(crps_traj({m1, m1}, ref) == 0.0);
    Tensor m2({2, 1, 1, 2}, {2.0, 3.0, 4.0, 5.0});
    // Members {x, x+1} vs y = x: mae 0.5, spread term 0.25.
    CHECK(std::abs(crps_traj({m1, m2}, ref) - 0.25) < 1e-15);
}

TEST_CASE("rollout evaluation report: self-comparison and structure") {
    std::vector<Tensor> ref = {smooth_traj(44, 16, 0.2, 31),
                               smooth_traj(44, 16, 0.25, 32)};
    MetricReport rep = evaluate_rollout(ref, ref);
    CHECK(rep.short_horizon == 40);
    CHECK(rep.long_horizon == 44);
    CHECK(rep.rl2.mean <= 1e-12);
    CHECK(rep.ssim.mean >= 1.0 - 1e-12);
    CHECK(rep.psdd.mean <= 1e-12);
    CHECK(rep.tked.mean <= 1e-12);
    CHECK(rep.mrd.mean <= 1e-12);
    CHECK(!rep.crps.has_value());
    REQUIRE(rep.rl2.per_traj.size() == 2);
    CHECK(rep.rl2.sem == 0.0);

    std::string table = rep.table();
    size_t p_rl2 = table.find("RL2");
    size_t p_ssim = table.find("SSIM");
    size_t p_psdd = table.find("PSDD");
    size_t p_tked = table.find("TKED");
    size_t p_mrd = table.find("MRD");
    REQUIRE(p_rl2 != std::string::npos);
    CHECK(p_rl2 < p_ssim);
    CHECK(p_ssim < p_psdd);
    CHECK(p_psdd < p_tked);
    CHECK(p_tked < p_mrd);
    CHECK(table.find("CRPS") == std::string::npos);
    CHECK(table.find("40 frames") != std::string::npos);

    std::string csv = rep.csv();
    CHECK(csv.substr(0, csv.find('\n')) == "traj,rl2,ssim,psdd,tked,mrd");

    MetricReport with_ens = evaluate_rollout(ref, ref, {ref, ref});
    REQUIRE(with_ens.crps.has_value());
    CHECK(with_ens.crps->mean == 0.0);
    CHECK(with_ens.table().find("CRPS") != std::string::npos);
    std::string ecsv = with_ens.csv();
    CHECK(ecsv.substr(0, ecsv.find('\n')) == "traj,rl2,ssim,psdd,tked,mrd,crps");

    std::vector<Tensor> short_set = {smooth_traj(10, 16, 0.2, 33)};
    MetricReport srep = evaluate_rollout(short_set, short_set);
    CHECK(srep.short_horizon == 10);

    CHECK_THROWS_AS(evaluate_rollout(ref, short_set), DataError);
    CHECK_THROWS_AS(evaluate_rollout({}, {}), DataError);
}
