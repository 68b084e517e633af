/// @file
/// @brief Tests for the pseudo-spectral vorticity solver: streamfunction
/// inversion, dealiased advection against finite differences, exact viscous
/// decay of a pure mode, conservation laws, and dataset generation.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "melisa/io.hpp"
#include "melisa/solver.hpp"

using namespace melisa;
using cplx = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

/// Naive O(N^3) 2D DFT returning coefficient-normalized modes, used as an
/// implementation-independent oracle.
std::vector<cplx> naive_dft2(const Tensor& f) {
    const int n = f.dim(0);
    std::vector<cplx> rows(size_t(n) * n), out(size_t(n) * n);
    for (int i = 0; i < n; ++i)
        for (int kj = 0; kj < n; ++kj) {
            cplx acc(0.0);
            for (int j = 0; j < n; ++j)
                acc += f[int64_t(i) * n + j] *
                       std::polar(1.0, -2.0 * kPi * kj * j / n);
            rows[size_t(i) * n + kj] = acc;
        }
    for (int ki = 0; ki < n; ++ki)
        for (int kj = 0; kj < n; ++kj) {
            cplx acc(0.0);
            for (int i = 0; i < n; ++i)
                acc += rows[size_t(i) * n + kj] *
                       std::polar(1.0, -2.0 * kPi * ki * i / n);
            out[size_t(ki) * n + kj] = acc / double(n) / double(n);
        }
    return out;
}

int wavenum(int j, int n) { return j <= n / 2 - 1 ? j : j - n; }

Tensor grid_field(int n, double (*f)(double, double)) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            t[int64_t(i) * n + j] = f(2.0 * kPi * j / n, 2.0 * kPi * i / n);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

double max_abs(const Tensor& a) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a[i]));
    return worst;
}

/// Centered periodic finite difference along an axis (0 = y rows, 1 = x cols).
Tensor fd_deriv(const Tensor& f, int axis) {
    const int n = f.dim(0);
    const double h = 2.0 * kPi / n;
    Tensor out({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int ip = axis == 0 ? (i + 1) % n : i;
            int im = axis == 0 ? (i + n - 1) % n : i;
            int jp = axis == 1 ? (j + 1) % n : j;
            int jm = axis == 1 ? (j + n - 1) % n : j;
            out[int64_t(i) * n + j] =
                (f[int64_t(ip) * n + jp] - f[int64_t(im) * n + jm]) / (2.0 * h);
        }
    return out;
}

SolverConfig test_config(int n, double nu, double dt, bool forcing) {
    SolverConfig cfg;
    cfg.grid = n;
    cfg.nu = nu;
    cfg.dt = dt;
    cfg.forcing = forcing;
    cfg.stride = 1;
    return cfg;
}

}  // namespace

TEST_CASE("streamfunction inversion recovers the analytic velocity") {
    KolmogorovSolver s(test_config(32, 0.01, 1e-3, false));
    s.set_vorticity(grid_field(32, [](double x, double) { return std::cos(x); }));
    auto [u, v] = s.velocity();
    Tensor want_v =
        grid_field(32, [](double x, double) { return std::sin(x); });
    CHECK(max_abs(u) < 1e-12);
    CHECK(max_abs_diff(v, want_v) < 1e-12);

    // psi = cos(x) reproduces the vorticity: omega = -lap(psi) = cos(x).
    s.set_vorticity(Tensor::zeros({32, 32}));
    auto [u0, v0] = s.velocity();
    CHECK(max_abs(u0) == 0.0);
    CHECK(max_abs(v0) == 0.0);
}

TEST_CASE("recovered velocity is spectrally divergence-free") {
    Rng rng(11);
    KolmogorovSolver s(test_config(32, 0.01, 1e-3, false));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    auto [u, v] = s.velocity();
    std::vector<cplx> uh = naive_dft2(u), vh = naive_dft2(v);
    double worst = 0.0;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            cplx d = cplx(0.0, double(wavenum(j, 32))) * uh[size_t(i) * 32 + j] +
                     cplx(0.0, double(wavenum(i, 32))) * vh[size_t(i) * 32 + j];
            worst = std::max(worst, std::abs(d));
        }
    CHECK(worst < 1e-10);
}

TEST_CASE("right-hand side: zero field, pure diffusion, and advection oracle") {
    KolmogorovSolver s(test_config(32, 0.01, 1e-3, false));
    s.set_vorticity(Tensor::zeros({32, 32}));
    CHECK(max_abs(s.rhs()) == 0.0);

    // Single mode k = (2,3): self-advection vanishes, leaving -nu |k|^2 omega.
    Tensor mode = grid_field(
        32, [](double x, double y) { return std::cos(2.0 * x + 3.0 * y); });
    s.set_vorticity(mode);
    Tensor want({32, 32});
    for (int64_t i = 0; i < want.numel(); ++i) want[i] = -0.01 * 13.0 * mode[i];
    CHECK(max_abs_diff(s.rhs(), want) < 1e-10);

    // cos(x) + cos(y): advection cancels analytically; the finite-difference
    // oracle agrees within O(h^2).
    KolmogorovSolver inv(test_config(64, 0.0, 1e-3, false));
    Tensor w = grid_field(
        64, [](double x, double y) { return std::cos(x) + std::cos(y); });
    inv.set_vorticity(w);
    auto [u, v] = inv.velocity();
    Tensor wx = fd_deriv(w, 1), wy = fd_deriv(w, 0);
    Tensor fd({64, 64});
    for (int64_t i = 0; i < fd.numel(); ++i)
        fd[i] = -(u[i] * wx[i] + v[i] * wy[i]);
    CHECK(max_abs_diff(inv.rhs(), fd) < 1e-3);

    // cos(x) + cos(2y) has the nonzero advection 1.5 sin(x) sin(2y).
    Tensor w2 = grid_field(
        64, [](double x, double y) { return std::cos(x) + std::cos(2.0 * y); });
    inv.set_vorticity(w2);
    Tensor analytic = grid_field(64, [](double x, double y) {
        return 1.5 * std::sin(x) * std::sin(2.0 * y);
    });
    CHECK(max_abs_diff(inv.rhs(), analytic) < 1e-10);
    auto [u2, v2] = inv.velocity();
    Tensor w2x = fd_deriv(w2, 1), w2y = fd_deriv(w2, 0);
    Tensor fd2({64, 64});
    for (int64_t i = 0; i < fd2.numel(); ++i)
        fd2[i] = -(u2[i] * w2x[i] + v2[i] * w2y[i]);
    CHECK(max_abs_diff(inv.rhs(), fd2) < 2e-2);
}

TEST_CASE("a pure Fourier mode decays exactly at rate 2 nu") {
    KolmogorovSolver s(test_config(32, 1e-2, 1e-3, false));
    Tensor w0 = grid_field(
        32, [](double x, double y) { return 2.0 * std::cos(x) * std::cos(y); });
    s.set_vorticity(w0);
    for (int k = 0; k < 100; ++k) s.step();
    double decay = std::exp(-2.0 * 1e-2 * 0.1);
    Tensor want({32, 32});
    for (int64_t i = 0; i < want.numel(); ++i) want[i] = decay * w0[i];
    CHECK(max_abs_diff(s.vorticity(), want) / max_abs(want) < 1e-6);
}

TEST_CASE("first step from rest injects dt times the forcing curl") {
    SolverConfig cfg = test_config(32, 1e-2, 1e-3, true);
    cfg.forcing_n = 4;
    KolmogorovSolver s(cfg);
    s.set_vorticity(Tensor::zeros({32, 32}));
    s.step();
    Tensor want = grid_field(32, [](double, double y) {
        return -1e-3 * 4.0 * std::cos(4.0 * y);
    });
    CHECK(max_abs_diff(s.vorticity(), want) < 1e-5);
}

TEST_CASE("unforced viscous flow: enstrophy decays, symmetry holds") {
    Rng rng(21);
    KolmogorovSolver s(test_config(32, 0.02, 2e-3, false));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    double prev = s.enstrophy();
    double prev_e = s.energy();
    for (int k = 0; k < 100; ++k) {
        s.step();
        double ens = s.enstrophy();
        CHECK(ens <= prev * (1.0 + 1e-12));
        prev = ens;
        double e = s.energy();
        CHECK(e <= prev_e * (1.0 + 1e-12));
        prev_e = e;
        CHECK(s.max_spectral_asymmetry() < 1e-12);
    }
}

TEST_CASE("inviscid unforced flow conserves kinetic energy") {
    Rng rng(23);
    KolmogorovSolver s(test_config(32, 0.0, 1e-3, false));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    double e0 = s.energy();
    for (int k = 0; k < 100; ++k) s.step();
    CHECK(std::abs(s.energy() - e0) / e0 < 1e-6);
}

TEST_CASE("dealiasing zeroes every mode above the 2/3 cutoff") {
    Rng rng(29);
    KolmogorovSolver s(test_config(32, 0.02, 2e-3, true));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    const int kmax = 32 / 3;
    auto check_clean = [&](const Tensor& field, double tol) {
        std::vector<cplx> spec = naive_dft2(field);
        double worst = 0.0;
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j)
                if (std::abs(wavenum(i, 32)) > kmax ||
                    std::abs(wavenum(j, 32)) > kmax)
                    worst = std::max(worst, std::abs(spec[size_t(i) * 32 + j]));
        CHECK(worst < tol);
    };
    check_clean(s.nonlinear_rhs(), 1e-13);
    for (int k = 0; k < 5; ++k) s.step();
    check_clean(s.nonlinear_rhs(), 1e-13);
    // The state itself never picks up energy beyond the cutoff.
    check_clean(s.vorticity(), 1e-12);
}

TEST_CASE("forced runs keep the vorticity mean-free") {
    Rng rng(31);
    KolmogorovSolver s(test_config(32, 0.025, 2e-3, true));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    for (int k = 0; k < 50; ++k) {
        s.step();
        Tensor w = s.vorticity();
        double mean = 0.0;
        for (int64_t i = 0; i < w.numel(); ++i) mean += w[i];
        CHECK(std::abs(mean / double(w.numel())) < 1e-12);
    }
}

TEST_CASE("oversized timestep trips the CFL guard") {
    Rng rng(37);
    KolmogorovSolver s(test_config(32, 0.01, 1.0, false));
    s.set_vorticity(band_limited_vorticity(32, 4.0, rng));
    CHECK_THROWS_AS(s.step(), NumericalError);
}

TEST_CASE("band-limited initial field: unit RMS, zero mean, peak near 4") {
    Rng rng(41);
    Tensor w = band_limited_vorticity(32, 4.0, rng);
    double mean = 0.0, rms = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) {
        mean += w[i];
        rms += w[i] * w[i];
    }
    mean /= double(w.numel());
    rms = std::sqrt(rms / double(w.numel()));
    CHECK(std::abs(mean) < 1e-13);
    CHECK(std::abs(rms - 1.0) < 1e-12);

    std::vector<cplx> spec = naive_dft2(w);
    std::vector<double> shell(17, 0.0);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            double k = std::hypot(double(wavenum(i, 32)), double(wavenum(j, 32)));
            int r = int(std::lround(k));
            if (r < 17) shell[r] += std::norm(spec[size_t(i) * 32 + j]);
        }
    int peak = 0;
    for (int r = 1; r < 17; ++r)
        if (shell[r] > shell[peak]) peak = r;
    CHECK(peak >= 3);
    CHECK(peak <= 5);

    Rng rng2(41);
    Tensor w2 = band_limited_vorticity(32, 4.0, rng2);
    for (int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == w2[i]);
}

TEST_CASE("trajectory generation is seeded, mean-free, and shaped [T,1,N,N]") {
    SolverConfig cfg = test_config(32, 0.02, 2e-3, true);
    cfg.stride = 5;
    std::vector<Tensor> a = generate_trajectories(cfg, 2, 6, 10, 99);
    std::vector<Tensor> b = generate_trajectories(cfg, 2, 6, 10, 99);
    REQUIRE(a.size() == 2);
    for (int tr = 0; tr < 2; ++tr) {
        REQUIRE(a[tr].shape() == std::vector<int>({6, 1, 32, 32}));
        CHECK(a[tr].all_finite());
        for (int64_t j = 0; j < a[tr].numel(); ++j) CHECK(a[tr][j] == b[tr][j]);
        for (int f = 0; f < 6; ++f) {
            double mean = 0.0;
            for (int64_t j = 0; j < 1024; ++j)
                mean += a[tr][int64_t(f) * 1024 + j];
            CHECK(std::abs(mean / 1024.0) < 1e-12);
        }
    }

    // Trajectory j of seed s matches trajectory 0 of seed s + j.
    std::vector<Tensor> c = generate_trajectories(cfg, 1, 6, 10, 100);
    for (int64_t j = 0; j < c[0].numel(); ++j) CHECK(c[0][j] == a[1][j]);

    CHECK_THROWS_AS(generate_trajectories(cfg, 0, 6, 10, 1), ConfigError);
    CHECK_THROWS_AS(generate_trajectories(cfg, 1, 0, 10, 1), ConfigError);
}

TEST_CASE("vorticity field validation") {
    KolmogorovSolver s(test_config(32, 0.01, 1e-3, false));
    CHECK_THROWS_AS(s.set_vorticity(Tensor::zeros({16, 16})), DataError);
    CHECK_THROWS_AS(s.set_vorticity(Tensor::zeros({32})), DataError);
    Tensor bad = Tensor::zeros({32, 32});
    bad[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(s.set_vorticity(bad), DataError);

    SolverConfig cfg;
    cfg.grid = 48;  // not a power of two
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.grid = 64;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("band projection: identity on resolved fields, removal elsewhere") {
    // A band-limited zero-mean field passes through unchanged.
    Rng rng(12);
    Tensor ic = band_limited_vorticity(32, 4.0, rng);
    Tensor same = band_project(ic);
    double worst = 0.0;
    for (int64_t i = 0; i < ic.numel(); ++i)
        worst = std::max(worst, std::abs(same[i] - ic[i]));
    CHECK(worst < 1e-12);

    // In-band content survives while a beyond-cutoff mode and a constant
    // offset are removed exactly. kmax for n=32 is 10.
    const int n = 32;
    Tensor mixed({n, n}), keep({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double x = 2.0 * kPi * j / n, y = 2.0 * kPi * i / n;
            keep[int64_t(i) * n + j] = std::sin(3.0 * x) * std::cos(2.0 * y);
            mixed[int64_t(i) * n + j] =
                keep[int64_t(i) * n + j] + 0.7 * std::cos(14.0 * x) + 2.5;
        }
    Tensor proj = band_project(mixed);
    worst = 0.0;
    for (int64_t i = 0; i < proj.numel(); ++i)
        worst = std::max(worst, std::abs(proj[i] - keep[i]));
    CHECK(worst < 1e-12);

    // Batched leading dims project each trailing slice independently.
    Tensor batch({2, 1, n, n});
    for (int64_t i = 0; i < mixed.numel(); ++i) {
        batch[i] = mixed[i];
        batch[mixed.numel() + i] = keep[i];
    }
    Tensor bp = band_project(batch);
    worst = 0.0;
    for (int64_t i = 0; i < mixed.numel(); ++i) {
        worst = std::max(worst, std::abs(bp[i] - keep[i]));
        worst = std::max(worst, std::abs(bp[mixed.numel() + i] - keep[i]));
    }
    CHECK(worst < 1e-12);

    CHECK_THROWS_AS(band_project(Tensor::zeros({32})), DataError);
}
