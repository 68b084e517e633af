#include "melisa/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>

#include "melisa/io.hpp"

namespace melisa {

namespace {

void check_pair(const Tensor& pred, const Tensor& ref, const char* what) {
    if (!pred.same_shape(ref))
        throw DataError(std::string(what) + ": shape mismatch " +
                        pred.shape_str() + " vs " + ref.shape_str());
}

std::vector<double> gaussian_kernel(int window, double sigma) {
    if (window < 1 || window % 2 == 0)
        throw ConfigError("SSIM window must be a positive odd size");
    if (!(sigma > 0.0)) throw ConfigError("SSIM sigma must be positive");
    std::vector<double> k(window);
    double sum = 0.0;
    int half = window / 2;
    for (int i = 0; i < window; ++i) {
        double d = i - half;
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Separable zero-padded same convolution of a [H,W] field.
Tensor smooth(const Tensor& f, const std::vector<double>& k) {
    const int h = f.dim(0), w = f.dim(1);
    const int half = int(k.size()) / 2;
    Tensor rows({h, w}), out({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -half; d <= half; ++d) {
                int jj = j + d;
                if (jj >= 0 && jj < w)
                    acc += k[size_t(d + half)] * f[int64_t(i) * w + jj];
            }
            rows[int64_t(i) * w + j] = acc;
        }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -half; d <= half; ++d) {
                int ii = i + d;
                if (ii >= 0 && ii < h)
                    acc += k[size_t(d + half)] * rows[int64_t(ii) * w + j];
            }
            out[int64_t(i) * w + j] = acc;
        }
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

/// TKE map of one trajectory [T,C,H,W]: per-position temporal variance about
/// the per-position temporal mean, flattened to [C*H*W].
std::vector<double> tke_map(const Tensor& traj) {
    const int t = traj.dim(0);
    const int64_t p = traj.numel() / t;
    std::vector<double> mean(p, 0.0), var(p, 0.0);
    for (int f = 0; f < t; ++f)
        for (int64_t j = 0; j < p; ++j) mean[j] += traj[int64_t(f) * p + j];
    for (int64_t j = 0; j < p; ++j) mean[j] /= double(t);
    for (int f = 0; f < t; ++f)
        for (int64_t j = 0; j < p; ++j) {
            double d = traj[int64_t(f) * p + j] - mean[j];
            var[j] += d * d;
        }
    for (int64_t j = 0; j < p; ++j) var[j] /= double(t);
    return var;
}

void check_traj_set(const std::vector<Tensor>& trajs, const char* what) {
    if (trajs.empty()) throw DataError(std::string(what) + ": empty set");
    for (const Tensor& t : trajs) {
        if (t.rank() != 4)
            throw DataError(std::string(what) +
                            ": trajectories must be [T,C,H,W], got " +
                            t.shape_str());
        if (!t.same_shape(trajs[0]))
            throw DataError(std::string(what) +
                            ": trajectories differ in shape");
    }
}

double golden_section_lambda(const std::vector<double>& cbar) {
    auto sse = [&](double lam) {
        double acc = 0.0;
        for (size_t l = 0; l < cbar.size(); ++l) {
            double d = cbar[l] - std::exp(-lam * double(l));
            acc += d * d;
        }
        return acc;
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 10.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = sse(c), fd = sse(d);
    while (b - a > 1e-12) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    return 0.5 * (a + b);
}

std::string format_row(const std::string& name,
                       const std::vector<std::string>& cells) {
    std::string row;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-8s", name.c_str());
    row += buf;
    for (const std::string& c : cells) {
        std::snprintf(buf, sizeof buf, "  %-16s", c.c_str());
        row += buf;
    }
    while (!row.empty() && row.back() == ' ') row.pop_back();
    row += '\n';
    return row;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

double rl2_traj(const Tensor& pred, const Tensor& ref, int t_eval) {
    check_pair(pred, ref, "rl2");
    if (pred.rank() < 1) throw DataError("rl2: scalar input");
    if (t_eval < 1 || t_eval > pred.dim(0))
        throw ConfigError("rl2: evaluation horizon " + std::to_string(t_eval) +
                          " outside 1.." + std::to_string(pred.dim(0)));
    int64_t count = pred.numel() / pred.dim(0) * t_eval;
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        double d = pred[i] - ref[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + kMetricEps);
}

double ssim_frame(const Tensor& ref, const Tensor& pred, int window,
                  double sigma) {
    check_pair(pred, ref, "ssim");
    if (ref.rank() != 2) throw DataError("ssim: frames must be [H,W]");
    double lo = ref[0], hi = ref[0];
    for (int64_t i = 0; i < ref.numel(); ++i) {
        lo = std::min(lo, ref[i]);
        hi = std::max(hi, ref[i]);
    }
    double range = hi - lo;
    if (range == 0.0) {
        for (int64_t i = 0; i < ref.numel(); ++i)
            if (std::abs(pred[i] - ref[i]) > 1e-12) return 0.0;
        return 1.0;
    }
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    std::vector<double> k = gaussian_kernel(window, sigma);
    Tensor mx = smooth(ref, k), my = smooth(pred, k);
    Tensor sxx = smooth(hadamard(ref, ref), k);
    Tensor syy = smooth(hadamard(pred, pred), k);
    Tensor sxy = smooth(hadamard(ref, pred), k);
    double acc = 0.0;
    for (int64_t i = 0; i < ref.numel(); ++i) {
        double vx = sxx[i] - mx[i] * mx[i];
        double vy = syy[i] - my[i] * my[i];
        double cxy = sxy[i] - mx[i] * my[i];
        double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
        double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return acc / double(ref.numel());
}

std::vector<int64_t> radial_bin_counts(int height, int width) {
    if (height < 1 || width < 1) throw ConfigError("empty frame");
    const int ci = height / 2, cj = width / 2;
    double corner = std::sqrt(double(ci) * ci + double(cj) * cj);
    std::vector<int64_t> counts(size_t(corner) + 1, 0);
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            double di = i - ci, dj = j - cj;
            size_t r = size_t(std::sqrt(di * di + dj * dj));
            counts[r] += 1;
        }
    return counts;
}

std::vector<double> radial_spectrum(const Tensor& frame) {
    if (frame.rank() != 2) throw DataError("radial_spectrum: frame must be [H,W]");
    const int h = frame.dim(0), w = frame.dim(1);
    const int64_t m = int64_t(h) * w;
    std::vector<std::complex<double>> in(m), out(m);
    for (int64_t i = 0; i < m; ++i) in[i] = {frame[i], 0.0};
    fftw_plan p = fftw_plan_dft_2d(
        h, w, reinterpret_cast<fftw_complex*>(in.data()),
        reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
        FFTW_ESTIMATE);
    fftw_execute(p);
    fftw_destroy_plan(p);

    const int ci = h / 2, cj = w / 2;
    std::vector<int64_t> counts = radial_bin_counts(h, w);
    std::vector<double> bins(counts.size(), 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            // fftshift: the spectrum cell at (i,j) is mode ((i-ci) mod H,
            // (j-cj) mod W).
            int si = (i - ci + h) % h, sj = (j - cj + w) % w;
            double di = i - ci, dj = j - cj;
            size_t r = size_t(std::sqrt(di * di + dj * dj));
            bins[r] += std::norm(out[int64_t(si) * w + sj]);
        }
    for (size_t r = 0; r < bins.size(); ++r) bins[r] /= double(counts[r]);
    return bins;
}

int kr_default(int height, int width) {
    if (height == 256 && width == 256) return 220;
    return int(radial_bin_counts(height, width).size());
}

double psdd_from_profiles(const std::vector<double>& px,
                          const std::vector<double>& py, int k_r) {
    if (k_r < 1 || size_t(k_r) > px.size() || size_t(k_r) > py.size())
        throw ConfigError("psdd: retained bin count " + std::to_string(k_r) +
                          " outside the available profile");
    double sx = 0.0, sy = 0.0;
    for (int k = 0; k < k_r; ++k) {
        sx += px[size_t(k)];
        sy += py[size_t(k)];
    }
    sx += kMetricEps;
    sy += kMetricEps;
    double acc = 0.0;
    for (int k = 0; k < k_r; ++k)
        acc += std::abs(std::log(px[size_t(k)] / sx + kMetricEps) -
                        std::log(py[size_t(k)] / sy + kMetricEps));
    return acc / double(k_r);
}

double psdd_frames(const std::vector<Tensor>& pred,
                   const std::vector<Tensor>& ref, int k_r) {
    if (pred.size() != ref.size() || pred.empty())
        throw DataError("psdd: need matching nonempty frame sequences");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        check_pair(pred[i], ref[i], "psdd");
        acc += psdd_from_profiles(radial_spectrum(pred[i]),
                                  radial_spectrum(ref[i]), k_r);
    }
    return acc / double(pred.size());
}

Tensor tke_map_mean(const std::vector<Tensor>& trajs) {
    check_traj_set(trajs, "tke_map");
    Tensor out({trajs[0].dim(1), trajs[0].dim(2), trajs[0].dim(3)});
    for (const Tensor& tr : trajs) {
        std::vector<double> m = tke_map(tr);
        for (int64_t j = 0; j < out.numel(); ++j) out[j] += m[size_t(j)];
    }
    for (int64_t j = 0; j < out.numel(); ++j) out[j] /= double(trajs.size());
    return out;
}

double tked(const std::vector<Tensor>& pred, const std::vector<Tensor>& ref) {
    check_traj_set(ref, "tked");
    check_traj_set(pred, "tked");
    if (pred.size() != ref.size() || !pred[0].same_shape(ref[0]))
        throw DataError("tked: prediction and reference sets differ");
    const int64_t p = ref[0].numel() / ref[0].dim(0);
    std::vector<double> map_p(p, 0.0), map_r(p, 0.0);
    for (size_t b = 0; b < ref.size(); ++b) {
        std::vector<double> tp = tke_map(pred[b]), tr = tke_map(ref[b]);
        for (int64_t j = 0; j < p; ++j) {
            map_p[j] += tp[j];
            map_r[j] += tr[j];
        }
    }
    double num = 0.0, den = 0.0;
    for (int64_t j = 0; j < p; ++j) {
        double dp = map_p[j] / double(pred.size());
        double dr = map_r[j] / double(ref.size());
        num += (dp - dr) * (dp - dr);
        den += dr;
    }
    num /= double(p);
    den /= double(p);
    if (den == 0.0) {
        if (num == 0.0) return 0.0;
        throw DataError("tked: reference has zero turbulent energy");
    }
    return num / den;
}

int mixing_lags_default(int frames) {
    return std::min(20, (frames - 1) / 2);
}

std::vector<double> autocorrelation(const std::vector<Tensor>& trajs, int lags) {
    check_traj_set(trajs, "autocorrelation");
    const int t = trajs[0].dim(0);
    if (lags < 1) throw ConfigError("autocorrelation: need at least one lag");
    if (t <= 2 * lags)
        throw DataError("autocorrelation: " + std::to_string(t) +
                        " frames cannot support " + std::to_string(lags) +
                        " lags (need T > 2K)");
    const int64_t p = trajs[0].numel() / t;
    double mean = 0.0;
    for (const Tensor& tr : trajs)
        for (int64_t i = 0; i < tr.numel(); ++i) mean += tr[i];
    mean /= double(trajs.size()) * double(trajs[0].numel());

    std::vector<double> chat(size_t(lags) + 1, 0.0);
    for (int l = 0; l <= lags; ++l) {
        const int ml = t - lags - l;
        double acc = 0.0;
        for (const Tensor& tr : trajs)
            for (int k = 0; k < ml; ++k)
                for (int64_t j = 0; j < p; ++j)
                    acc += (tr[int64_t(k) * p + j] - mean) *
                           (tr[int64_t(k + l) * p + j] - mean);
        chat[size_t(l)] = acc / (double(trajs.size()) * double(ml) * double(p));
    }
    if (chat[0] == 0.0)
        throw DataError("autocorrelation: constant data has no decorrelation");
    std::vector<double> cbar(chat.size());
    for (size_t l = 0; l < chat.size(); ++l) cbar[l] = chat[l] / chat[0];
    return cbar;
}

double mixing_rate(const std::vector<Tensor>& trajs, int lags) {
    return golden_section_lambda(autocorrelation(trajs, lags));
}

double mrd(double lambda_pred, double lambda_gt) {
    if (!(lambda_gt > 0.0))
        throw DataError("mrd: ground-truth mixing rate must be positive");
    return std::abs(lambda_pred - lambda_gt) / lambda_gt;
}

double crps_point(const std::vector<double>& members, double y) {
    const size_t m = members.size();
    if (m == 0) throw ConfigError("crps: empty ensemble");
    double mae = 0.0;
    for (double x : members) mae += std::abs(x - y);
    mae /= double(m);
    double spread = 0.0;
    for (double a : members)
        for (double b : members) spread += std::abs(a - b);
    spread /= 2.0 * double(m) * double(m);
    double score = mae - spread;
    if (score > mae + 1e-12)
        throw InternalError("crps exceeded the ensemble MAE");
    return score;
}

double crps_traj(const std::vector<Tensor>& members, const Tensor& ref) {
    if (members.empty()) throw ConfigError("crps: empty ensemble");
    for (const Tensor& m : members) check_pair(m, ref, "crps");
    std::vector<double> vals(members.size());
    double acc = 0.0;
    for (int64_t i = 0; i < ref.numel(); ++i) {
        for (size_t n = 0; n < members.size(); ++n) vals[n] = members[n][i];
        acc += crps_point(vals, ref[i]);
    }
    return acc / double(ref.numel());
}

MetricSummary MetricSummary::of(std::vector<double> values) {
    MetricSummary s;
    s.per_traj = std::move(values);
    const size_t n = s.per_traj.size();
    if (n == 0) throw InternalError("empty metric summary");
    for (double v : s.per_traj) s.mean += v;
    s.mean /= double(n);
    if (n > 1) {
        double var = 0.0;
        for (double v : s.per_traj) var += (v - s.mean) * (v - s.mean);
        s.sem = std::sqrt(var / double(n - 1)) / std::sqrt(double(n));
    }
    return s;
}

MetricReport evaluate_rollout(
    const std::vector<Tensor>& pred, const std::vector<Tensor>& ref,
    const std::vector<std::vector<Tensor>>& ensemble) {
    check_traj_set(ref, "evaluate");
    check_traj_set(pred, "evaluate");
    if (pred.size() != ref.size() || !pred[0].same_shape(ref[0]))
        throw DataError("evaluate: prediction and reference sets differ");
    for (const auto& member : ensemble) {
        check_traj_set(member, "evaluate ensemble");
        if (member.size() != ref.size() || !member[0].same_shape(ref[0]))
            throw DataError("evaluate: ensemble member set differs from the "
                            "reference set");
    }
    const size_t b = ref.size();
    const int t = ref[0].dim(0), c = ref[0].dim(1);
    const int h = ref[0].dim(2), w = ref[0].dim(3);

    MetricReport rep;
    rep.short_horizon = std::min(40, t);
    rep.long_horizon = t;
    const int k_r = kr_default(h, w);
    const int lags = mixing_lags_default(t);

    std::vector<double> v_rl2, v_ssim, v_psdd, v_tked, v_mrd, v_crps;
    for (size_t j = 0; j < b; ++j) {
        v_rl2.push_back(rl2_traj(pred[j], ref[j], rep.short_horizon));

        double sacc = 0.0;
        for (int f = 0; f < rep.short_horizon; ++f)
            for (int ch = 0; ch < c; ++ch) {
                Tensor rf({h, w}), pf({h, w});
                int64_t off = (int64_t(f) * c + ch) * h * w;
                std::memcpy(rf.data(), ref[j].data() + off,
                            sizeof(double) * h * w);
                std::memcpy(pf.data(), pred[j].data() + off,
                            sizeof(double) * h * w);
                sacc += ssim_frame(rf, pf);
            }
        v_ssim.push_back(sacc / double(rep.short_horizon * c));

        double pacc = 0.0;
        for (int f = 0; f < t; ++f) {
            // Channels aggregate into one power profile before radial
            // normalization.
            std::vector<double> prof_p, prof_r;
            for (int ch = 0; ch < c; ++ch) {
                Tensor rf({h, w}), pf({h, w});
                int64_t off = (int64_t(f) * c + ch) * h * w;
                std::memcpy(rf.data(), ref[j].data() + off,
                            sizeof(double) * h * w);
                std::memcpy(pf.data(), pred[j].data() + off,
                            sizeof(double) * h * w);
                std::vector<double> sp = radial_spectrum(pf);
                std::vector<double> sr = radial_spectrum(rf);
                if (prof_p.empty()) {
                    prof_p.assign(sp.size(), 0.0);
                    prof_r.assign(sr.size(), 0.0);
                }
                for (size_t r = 0; r < sp.size(); ++r) {
                    prof_p[r] += sp[r];
                    prof_r[r] += sr[r];
                }
            }
            pacc += psdd_from_profiles(prof_p, prof_r, k_r);
        }
        v_psdd.push_back(pacc / double(t));

        v_tked.push_back(tked({pred[j]}, {ref[j]}));
        double lam_gt = mixing_rate({ref[j]}, lags);
        double lam_pr = mixing_rate({pred[j]}, lags);
        v_mrd.push_back(mrd(lam_pr, lam_gt));

        if (!ensemble.empty()) {
            std::vector<Tensor> members;
            for (const auto& member : ensemble) members.push_back(member[j]);
            v_crps.push_back(crps_traj(members, ref[j]));
        }
    }
    rep.rl2 = MetricSummary::of(std::move(v_rl2));
    rep.ssim = MetricSummary::of(std::move(v_ssim));
    rep.psdd = MetricSummary::of(std::move(v_psdd));
    rep.tked = MetricSummary::of(std::move(v_tked));
    rep.mrd = MetricSummary::of(std::move(v_mrd));
    if (!ensemble.empty()) rep.crps = MetricSummary::of(std::move(v_crps));
    return rep;
}

std::string MetricReport::table() const {
    std::vector<const MetricSummary*> cols = {&rl2, &ssim, &psdd, &tked, &mrd};
    std::vector<std::string> names = {"RL2", "SSIM", "PSDD", "TKED", "MRD"};
    if (crps) {
        cols.push_back(&*crps);
        names.push_back("CRPS");
    }
    std::string out;
    out += "short horizon (RL2, SSIM): first " +
           std::to_string(short_horizon) + " frames; long horizon " +
           "(PSDD, TKED, MRD): " + std::to_string(long_horizon) + " frames\n";
    out += format_row("", names);
    for (size_t j = 0; j < rl2.per_traj.size(); ++j) {
        std::vector<std::string> cells;
        for (const MetricSummary* s : cols)
            cells.push_back(short_num(s->per_traj[j]));
        out += format_row("traj " + std::to_string(j), cells);
    }
    std::vector<std::string> agg;
    for (const MetricSummary* s : cols)
        agg.push_back(short_num(s->mean) + " +- " + short_num(s->sem));
    out += format_row("mean", agg);
    return out;
}

std::string MetricReport::csv() const {
    std::vector<const MetricSummary*> cols = {&rl2, &ssim, &psdd, &tked, &mrd};
    std::string out = "traj,rl2,ssim,psdd,tked,mrd";
    if (crps) {
        cols.push_back(&*crps);
        out += ",crps";
    }
    out += '\n';
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (size_t j = 0; j < rl2.per_traj.size(); ++j) {
        out += std::to_string(j);
        for (const MetricSummary* s : cols) out += "," + num(s->per_traj[j]);
        out += '\n';
    }
    out += "mean";
    for (const MetricSummary* s : cols) out += "," + num(s->mean);
    out += "\nsem";
    for (const MetricSummary* s : cols) out += "," + num(s->sem);
    out += '\n';
    return out;
}

}  // namespace melisa
