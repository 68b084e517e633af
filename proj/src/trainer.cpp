#include "melisa/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "melisa/io.hpp"
#include "melisa/kernels.hpp"

namespace melisa {

ScheduleKind schedule_from_string(const std::string& s) {
    if (s == "constant") return ScheduleKind::Constant;
    if (s == "linear") return ScheduleKind::LinearDecay;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw ConfigError("unknown schedule '" + s +
                      "' (expected constant, linear or cosine)");
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "muon") return OptimizerKind::Muon;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam or muon)");
}

double lr_at(ScheduleKind kind, double eta, int64_t step, int64_t total) {
    if (step < 0 || step > total || total <= 0)
        throw InternalError("schedule step out of range");
    double frac = double(step) / double(total);
    switch (kind) {
        case ScheduleKind::Constant: return eta;
        case ScheduleKind::LinearDecay: return eta * (1.0 - frac);
        case ScheduleKind::Cosine:
            return eta * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    }
    throw InternalError("unreachable schedule kind");
}

Tensor sample_window(const Dataset& ds, int window, Rng& rng) {
    if (ds.trajs.empty()) throw DataError("dataset is empty");
    uint64_t total = 0;
    for (const Tensor& t : ds.trajs) {
        if (t.rank() != 4) throw DataError("trajectories must be [T,C,H,W]");
        if (t.dim(0) < window)
            throw DataError("trajectory shorter than the window");
        total += uint64_t(t.dim(0) - window + 1);
    }
    uint64_t k = rng.uniform_int(total);
    for (const Tensor& t : ds.trajs) {
        uint64_t starts = uint64_t(t.dim(0) - window + 1);
        if (k >= starts) {
            k -= starts;
            continue;
        }
        int C = t.dim(1), H = t.dim(2), Wd = t.dim(3);
        int64_t frame = int64_t(C) * H * Wd;
        Tensor w({window * C, H, Wd});
        const double* src = t.data() + int64_t(k) * frame;
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = src[i];
        return w;
    }
    throw InternalError("window index out of range");
}

// ---- optimizers -------------------------------------------------------------

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_grads(const ParamStore& ps, const std::vector<Tensor>& grads) {
    if (grads.size() != ps.size())
        throw InternalError("gradient count does not match parameters");
    for (size_t i = 0; i < grads.size(); ++i)
        if (!grads[i].same_shape(ps.value(int(i))))
            throw InternalError("gradient shape mismatch for " + ps.name(int(i)));
}

/// Single-tensor bias-corrected Adam update with step counter `t`.
void adam_update_one(Tensor& p, const Tensor& g, Tensor& m, Tensor& v,
                     int64_t t, double lr) {
    double c1 = 1.0 - std::pow(kBeta1, double(t));
    double c2 = 1.0 - std::pow(kBeta2, double(t));
    for (int64_t j = 0; j < p.numel(); ++j) {
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
        double mh = m[j] / c1;
        double vh = v[j] / c2;
        p[j] -= lr * mh / (std::sqrt(vh) + kAdamEps);
    }
}

}  // namespace

void AdamState::init(const ParamStore& ps) {
    m.clear();
    v.clear();
    for (size_t i = 0; i < ps.size(); ++i) {
        m.push_back(Tensor::zeros(ps.value(int(i)).shape()));
        v.push_back(Tensor::zeros(ps.value(int(i)).shape()));
    }
    step = 0;
}

void adam_step(ParamStore& ps, const std::vector<Tensor>& grads, AdamState& st,
               double lr) {
    check_grads(ps, grads);
    st.step += 1;
    for (size_t i = 0; i < ps.size(); ++i)
        adam_update_one(ps.value(int(i)), grads[i], st.m[i], st.v[i], st.step,
                        lr);
}

Tensor orthogonalize_ns5(const Tensor& g) {
    if (g.rank() != 2) throw InternalError("orthogonalize_ns5 expects a matrix");
    const int n = g.dim(0), m = g.dim(1);
    double fro2 = 0.0;
    for (int64_t j = 0; j < g.numel(); ++j) fro2 += g[j] * g[j];
    if (fro2 == 0.0) return Tensor::zeros({n, m});
    double inv = 1.0 / std::sqrt(fro2);
    Tensor X({n, m});
    for (int64_t j = 0; j < g.numel(); ++j) X[j] = g[j] * inv;

    const double a = 15.0 / 8.0, b = -10.0 / 8.0, c = 3.0 / 8.0;
    Tensor A({n, n}), AX({n, m}), AAX({n, m}), next({n, m});
    for (int it = 0; it < 5; ++it) {
        kernels::gemm(n, m, n, X.data(), X.data(), A.data(), false, true);
        kernels::gemm(n, n, m, A.data(), X.data(), AX.data());
        kernels::gemm(n, n, m, A.data(), AX.data(), AAX.data());
        for (int64_t j = 0; j < X.numel(); ++j)
            next[j] = a * X[j] + b * AX[j] + c * AAX[j];
        std::swap(X, next);
    }
    return X;
}

void MuonState::init(const ParamStore& ps) {
    momentum.clear();
    for (size_t i = 0; i < ps.size(); ++i) {
        const Tensor& p = ps.value(int(i));
        momentum.push_back(p.rank() >= 2 ? Tensor::zeros(p.shape()) : Tensor());
    }
    fallback.init(ps);
    step = 0;
}

void muon_step(ParamStore& ps, const std::vector<Tensor>& grads, MuonState& st,
               double lr) {
    check_grads(ps, grads);
    st.step += 1;
    st.fallback.step = st.step;
    for (size_t i = 0; i < ps.size(); ++i) {
        Tensor& p = ps.value(int(i));
        if (p.rank() < 2) {
            adam_update_one(p, grads[i], st.fallback.m[i], st.fallback.v[i],
                            st.step, lr);
            continue;
        }
        Tensor& buf = st.momentum[i];
        for (int64_t j = 0; j < p.numel(); ++j)
            buf[j] = st.mu * buf[j] + grads[i][j];
        int rows = p.dim(0);
        int cols = int(p.numel() / rows);
        Tensor O = orthogonalize_ns5(buf.reshaped({rows, cols}));
        for (int64_t j = 0; j < p.numel(); ++j) p[j] -= lr * O[j];
    }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double norm2 = 0.0;
    for (const Tensor& g : grads)
        for (int64_t j = 0; j < g.numel(); ++j) norm2 += g[j] * g[j];
    double norm = std::sqrt(norm2);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (Tensor& g : grads)
            for (int64_t j = 0; j < g.numel(); ++j) g[j] *= s;
    }
    return norm;
}

// ---- training loop ----------------------------------------------------------

WindowDraw draw_window(const Dataset& ds, const TrainConfig& cfg, Rng& rng) {
    WindowDraw d;
    d.clean = sample_window(ds, cfg.net.window, rng);
    auto [t, r] = cfg.time_sampler.sample(rng);
    d.t = t;
    d.r = r;
    d.mask = sample_mask(rng, cfg.net.window, cfg.mask_rate);
    d.eps = Tensor(d.clean.shape());
    for (int64_t i = 0; i < d.eps.numel(); ++i) d.eps[i] = rng.normal();
    return d;
}

std::string loss_log_csv(const std::vector<StepStats>& log) {
    std::string out = "step,winc_mf,tic,total,lr\n";
    char buf[192];
    for (const StepStats& s : log) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(s.step), s.winc, s.tic, s.total,
                      s.lr);
        out += buf;
    }
    return out;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.net.validate();
    if (ds.trajs.empty()) throw DataError("dataset is empty");
    for (const Tensor& t : ds.trajs) {
        if (t.rank() != 4 || t.dim(1) != cfg.net.channels ||
            t.dim(2) != cfg.net.height || t.dim(3) != cfg.net.width_s)
            throw DataError("trajectory shape " + t.shape_str() +
                            " does not match the configured architecture");
        if (t.dim(0) < cfg.net.window)
            throw DataError("trajectory shorter than the window");
    }
    if (cfg.batch < 1) throw ConfigError("batch must be positive");
    if (cfg.steps < 1) throw ConfigError("steps must be positive");
    if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");

    DenoiserNet net(cfg.net, cfg.seed);
    Rng rng(cfg.seed);
    TicWeights weights = TicWeights::defaults(cfg.net.window);

    AdamState adam;
    MuonState muon;
    if (cfg.optimizer == OptimizerKind::Adam)
        adam.init(net.params());
    else
        muon.init(net.params());

    std::vector<StepStats> log;
    log.reserve(size_t(cfg.steps));

    auto save = [&] {
        if (!cfg.checkpoint_path.empty())
            save_checkpoint(cfg.checkpoint_path, cfg.net, net.params());
        if (!cfg.loss_log_path.empty())
            write_file_atomic(cfg.loss_log_path, loss_log_csv(log));
    };

    ParamStore& ps = net.params();
    for (int64_t step = 0; step < cfg.steps; ++step) {
        double lr = lr_at(cfg.schedule, cfg.lr, step, cfg.steps);
        std::vector<Tensor> grads;
        for (size_t i = 0; i < ps.size(); ++i)
            grads.push_back(Tensor::zeros(ps.value(int(i)).shape()));

        double winc_sum = 0.0, tic_sum = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            WindowDraw d = draw_window(ds, cfg, rng);
            if (!d.clean.all_finite())
                throw DataError("non-finite values in the window sampled at "
                                "step " +
                                std::to_string(step));
            try {
                Tape tape;
                TapeLift lift = lift_params(tape, ps);
                LossParts parts = melisa_loss(tape, net, lift, d.clean, d.eps,
                                              d.t, d.r, d.mask, weights);
                double total = parts.total.val().value();
                if (!std::isfinite(total))
                    throw NumericalError("non-finite loss at step " +
                                         std::to_string(step) +
                                         " (batch element " +
                                         std::to_string(b) + ")");
                winc_sum += parts.winc;
                tic_sum += parts.tic;
                tape.backward(parts.total);
                for (size_t i = 0; i < ps.size(); ++i) {
                    const Tensor& g = tape.grad(lift.vars[i]);
                    Tensor& acc = grads[i];
                    for (int64_t j = 0; j < acc.numel(); ++j) acc[j] += g[j];
                }
            } catch (const ConfigError&) {
                throw;
            } catch (const DataError&) {
                throw;
            } catch (const NumericalError&) {
                throw;
            } catch (const InternalError&) {
                throw;
            } catch (const std::runtime_error& e) {
                // Overflowing intermediates surface as op-level failures;
                // report them with the step attached.
                throw NumericalError("loss evaluation failed at step " +
                                     std::to_string(step) + ": " + e.what());
            }
        }
        double inv_b = 1.0 / double(cfg.batch);
        for (Tensor& g : grads)
            for (int64_t j = 0; j < g.numel(); ++j) g[j] *= inv_b;
        clip_global_norm(grads, cfg.clip_norm);

        if (cfg.optimizer == OptimizerKind::Adam)
            adam_step(ps, grads, adam, lr);
        else
            muon_step(ps, grads, muon, lr);

        StepStats s;
        s.step = step;
        s.winc = winc_sum * inv_b;
        s.tic = tic_sum * inv_b;
        s.total = s.winc + s.tic;
        s.lr = lr;
        log.push_back(s);

        if (cfg.checkpoint_interval > 0 &&
            (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.steps)
            save();
    }
    save();
    return TrainResult{std::move(net), std::move(log)};
}

}  // namespace melisa
