#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melisa/net.hpp"
#include "melisa/objectives.hpp"
#include "melisa/rng.hpp"

namespace melisa {

enum class ScheduleKind { Constant, LinearDecay, Cosine };
enum class OptimizerKind { Adam, Muon };

ScheduleKind schedule_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

/// Learning rate used for update `step` (0-based) out of `total`:
/// constant eta; linear eta*(1 - step/total); cosine eta*0.5*(1+cos(pi
/// step/total)).
double lr_at(ScheduleKind kind, double eta, int64_t step, int64_t total);

/// In-memory dataset: trajectories as [T,C,H,W] tensors.
struct Dataset {
    std::vector<Tensor> trajs;
};

/// Uniform draw over all valid (trajectory, start) pairs; the returned window
/// is the exact [W*C,H,W] channel-stacked slice of `window` consecutive
/// frames.
Tensor sample_window(const Dataset& ds, int window, Rng& rng);

// ---- optimizers -------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m, v;
    int64_t step = 0;  ///< completed updates

    void init(const ParamStore& ps);
};

/// Bias-corrected Adam with (beta1, beta2, eps) = (0.9, 0.999, 1e-8).
void adam_step(ParamStore& ps, const std::vector<Tensor>& grads, AdamState& st,
               double lr);

/// Five Newton-Schulz iterations of the quintic a s + b s^3 + c s^5 with
/// (a,b,c) = (15,-10,3)/8 on the Frobenius-normalized input; drives the
/// singular values of a [rows,cols] matrix toward 1. A fixed point of the
/// polynomial is s=1 with zero derivative, so orthogonal inputs of moderate
/// size pass through unchanged.
Tensor orthogonalize_ns5(const Tensor& g);

struct MuonState {
    std::vector<Tensor> momentum;  ///< matrix params only; empty elsewhere
    AdamState fallback;            ///< drives the non-matrix params
    int64_t step = 0;
    double mu = 0.95;

    void init(const ParamStore& ps);
};

/// Momentum accumulation followed by Newton-Schulz orthogonalization for
/// every parameter of rank >= 2 (reshaped to [dim0, rest]); rank-0/1
/// parameters take a bias-corrected Adam step instead.
void muon_step(ParamStore& ps, const std::vector<Tensor>& grads, MuonState& st,
               double lr);

/// Scales all gradients by max_norm/norm when the global L2 norm exceeds
/// max_norm (no-op if max_norm <= 0); returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// ---- training loop ----------------------------------------------------------

struct TrainConfig {
    NetConfig net;
    double mask_rate = 0.8;
    int batch = 2;
    int64_t steps = 5000;
    double lr = 1e-4;
    ScheduleKind schedule = ScheduleKind::Constant;
    OptimizerKind optimizer = OptimizerKind::Adam;
    uint64_t seed = 42;
    double clip_norm = 1.0;           ///< <= 0 disables
    int64_t checkpoint_interval = 0;  ///< 0: checkpoint only at the end
    std::string checkpoint_path;      ///< empty: keep the result in memory only
    std::string loss_log_path;        ///< empty: no CSV written
    TimeSampler time_sampler;
};

struct StepStats {
    int64_t step = 0;
    double winc = 0.0;
    double tic = 0.0;
    double total = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    DenoiserNet net;
    std::vector<StepStats> log;
};

/// One window sample for a batch element, in the order the training loop
/// draws it from the stream: window, (t, r), mask, then noise.
struct WindowDraw {
    Tensor clean;
    Tensor eps;
    double t = 0.0;
    double r = 0.0;
    std::vector<uint8_t> mask;
};
WindowDraw draw_window(const Dataset& ds, const TrainConfig& cfg, Rng& rng);

/// CSV image of a loss log with header step,winc_mf,tic,total,lr.
std::string loss_log_csv(const std::vector<StepStats>& log);

/// Runs the step budget over windows sampled from `ds`, returning the trained
/// network and the per-step loss log. Deterministic given (dataset, config).
/// A non-finite loss raises NumericalError naming the offending step.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

}  // namespace melisa
