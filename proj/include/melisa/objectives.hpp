#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "melisa/net.hpp"
#include "melisa/rng.hpp"

namespace melisa {

/// Guard for the 1/t factor of the average-velocity head.
constexpr double kTimeFloor = 1e-3;

/// Sampler for the (t, r) pair: t = sigmoid(mu + sigma*N(0,1)); with
/// probability p_neq a second draw is taken and (t, r) = (max, min), otherwise
/// r = t.
struct TimeSampler {
    double mu = 0.8;
    double sigma = 0.8;
    double p_neq = 0.5;

    std::pair<double, double> sample(Rng& rng) const;
};

/// Per-lag weights of the temporal-increment loss, lags 1..W-1.
struct TicWeights {
    std::vector<double> kappa;

    static TicWeights defaults(int window);
};

/// z_t = (1-t) x + t eps.
Tensor interpolate(const Tensor& x, const Tensor& eps, double t);

/// v = eps - x.
Tensor velocity_target(const Tensor& x, const Tensor& eps);

/// u = (z_t - d_out) / max(t, kTimeFloor), elementwise.
Tensor avg_velocity(const Tensor& z_t, const Tensor& d_out, double t);

/// Bernoulli observation mask over W frames; frame 0 is always observed and
/// each later frame is masked with probability `rate`.
std::vector<uint8_t> sample_mask(Rng& rng, int window, double rate);

/// Loss components of one window sample; `total` is the tape node to
/// backpropagate.
struct LossParts {
    Var total;
    double winc = 0.0;
    double tic = 0.0;
};

namespace detail {

template <class Net>
Var apply_on_tape(Tape& tape, const Net& net, const TapeLift& lift,
                  const Tensor& input, double t, double r) {
    return net.apply(lift, tape.constant(input), tape.constant(Tensor::scalar(t)),
                     tape.constant(Tensor::scalar(r)));
}

}  // namespace detail

/// Average-velocity consistency loss on one window. Builds the noisy window,
/// evaluates the denoiser on the tape, forms the average velocity, and adds
/// the (t - r)-scaled stopped JVP computed with forward-mode duals in the
/// direction (dz, dt, dr) = (v, 1, 0). Reduction is the mean over all window
/// entries. At t == r the JVP term vanishes and the loss degenerates to plain
/// flow matching.
template <class Net>
Var winc_mf_loss(Tape& tape, const Net& net, const TapeLift& lift,
                 const Tensor& clean, const Tensor& eps, double t, double r,
                 const std::vector<uint8_t>& mask) {
    if (r > t || t > 1.0 || r < 0.0)
        throw std::runtime_error("times must satisfy 0 <= r <= t <= 1");
    const auto& cfg = net.config();
    Tensor z = interpolate(clean, eps, t);
    Tensor v = velocity_target(clean, eps);
    Tensor input = assemble_window_input(z, clean, mask, cfg.window, cfg.channels);

    Var d_out = detail::apply_on_tape(tape, net, lift, input, t, r);
    double tc = std::max(t, kTimeFloor);
    Var u = scale(sub(tape.constant(z), d_out), 1.0 / tc);

    Var V = u;
    if (t != r) {
        // JVP of u in the direction (v, 1, 0), frozen before it enters the
        // residual.
        DualLift dlift{&net.params()};
        Dual xin(input, assemble_window_tangent(v, cfg.window, cfg.channels));
        Dual td(Tensor::scalar(t), Tensor::scalar(1.0));
        Dual rd = Dual::constant(Tensor::scalar(r));
        Dual dd = net.apply(dlift, xin, td, rd);
        Dual zd(z, v);
        Dual ud = t > kTimeFloor ? div(sub(zd, dd), td)
                                 : scale(sub(zd, dd), 1.0 / kTimeFloor);
        Tensor jvp = ud.materialized_tangent();
        V = add(u, tape.constant(scale(jvp, t - r)));
    }
    return mean_all(square(sub(V, tape.constant(v))));
}

/// One denoiser evaluation at (r, t) = (0, 1) on a pure-noise window; with the
/// average-velocity head this algebraically reduces to the network output.
template <class Net>
Var reconstruct_window(Tape& tape, const Net& net, const TapeLift& lift,
                       const Tensor& eps, const Tensor& clean,
                       const std::vector<uint8_t>& mask) {
    const auto& cfg = net.config();
    Tensor input = assemble_window_input(eps, clean, mask, cfg.window, cfg.channels);
    return detail::apply_on_tape(tape, net, lift, input, 1.0, 0.0);
}

/// Temporal-increment loss anchored at frame 0:
/// sum_w kappa_w * mean((x^w - x^0) - (xhat^w - xhat^0))^2.
Var tic_loss(Var xhat, const Tensor& clean, const TicWeights& weights,
             int window, int channels);
/// Plain-tensor evaluation of the same reduction.
double tic_loss_value(const Tensor& xhat, const Tensor& clean,
                      const TicWeights& weights, int window, int channels);

/// Combined loss on one window sample; the reconstruction reuses the same eps
/// and mask as the consistency term.
template <class Net>
LossParts melisa_loss(Tape& tape, const Net& net, const TapeLift& lift,
                      const Tensor& clean, const Tensor& eps, double t, double r,
                      const std::vector<uint8_t>& mask, const TicWeights& weights) {
    Var winc = winc_mf_loss(tape, net, lift, clean, eps, t, r, mask);
    Var xhat = reconstruct_window(tape, net, lift, eps, clean, mask);
    const auto& cfg = net.config();
    Var tic = tic_loss(xhat, clean, weights, cfg.window, cfg.channels);
    LossParts parts;
    parts.total = add(winc, tic);
    parts.winc = winc.val().value();
    parts.tic = tic.val().value();
    return parts;
}

}  // namespace melisa
