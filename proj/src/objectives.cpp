#include "melisa/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "melisa/ops.hpp"

namespace melisa {

std::pair<double, double> TimeSampler::sample(Rng& rng) const {
    auto draw = [&] {
        double logit = mu + sigma * rng.normal();
        return 1.0 / (1.0 + std::exp(-logit));
    };
    double t = draw();
    if (rng.uniform() < p_neq) {
        double s = draw();
        return {std::max(t, s), std::min(t, s)};
    }
    return {t, t};
}

TicWeights TicWeights::defaults(int window) {
    if (window < 2) throw std::runtime_error("window must be at least 2");
    TicWeights w;
    if (window == 6) {
        w.kappa = {0.4, 0.5, 0.8, 1.1, 1.2};
        return w;
    }
    int lags = window - 1;
    w.kappa.resize(lags);
    if (lags == 1) {
        w.kappa[0] = 0.8;
        return w;
    }
    for (int i = 0; i < lags; ++i)
        w.kappa[i] = 0.4 + (1.2 - 0.4) * double(i) / double(lags - 1);
    return w;
}

Tensor interpolate(const Tensor& x, const Tensor& eps, double t) {
    if (!x.same_shape(eps))
        throw std::runtime_error("interpolate: shape mismatch");
    Tensor z = x;
    double a = 1.0 - t;
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = a * x[i] + t * eps[i];
    return z;
}

Tensor velocity_target(const Tensor& x, const Tensor& eps) {
    return sub(eps, x);
}

Tensor avg_velocity(const Tensor& z_t, const Tensor& d_out, double t) {
    return scale(sub(z_t, d_out), 1.0 / std::max(t, kTimeFloor));
}

std::vector<uint8_t> sample_mask(Rng& rng, int window, double rate) {
    if (window < 1) throw std::runtime_error("window must be positive");
    std::vector<uint8_t> mask(window, 0);
    mask[0] = 1;
    for (int w = 1; w < window; ++w)
        mask[w] = rng.bernoulli(rate) ? 0 : 1;
    return mask;
}

namespace {

void check_tic_args(const Tensor& xhat, const Tensor& clean,
                    const TicWeights& weights, int window, int channels) {
    if (!xhat.same_shape(clean))
        throw std::runtime_error("tic_loss: shape mismatch");
    if (xhat.shape().empty() || xhat.shape()[0] != window * channels)
        throw std::runtime_error("tic_loss: leading axis must be window*channels");
    if ((int)weights.kappa.size() != window - 1)
        throw std::runtime_error("tic_loss: need window-1 lag weights");
}

}  // namespace

Var tic_loss(Var xhat, const Tensor& clean, const TicWeights& weights,
             int window, int channels) {
    Tape& tape = *xhat.tape;
    check_tic_args(xhat.val(), clean, weights, window, channels);
    Var x0 = slice(xhat, 0, channels);
    Tensor c0 = slice(clean, 0, channels);
    Var total = tape.constant(Tensor::scalar(0.0));
    for (int w = 1; w < window; ++w) {
        Var xw = slice(xhat, w * channels, (w + 1) * channels);
        Tensor cw = slice(clean, w * channels, (w + 1) * channels);
        Var pred_inc = sub(xw, x0);
        Tensor true_inc = sub(cw, c0);
        Var diff = sub(pred_inc, tape.constant(true_inc));
        total = add(total, scale(mean_all(square(diff)), weights.kappa[w - 1]));
    }
    return total;
}

double tic_loss_value(const Tensor& xhat, const Tensor& clean,
                      const TicWeights& weights, int window, int channels) {
    check_tic_args(xhat, clean, weights, window, channels);
    Tensor c0 = slice(clean, 0, channels);
    Tensor x0 = slice(xhat, 0, channels);
    double total = 0.0;
    for (int w = 1; w < window; ++w) {
        Tensor dw = sub(sub(slice(xhat, w * channels, (w + 1) * channels), x0),
                        sub(slice(clean, w * channels, (w + 1) * channels), c0));
        double acc = 0.0;
        for (int64_t i = 0; i < dw.numel(); ++i) acc += dw[i] * dw[i];
        total += acc / double(dw.numel()) * weights.kappa[w - 1];
    }
    return total;
}

}  // namespace melisa
