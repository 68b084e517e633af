#include <cmath>
#include <stdexcept>

#include "melisa/kernels.hpp"
#include "melisa/ops.hpp"

namespace melisa {

namespace {

template <class F>
Tensor ew_binary(const Tensor& a, const Tensor& b, F f) {
    if (a.same_shape(b)) {
        Tensor y(a.shape());
        for (int64_t i = 0; i < a.numel(); ++i) y[i] = f(a[i], b[i]);
        return y;
    }
    if (a.is_scalar()) {
        Tensor y(b.shape());
        double av = a[0];
        for (int64_t i = 0; i < b.numel(); ++i) y[i] = f(av, b[i]);
        return y;
    }
    if (b.is_scalar()) {
        Tensor y(a.shape());
        double bv = b[0];
        for (int64_t i = 0; i < a.numel(); ++i) y[i] = f(a[i], bv);
        return y;
    }
    throw std::runtime_error("elementwise shape mismatch (only scalar broadcast)");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    Tensor y = ew_binary(a, b, [](double x, double d) { return x / d; });
    ensure_finite(y, "div");
    return y;
}

Tensor square(const Tensor& a) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * a[i];
    return y;
}

Tensor silu(const Tensor& a) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = kernels::silu_scalar(a[i]);
    return y;
}

Tensor scale(const Tensor& a, double c) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * c;
    return y;
}

Tensor offset(const Tensor& a, double c) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + c;
    return y;
}

Tensor linear(const Tensor& W, const Tensor& x, const Tensor& b) {
    Tensor y;
    kernels::matvec(W, x, b, y);
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
    Tensor y;
    kernels::conv2d(x, k, b, y);
    return y;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps) {
    Tensor y;
    kernels::GroupNormCache cache;
    kernels::group_norm(x, gamma, beta, groups, eps, y, cache);
    return y;
}

Tensor channel_affine(const Tensor& x, const Tensor& a, const Tensor& b) {
    Tensor y;
    kernels::channel_affine(x, a, b, y);
    return y;
}

Tensor concat(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::runtime_error("concat of nothing");
    int c_total = 0;
    int64_t stride = xs[0].numel() / xs[0].dim(0);
    std::vector<int> shape = xs[0].shape();
    for (const Tensor& x : xs) {
        if (x.rank() != xs[0].rank()) throw std::runtime_error("concat rank mismatch");
        if (x.numel() / x.dim(0) != stride)
            throw std::runtime_error("concat trailing shape mismatch");
        c_total += x.dim(0);
    }
    shape[0] = c_total;
    Tensor y(shape);
    double* d = y.data();
    for (const Tensor& x : xs) {
        const double* s = x.data();
        for (int64_t i = 0; i < x.numel(); ++i) d[i] = s[i];
        d += x.numel();
    }
    return y;
}

Tensor slice(const Tensor& x, int c0, int c1) {
    if (c0 < 0 || c1 > x.dim(0) || c0 >= c1)
        throw std::runtime_error("slice range out of bounds");
    int64_t stride = x.numel() / x.dim(0);
    std::vector<int> shape = x.shape();
    shape[0] = c1 - c0;
    Tensor y(shape);
    const double* s = x.data() + stride * c0;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = s[i];
    return y;
}

Tensor down2(const Tensor& x) {
    Tensor y;
    kernels::down2(x, y);
    return y;
}

Tensor up2(const Tensor& x) {
    Tensor y;
    kernels::up2(x, y);
    return y;
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return Tensor::scalar(s / static_cast<double>(a.numel()));
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return Tensor::scalar(s);
}

Tensor stop_gradient(const Tensor& a) { return a; }

Tensor time_features_value(double t, int E) {
    if (E < 2 || E % 2 != 0) throw std::runtime_error("embedding size must be even, >= 2");
    int half = E / 2;
    Tensor y({E});
    for (int i = 0; i < half; ++i) {
        double f = half > 1 ? std::pow(1000.0, static_cast<double>(i) / (half - 1)) : 1.0;
        y[i] = std::sin(f * t);
        y[half + i] = std::cos(f * t);
    }
    return y;
}

Tensor time_features_dt(double t, int E) {
    int half = E / 2;
    Tensor y({E});
    for (int i = 0; i < half; ++i) {
        double f = half > 1 ? std::pow(1000.0, static_cast<double>(i) / (half - 1)) : 1.0;
        y[i] = f * std::cos(f * t);
        y[half + i] = -f * std::sin(f * t);
    }
    return y;
}

Tensor time_features(const Tensor& t, int E) {
    return time_features_value(t.value(), E);
}

}  // namespace melisa
