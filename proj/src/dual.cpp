#include "melisa/dual.hpp"

#include <stdexcept>

#include "melisa/kernels.hpp"
#include "melisa/ops.hpp"

namespace melisa {

const Tensor& Dual::tangent_or_zeros() const {
    static const Tensor empty;
    if (zero) return empty;
    return d;
}

namespace {

Tensor mat_tangent(const Dual& a) { return a.materialized_tangent(); }

}  // namespace

Dual add(const Dual& a, const Dual& b) {
    Tensor v = add(a.v, b.v);
    if (a.zero && b.zero) return Dual(std::move(v));
    return Dual(std::move(v), add(mat_tangent(a), mat_tangent(b)));
}

Dual sub(const Dual& a, const Dual& b) {
    Tensor v = sub(a.v, b.v);
    if (a.zero && b.zero) return Dual(std::move(v));
    return Dual(std::move(v), sub(mat_tangent(a), mat_tangent(b)));
}

Dual mul(const Dual& a, const Dual& b) {
    Tensor v = mul(a.v, b.v);
    if (a.zero && b.zero) return Dual(std::move(v));
    Tensor d;
    if (!a.zero && !b.zero)
        d = add(mul(a.d, b.v), mul(a.v, b.d));
    else if (!a.zero)
        d = mul(a.d, b.v);
    else
        d = mul(a.v, b.d);
    // Broadcast the tangent up to the value's shape if a scalar met a tensor.
    if (!d.same_shape(v)) d = mul(d, Tensor::full(v.shape(), 1.0));
    return Dual(std::move(v), std::move(d));
}

Dual div(const Dual& a, const Dual& b) {
    Tensor v = div(a.v, b.v);
    if (a.zero && b.zero) return Dual(std::move(v));
    // d(a/b) = (da - y * db) / b
    Tensor num;
    if (!a.zero && !b.zero)
        num = sub(a.d, mul(v, b.d));
    else if (!a.zero)
        num = a.d;
    else
        num = scale(mul(v, b.d), -1.0);
    Tensor d = div(num, b.v);
    if (!d.same_shape(v)) d = mul(d, Tensor::full(v.shape(), 1.0));
    return Dual(std::move(v), std::move(d));
}

Dual square(const Dual& a) {
    Tensor v = square(a.v);
    if (a.zero) return Dual(std::move(v));
    return Dual(std::move(v), scale(mul(a.v, a.d), 2.0));
}

Dual silu(const Dual& a) {
    Tensor v = silu(a.v);
    if (a.zero) return Dual(std::move(v));
    Tensor d(a.v.shape());
    for (int64_t i = 0; i < a.v.numel(); ++i)
        d[i] = kernels::silu_grad_scalar(a.v[i]) * a.d[i];
    return Dual(std::move(v), std::move(d));
}

Dual scale(const Dual& a, double c) {
    Tensor v = scale(a.v, c);
    if (a.zero) return Dual(std::move(v));
    return Dual(std::move(v), scale(a.d, c));
}

Dual offset(const Dual& a, double c) {
    Tensor v = offset(a.v, c);
    if (a.zero) return Dual(std::move(v));
    return Dual(std::move(v), a.d);
}

Dual linear(const Dual& W, const Dual& x, const Dual& b) {
    Tensor v = linear(W.v, x.v, b.v);
    if (W.zero && x.zero && b.zero) return Dual(std::move(v));
    Tensor d = Tensor::zeros(v.shape());
    Tensor empty;
    if (!x.zero) {
        Tensor t;
        kernels::matvec(W.v, x.d, empty, t);
        d = add(d, t);
    }
    if (!W.zero) {
        Tensor t;
        kernels::matvec(W.d, x.v, empty, t);
        d = add(d, t);
    }
    if (!b.zero) d = add(d, b.d);
    return Dual(std::move(v), std::move(d));
}

Dual conv2d(const Dual& x, const Dual& k, const Dual& b) {
    Tensor v = conv2d(x.v, k.v, b.v);
    if (x.zero && k.zero && b.zero) return Dual(std::move(v));
    Tensor d;
    bool have = false;
    if (!x.zero) {
        kernels::conv2d_jvp_input(x.d, k.v, d);
        have = true;
    }
    if (!k.zero || !b.zero) {
        Tensor t;
        kernels::conv2d(x.v, k.zero ? Tensor::zeros(k.v.shape()) : k.d,
                        b.zero ? Tensor() : b.d, t);
        d = have ? add(d, t) : std::move(t);
        have = true;
    }
    if (!have) d = Tensor::zeros(v.shape());
    return Dual(std::move(v), std::move(d));
}

Dual group_norm(const Dual& x, const Dual& gamma, const Dual& beta, int groups,
                double eps) {
    Tensor v;
    kernels::GroupNormCache cache;
    kernels::group_norm(x.v, gamma.v, beta.v, groups, eps, v, cache);
    if (x.zero && gamma.zero && beta.zero) return Dual(std::move(v));
    Tensor dx = x.zero ? Tensor::zeros(x.v.shape()) : x.d;
    Tensor dgamma, dbeta;
    if (!gamma.zero || !beta.zero) {
        dgamma = gamma.zero ? Tensor::zeros(gamma.v.shape()) : gamma.d;
        dbeta = beta.zero ? Tensor::zeros(beta.v.shape()) : beta.d;
    }
    Tensor d;
    kernels::group_norm_jvp(x.v, gamma.v, beta.v, groups, eps, cache, dx, dgamma,
                            dbeta, d);
    return Dual(std::move(v), std::move(d));
}

Dual channel_affine(const Dual& x, const Dual& a, const Dual& b) {
    Tensor v;
    kernels::channel_affine(x.v, a.v, b.v, v);
    if (x.zero && a.zero && b.zero) return Dual(std::move(v));
    Tensor d = Tensor::zeros(v.shape());
    if (!x.zero) {
        Tensor t;
        kernels::channel_affine(x.d, a.v, Tensor::zeros(b.v.shape()), t);
        d = add(d, t);
    }
    if (!a.zero || !b.zero) {
        Tensor t;
        kernels::channel_affine(x.v, a.zero ? Tensor::zeros(a.v.shape()) : a.d,
                                b.zero ? Tensor::zeros(b.v.shape()) : b.d, t);
        d = add(d, t);
    }
    return Dual(std::move(v), std::move(d));
}

Dual concat(const std::vector<Dual>& xs) {
    std::vector<Tensor> vals;
    vals.reserve(xs.size());
    bool all_zero = true;
    for (const Dual& x : xs) {
        vals.push_back(x.v);
        all_zero = all_zero && x.zero;
    }
    Tensor v = concat(vals);
    if (all_zero) return Dual(std::move(v));
    std::vector<Tensor> tans;
    tans.reserve(xs.size());
    for (const Dual& x : xs) tans.push_back(x.materialized_tangent());
    return Dual(std::move(v), concat(tans));
}

Dual slice(const Dual& x, int c0, int c1) {
    Tensor v = slice(x.v, c0, c1);
    if (x.zero) return Dual(std::move(v));
    return Dual(std::move(v), slice(x.d, c0, c1));
}

Dual down2(const Dual& x) {
    Tensor v = down2(x.v);
    if (x.zero) return Dual(std::move(v));
    return Dual(std::move(v), down2(x.d));
}

Dual up2(const Dual& x) {
    Tensor v = up2(x.v);
    if (x.zero) return Dual(std::move(v));
    return Dual(std::move(v), up2(x.d));
}

Dual mean_all(const Dual& a) {
    Tensor v = mean_all(a.v);
    if (a.zero) return Dual(std::move(v));
    return Dual(std::move(v), mean_all(a.d));
}

Dual sum_all(const Dual& a) {
    Tensor v = sum_all(a.v);
    if (a.zero) return Dual(std::move(v));
    return Dual(std::move(v), sum_all(a.d));
}

Dual stop_gradient(const Dual& a) {
    // Forward-mode derivative of a frozen value is exactly zero.
    return Dual(a.v);
}

Dual time_features(const Dual& t, int E) {
    Tensor v = time_features(t.v, E);
    if (t.zero) return Dual(std::move(v));
    Tensor d = scale(time_features_dt(t.v.value(), E), t.d.value());
    return Dual(std::move(v), std::move(d));
}

}  // namespace melisa
