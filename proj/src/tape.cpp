#include "melisa/tape.hpp"

#include <stdexcept>

#include "melisa/kernels.hpp"
#include "melisa/ops.hpp"

namespace melisa {

const Tensor& Var::val() const { return tape->value(id); }

Var Tape::leaf(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor(), false, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor v) { return leaf(std::move(v)); }

Var Tape::node(Tensor value, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, std::move(back)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::runtime_error("backward on foreign tape");
    if (!loss.val().is_scalar()) throw std::runtime_error("backward needs a scalar loss");
    grad_buf(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad_alloc && n.back) n.back(*this, id);
    }
}

const Tensor& Tape::grad(Var v) {
    if (v.tape != this) throw std::runtime_error("grad on foreign tape");
    return grad_buf(v.id);
}

namespace {

void check_pair(Var a, Var b) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
        throw std::runtime_error("op on vars from different tapes");
}

/// Add `g` into node `id`'s grad: elementwise when shapes match, summed when
/// the node holds a broadcast scalar.
void accum(Tape& t, int id, const Tensor& g) {
    Tensor& dst = t.grad_buf(id);
    if (dst.same_shape(g)) {
        double* d = dst.data();
        const double* s = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) d[i] += s[i];
    } else if (dst.is_scalar()) {
        double s = 0.0;
        for (int64_t i = 0; i < g.numel(); ++i) s += g[i];
        dst[0] += s;
    } else {
        throw std::runtime_error("gradient shape mismatch");
    }
}

}  // namespace

Var add(Var a, Var b) {
    check_pair(a, b);
    Tensor y = add(a.val(), b.val());
    int ai = a.id, bi = b.id;
    return a.tape->node(std::move(y), [ai, bi](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        accum(t, ai, gy);
        accum(t, bi, gy);
    });
}

Var sub(Var a, Var b) {
    check_pair(a, b);
    Tensor y = sub(a.val(), b.val());
    int ai = a.id, bi = b.id;
    return a.tape->node(std::move(y), [ai, bi](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        accum(t, ai, gy);
        accum(t, bi, scale(gy, -1.0));
    });
}

Var mul(Var a, Var b) {
    check_pair(a, b);
    Tensor y = mul(a.val(), b.val());
    int ai = a.id, bi = b.id;
    return a.tape->node(std::move(y), [ai, bi](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        accum(t, ai, mul(gy, t.value(bi)));
        accum(t, bi, mul(gy, t.value(ai)));
    });
}

Var div(Var a, Var b) {
    check_pair(a, b);
    Tensor y = div(a.val(), b.val());
    int ai = a.id, bi = b.id;
    return a.tape->node(std::move(y), [ai, bi](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        const Tensor& bv = t.value(bi);
        accum(t, ai, div(gy, bv));
        // d/db (a/b) = -a/b^2 = -y/b
        accum(t, bi, scale(mul(gy, div(t.value(self), bv)), -1.0));
    });
}

Var square(Var a) {
    Tensor y = square(a.val());
    int ai = a.id;
    return a.tape->node(std::move(y), [ai](Tape& t, int self) {
        accum(t, ai, mul(scale(t.grad_buf(self), 2.0), t.value(ai)));
    });
}

Var silu(Var a) {
    Tensor y = silu(a.val());
    int ai = a.id;
    return a.tape->node(std::move(y), [ai](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        const Tensor& x = t.value(ai);
        Tensor g(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i)
            g[i] = gy[i] * kernels::silu_grad_scalar(x[i]);
        accum(t, ai, g);
    });
}

Var scale(Var a, double c) {
    Tensor y = scale(a.val(), c);
    int ai = a.id;
    return a.tape->node(std::move(y), [ai, c](Tape& t, int self) {
        accum(t, ai, scale(t.grad_buf(self), c));
    });
}

Var offset(Var a, double c) {
    Tensor y = offset(a.val(), c);
    int ai = a.id;
    return a.tape->node(std::move(y), [ai](Tape& t, int self) {
        accum(t, ai, t.grad_buf(self));
    });
}

Var linear(Var W, Var x, Var b) {
    check_pair(W, x);
    check_pair(x, b);
    Tensor y = linear(W.val(), x.val(), b.val());
    int wi = W.id, xi = x.id, bi = b.id;
    return W.tape->node(std::move(y), [wi, xi, bi](Tape& t, int self) {
        kernels::matvec_backward(t.value(wi), t.value(xi), t.grad_buf(self),
                                 t.grad_buf(wi), t.grad_buf(xi), t.grad_buf(bi));
    });
}

Var conv2d(Var x, Var k, Var b) {
    check_pair(x, k);
    check_pair(k, b);
    Tensor y = conv2d(x.val(), k.val(), b.val());
    int xi = x.id, ki = k.id, bi = b.id;
    return x.tape->node(std::move(y), [xi, ki, bi](Tape& t, int self) {
        kernels::conv2d_backward(t.value(xi), t.value(ki), t.grad_buf(self),
                                 t.grad_buf(xi), t.grad_buf(ki), t.grad_buf(bi));
    });
}

Var group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    check_pair(x, gamma);
    check_pair(gamma, beta);
    Tensor y;
    kernels::GroupNormCache cache;
    kernels::group_norm(x.val(), gamma.val(), beta.val(), groups, eps, y, cache);
    int xi = x.id, gi = gamma.id, bi = beta.id;
    return x.tape->node(std::move(y), [xi, gi, bi, groups, eps, cache](Tape& t, int self) {
        kernels::group_norm_backward(t.value(xi), t.value(gi), groups, eps, cache,
                                     t.grad_buf(self), t.grad_buf(xi),
                                     t.grad_buf(gi), t.grad_buf(bi));
    });
}

Var channel_affine(Var x, Var a, Var b) {
    check_pair(x, a);
    check_pair(a, b);
    Tensor y;
    kernels::channel_affine(x.val(), a.val(), b.val(), y);
    int xi = x.id, ai = a.id, bi = b.id;
    return x.tape->node(std::move(y), [xi, ai, bi](Tape& t, int self) {
        kernels::channel_affine_backward(t.value(xi), t.value(ai), t.grad_buf(self),
                                         t.grad_buf(xi), t.grad_buf(ai),
                                         t.grad_buf(bi));
    });
}

Var concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::runtime_error("concat of nothing");
    std::vector<Tensor> vals;
    vals.reserve(xs.size());
    std::vector<int> ids;
    for (const Var& v : xs) {
        if (v.tape != xs[0].tape) throw std::runtime_error("concat across tapes");
        vals.push_back(v.val());
        ids.push_back(v.id);
    }
    Tensor y = concat(vals);
    return xs[0].tape->node(std::move(y), [ids](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        int c0 = 0;
        for (int id : ids) {
            int c1 = c0 + t.value(id).dim(0);
            accum(t, id, slice(gy, c0, c1));
            c0 = c1;
        }
    });
}

Var slice(Var x, int c0, int c1) {
    Tensor y = slice(x.val(), c0, c1);
    int xi = x.id;
    return x.tape->node(std::move(y), [xi, c0, c1](Tape& t, int self) {
        const Tensor& gy = t.grad_buf(self);
        Tensor& gx = t.grad_buf(xi);
        int64_t stride = gx.numel() / gx.dim(0);
        const double* s = gy.data();
        double* d = gx.data() + stride * c0;
        for (int64_t i = 0; i < stride * (c1 - c0); ++i) d[i] += s[i];
    });
}

Var down2(Var x) {
    Tensor y;
    kernels::down2(x.val(), y);
    int xi = x.id;
    return x.tape->node(std::move(y), [xi](Tape& t, int self) {
        kernels::down2_backward(t.grad_buf(self), t.grad_buf(xi));
    });
}

Var up2(Var x) {
    Tensor y;
    kernels::up2(x.val(), y);
    int xi = x.id;
    return x.tape->node(std::move(y), [xi](Tape& t, int self) {
        kernels::up2_backward(t.grad_buf(self), t.grad_buf(xi));
    });
}

Var mean_all(Var a) {
    Tensor y = mean_all(a.val());
    int ai = a.id;
    int64_t n = a.val().numel();
    return a.tape->node(std::move(y), [ai, n](Tape& t, int self) {
        double g = t.grad_buf(self)[0] / static_cast<double>(n);
        Tensor& ga = t.grad_buf(ai);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var sum_all(Var a) {
    Tensor y = sum_all(a.val());
    int ai = a.id;
    return a.tape->node(std::move(y), [ai](Tape& t, int self) {
        double g = t.grad_buf(self)[0];
        Tensor& ga = t.grad_buf(ai);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var stop_gradient(Var a) {
    // Forward identity; backward propagates nothing.
    return a.tape->node(a.val(), nullptr);
}

Var time_features(Var t, int E) {
    return t.tape->constant(time_features(t.val(), E));
}

}  // namespace melisa
