#pragma once

#include <vector>

#include "melisa/dual.hpp"
#include "melisa/tape.hpp"
#include "melisa/tensor.hpp"

namespace melisa {

// Differentiable op set. Every op exists in three forms over the same numeric
// kernels: plain Tensor evaluation, reverse-mode Var, forward-mode Dual.
// Elementwise binaries broadcast only scalar-vs-tensor (numel()==1 counts as
// scalar). Division checks the result for non-finite entries.

// ---- plain -----------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor offset(const Tensor& a, double c);
Tensor linear(const Tensor& W, const Tensor& x, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps);
Tensor channel_affine(const Tensor& x, const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& xs);
Tensor slice(const Tensor& x, int c0, int c1);
Tensor down2(const Tensor& x);
Tensor up2(const Tensor& x);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor stop_gradient(const Tensor& a);
Tensor time_features(const Tensor& t, int E);

// ---- reverse mode ----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var square(Var a);
Var silu(Var a);
Var scale(Var a, double c);
Var offset(Var a, double c);
Var linear(Var W, Var x, Var b);
Var conv2d(Var x, Var k, Var b);
Var group_norm(Var x, Var gamma, Var beta, int groups, double eps);
Var channel_affine(Var x, Var a, Var b);
Var concat(const std::vector<Var>& xs);
Var slice(Var x, int c0, int c1);
Var down2(Var x);
Var up2(Var x);
Var mean_all(Var a);
Var sum_all(Var a);
Var stop_gradient(Var a);
Var time_features(Var t, int E);

// ---- forward mode ----------------------------------------------------------
Dual add(const Dual& a, const Dual& b);
Dual sub(const Dual& a, const Dual& b);
Dual mul(const Dual& a, const Dual& b);
Dual div(const Dual& a, const Dual& b);
Dual square(const Dual& a);
Dual silu(const Dual& a);
Dual scale(const Dual& a, double c);
Dual offset(const Dual& a, double c);
Dual linear(const Dual& W, const Dual& x, const Dual& b);
Dual conv2d(const Dual& x, const Dual& k, const Dual& b);
Dual group_norm(const Dual& x, const Dual& gamma, const Dual& beta, int groups,
                double eps);
Dual channel_affine(const Dual& x, const Dual& a, const Dual& b);
Dual concat(const std::vector<Dual>& xs);
Dual slice(const Dual& x, int c0, int c1);
Dual down2(const Dual& x);
Dual up2(const Dual& x);
Dual mean_all(const Dual& a);
Dual sum_all(const Dual& a);
Dual stop_gradient(const Dual& a);
Dual time_features(const Dual& t, int E);

/// Sinusoidal embedding of a scalar in [0,1]: E/2 sine then E/2 cosine
/// features with geometrically spaced frequencies, so t=0 maps to all-zero
/// sines and all-one cosines. E must be even and >= 2.
Tensor time_features_value(double t, int E);
Tensor time_features_dt(double t, int E);

}  // namespace melisa
