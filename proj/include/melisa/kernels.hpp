#pragma once

#include "melisa/tensor.hpp"

namespace melisa::kernels {

// Raw numeric primitives shared by the plain, reverse-mode and forward-mode
// evaluation paths. Backward kernels accumulate (+=) into their grad outputs.

/// y = W @ x + b.  W is [M,K] row-major, x is [K], b is [M] (may be empty).
void matvec(const Tensor& W, const Tensor& x, const Tensor& b, Tensor& y);
void matvec_backward(const Tensor& W, const Tensor& x, const Tensor& gy,
                     Tensor& gW, Tensor& gx, Tensor& gb);

/// C = A @ B for row-major matrices [M,K] x [K,N]; plain gemm wrapper.
void gemm(int M, int K, int N, const double* A, const double* B, double* C,
          bool transA = false, bool transB = false, double alpha = 1.0,
          double beta = 0.0);

/// 2D convolution with circular (periodic) padding, stride 1, odd kernel.
/// x [Cin,H,W], k [Cout,Cin,kh,kw], b [Cout] (may be empty) -> y [Cout,H,W].
void conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Tensor& y);
void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gy,
                     Tensor& gx, Tensor& gk, Tensor& gb);
/// Input-tangent half of the convolution JVP: dy = conv(dx, k).
void conv2d_jvp_input(const Tensor& dx, const Tensor& k, Tensor& dy);

/// Group normalization over [C,H,W] with per-channel affine parameters.
/// Saves per-group mean and inverse std for the backward pass.
struct GroupNormCache {
    Tensor mean;     // [G]
    Tensor inv_std;  // [G]
    Tensor var;      // [G]
};
void group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                int groups, double eps, Tensor& y, GroupNormCache& cache);
void group_norm_backward(const Tensor& x, const Tensor& gamma, int groups,
                         double eps, const GroupNormCache& cache,
                         const Tensor& gy, Tensor& gx, Tensor& ggamma,
                         Tensor& gbeta);
void group_norm_jvp(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    int groups, double eps, const GroupNormCache& cache,
                    const Tensor& dx, const Tensor& dgamma, const Tensor& dbeta,
                    Tensor& dy);

/// y[c] = x[c] * a[c] + b[c] broadcast over the spatial plane.
void channel_affine(const Tensor& x, const Tensor& a, const Tensor& b, Tensor& y);
void channel_affine_backward(const Tensor& x, const Tensor& a, const Tensor& gy,
                             Tensor& gx, Tensor& ga, Tensor& gb);

double silu_scalar(double x);
double silu_grad_scalar(double x);

/// Nearest-neighbour 2x down/up sampling on [C,H,W].
void down2(const Tensor& x, Tensor& y);
void down2_backward(const Tensor& gy, Tensor& gx);
void up2(const Tensor& x, Tensor& y);
void up2_backward(const Tensor& gy, Tensor& gx);

}  // namespace melisa::kernels
