#include "melisa/kernels.hpp"

#include <cblas.h>

#include <cmath>
#include <stdexcept>

namespace melisa::kernels {

void gemm(int M, int K, int N, const double* A, const double* B, double* C,
          bool transA, bool transB, double alpha, double beta) {
    cblas_dgemm(CblasRowMajor, transA ? CblasTrans : CblasNoTrans,
                transB ? CblasTrans : CblasNoTrans, M, N, K, alpha, A,
                transA ? M : K, B, transB ? K : N, beta, C, N);
}

void matvec(const Tensor& W, const Tensor& x, const Tensor& b, Tensor& y) {
    int M = W.dim(0), K = W.dim(1);
    if (x.numel() != K) throw std::runtime_error("matvec shape mismatch");
    y = Tensor({M});
    cblas_dgemv(CblasRowMajor, CblasNoTrans, M, K, 1.0, W.data(), K, x.data(), 1,
                0.0, y.data(), 1);
    if (b.numel() > 0)
        for (int i = 0; i < M; ++i) y[i] += b[i];
}

void matvec_backward(const Tensor& W, const Tensor& x, const Tensor& gy,
                     Tensor& gW, Tensor& gx, Tensor& gb) {
    int M = W.dim(0), K = W.dim(1);
    // gW += gy outer x
    cblas_dger(CblasRowMajor, M, K, 1.0, gy.data(), 1, x.data(), 1, gW.data(), K);
    // gx += W^T gy
    cblas_dgemv(CblasRowMajor, CblasTrans, M, K, 1.0, W.data(), K, gy.data(), 1,
                1.0, gx.data(), 1);
    if (gb.numel() > 0)
        for (int i = 0; i < M; ++i) gb[i] += gy[i];
}

namespace {

// Gather the circularly padded kh*kw neighbourhood of every pixel into a
// column matrix [Cin*kh*kw, H*W].
void im2col(const Tensor& x, int kh, int kw, std::vector<double>& col) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int hw = H * W;
    col.resize(static_cast<size_t>(C) * kh * kw * hw);
    int oh = kh / 2, ow = kw / 2;
    const double* xp = x.data();
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < kh; ++di) {
            for (int dj = 0; dj < kw; ++dj, ++row) {
                double* out = col.data() + row * hw;
                for (int i = 0; i < H; ++i) {
                    int si = i + di - oh;
                    si = (si % H + H) % H;
                    const double* src = xp + (static_cast<size_t>(c) * H + si) * W;
                    double* dst = out + static_cast<size_t>(i) * W;
                    int sj0 = dj - ow;
                    for (int j = 0; j < W; ++j) {
                        int sj = j + sj0;
                        sj = (sj % W + W) % W;
                        dst[j] = src[sj];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back onto the circular grid.
void col2im_add(const std::vector<double>& col, int C, int H, int W, int kh,
                int kw, Tensor& gx) {
    int hw = H * W;
    int oh = kh / 2, ow = kw / 2;
    double* gp = gx.data();
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < kh; ++di) {
            for (int dj = 0; dj < kw; ++dj, ++row) {
                const double* src = col.data() + row * hw;
                for (int i = 0; i < H; ++i) {
                    int si = i + di - oh;
                    si = (si % H + H) % H;
                    double* dst = gp + (static_cast<size_t>(c) * H + si) * W;
                    int sj0 = dj - ow;
                    for (int j = 0; j < W; ++j) {
                        int sj = j + sj0;
                        sj = (sj % W + W) % W;
                        dst[sj] += src[i * W + j];
                    }
                }
            }
        }
    }
}

}  // namespace

void conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Tensor& y) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    if (k.dim(1) != Cin) throw std::runtime_error("conv2d channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw std::runtime_error("conv2d needs odd kernel");
    int hw = H * W, kk = Cin * kh * kw;
    y = Tensor({Cout, H, W});
    std::vector<double> col;
    im2col(x, kh, kw, col);
    gemm(Cout, kk, hw, k.data(), col.data(), y.data());
    if (b.numel() > 0) {
        double* yp = y.data();
        for (int c = 0; c < Cout; ++c) {
            double bc = b[c];
            for (int p = 0; p < hw; ++p) yp[static_cast<size_t>(c) * hw + p] += bc;
        }
    }
}

void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gy,
                     Tensor& gx, Tensor& gk, Tensor& gb) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    int hw = H * W, kk = Cin * kh * kw;
    std::vector<double> col;
    im2col(x, kh, kw, col);
    // gk += gy [Cout,hw] @ col^T [hw,kk]
    gemm(Cout, hw, kk, gy.data(), col.data(), gk.data(), false, true, 1.0, 1.0);
    // gcol = k^T [kk,Cout] @ gy [Cout,hw]
    std::vector<double> gcol(static_cast<size_t>(kk) * hw);
    gemm(kk, Cout, hw, k.data(), gy.data(), gcol.data(), true, false);
    col2im_add(gcol, Cin, H, W, kh, kw, gx);
    if (gb.numel() > 0) {
        const double* gp = gy.data();
        for (int c = 0; c < Cout; ++c) {
            double s = 0.0;
            for (int p = 0; p < hw; ++p) s += gp[static_cast<size_t>(c) * hw + p];
            gb[c] += s;
        }
    }
}

void conv2d_jvp_input(const Tensor& dx, const Tensor& k, Tensor& dy) {
    Tensor empty;
    conv2d(dx, k, empty, dy);
}

void group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                int groups, double eps, Tensor& y, GroupNormCache& cache) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (C % groups != 0) throw std::runtime_error("group count must divide channels");
    int cg = C / groups;
    int64_t m = static_cast<int64_t>(cg) * H * W;
    y = Tensor({C, H, W});
    cache.mean = Tensor({groups});
    cache.var = Tensor({groups});
    cache.inv_std = Tensor({groups});
    const double* xp = x.data();
    double* yp = y.data();
    int hw = H * W;
    for (int g = 0; g < groups; ++g) {
        const double* xg = xp + static_cast<size_t>(g) * cg * hw;
        double s = 0.0;
        for (int64_t i = 0; i < m; ++i) s += xg[i];
        double mu = s / static_cast<double>(m);
        double v = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            double d = xg[i] - mu;
            v += d * d;
        }
        v /= static_cast<double>(m);
        double is = 1.0 / std::sqrt(v + eps);
        cache.mean[g] = mu;
        cache.var[g] = v;
        cache.inv_std[g] = is;
        for (int c = 0; c < cg; ++c) {
            double ga = gamma[g * cg + c], be = beta[g * cg + c];
            const double* xc = xg + static_cast<size_t>(c) * hw;
            double* yc = yp + (static_cast<size_t>(g) * cg + c) * hw;
            for (int p = 0; p < hw; ++p) yc[p] = (xc[p] - mu) * is * ga + be;
        }
    }
}

void group_norm_backward(const Tensor& x, const Tensor& gamma, int groups,
                         double eps, const GroupNormCache& cache,
                         const Tensor& gy, Tensor& gx, Tensor& ggamma,
                         Tensor& gbeta) {
    (void)eps;
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int cg = C / groups, hw = H * W;
    int64_t m = static_cast<int64_t>(cg) * hw;
    const double* xp = x.data();
    const double* gp = gy.data();
    for (int g = 0; g < groups; ++g) {
        double mu = cache.mean[g], is = cache.inv_std[g];
        const double* xg = xp + static_cast<size_t>(g) * cg * hw;
        const double* gg = gp + static_cast<size_t>(g) * cg * hw;
        // S1 = sum(gxh), S2 = sum(gxh * xh) over the group; gxh = gy * gamma.
        double S1 = 0.0, S2 = 0.0;
        for (int c = 0; c < cg; ++c) {
            double ga = gamma[g * cg + c];
            double sg = 0.0, sgx = 0.0;
            const double* xc = xg + static_cast<size_t>(c) * hw;
            const double* gc = gg + static_cast<size_t>(c) * hw;
            for (int p = 0; p < hw; ++p) {
                double xh = (xc[p] - mu) * is;
                sg += gc[p];
                sgx += gc[p] * xh;
            }
            ggamma[g * cg + c] += sgx;
            gbeta[g * cg + c] += sg;
            S1 += ga * sg;
            S2 += ga * sgx;
        }
        double inv_m = 1.0 / static_cast<double>(m);
        for (int c = 0; c < cg; ++c) {
            double ga = gamma[g * cg + c];
            const double* xc = xg + static_cast<size_t>(c) * hw;
            const double* gc = gg + static_cast<size_t>(c) * hw;
            double* gxc = gx.data() + (static_cast<size_t>(g) * cg + c) * hw;
            for (int p = 0; p < hw; ++p) {
                double xh = (xc[p] - mu) * is;
                double gxh = gc[p] * ga;
                gxc[p] += is * (gxh - inv_m * (S1 + xh * S2));
            }
        }
    }
}

void group_norm_jvp(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    int groups, double eps, const GroupNormCache& cache,
                    const Tensor& dx, const Tensor& dgamma, const Tensor& dbeta,
                    Tensor& dy) {
    (void)beta;
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int cg = C / groups, hw = H * W;
    int64_t m = static_cast<int64_t>(cg) * hw;
    dy = Tensor({C, H, W});
    bool has_dp = dgamma.numel() > 0;
    const double* xp = x.data();
    const double* dxp = dx.data();
    for (int g = 0; g < groups; ++g) {
        double mu = cache.mean[g], is = cache.inv_std[g], v = cache.var[g];
        const double* xg = xp + static_cast<size_t>(g) * cg * hw;
        const double* dg = dxp + static_cast<size_t>(g) * cg * hw;
        double dmu = 0.0, dvar = 0.0;
        for (int64_t i = 0; i < m; ++i) dmu += dg[i];
        dmu /= static_cast<double>(m);
        for (int64_t i = 0; i < m; ++i) dvar += (xg[i] - mu) * (dg[i] - dmu);
        dvar *= 2.0 / static_cast<double>(m);
        double k_var = dvar / (2.0 * (v + eps));
        for (int c = 0; c < cg; ++c) {
            double ga = gamma[g * cg + c];
            const double* xc = xg + static_cast<size_t>(c) * hw;
            const double* dc = dg + static_cast<size_t>(c) * hw;
            double* dyc = dy.data() + (static_cast<size_t>(g) * cg + c) * hw;
            for (int p = 0; p < hw; ++p) {
                double xh = (xc[p] - mu) * is;
                double dxh = (dc[p] - dmu) * is - xh * k_var;
                dyc[p] = ga * dxh;
                if (has_dp) dyc[p] += dgamma[g * cg + c] * xh + dbeta[g * cg + c];
            }
        }
    }
}

void channel_affine(const Tensor& x, const Tensor& a, const Tensor& b, Tensor& y) {
    int C = x.dim(0), hw = x.dim(1) * x.dim(2);
    y = Tensor(x.shape());
    for (int c = 0; c < C; ++c) {
        double ac = a[c], bc = b[c];
        const double* xc = x.data() + static_cast<size_t>(c) * hw;
        double* yc = y.data() + static_cast<size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) yc[p] = xc[p] * ac + bc;
    }
}

void channel_affine_backward(const Tensor& x, const Tensor& a, const Tensor& gy,
                             Tensor& gx, Tensor& ga, Tensor& gb) {
    int C = x.dim(0), hw = x.dim(1) * x.dim(2);
    for (int c = 0; c < C; ++c) {
        double ac = a[c];
        double sa = 0.0, sb = 0.0;
        const double* xc = x.data() + static_cast<size_t>(c) * hw;
        const double* gc = gy.data() + static_cast<size_t>(c) * hw;
        double* gxc = gx.data() + static_cast<size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) {
            gxc[p] += gc[p] * ac;
            sa += gc[p] * xc[p];
            sb += gc[p];
        }
        ga[c] += sa;
        gb[c] += sb;
    }
}

double silu_scalar(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad_scalar(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

void down2(const Tensor& x, Tensor& y) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % 2 || W % 2) throw std::runtime_error("down2 needs even extent");
    y = Tensor({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H / 2; ++i)
            for (int j = 0; j < W / 2; ++j)
                y[(static_cast<int64_t>(c) * (H / 2) + i) * (W / 2) + j] =
                    x[(static_cast<int64_t>(c) * H + 2 * i) * W + 2 * j];
}

void down2_backward(const Tensor& gy, Tensor& gx) {
    int C = gy.dim(0), h = gy.dim(1), w = gy.dim(2);
    int H = 2 * h, W = 2 * w;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                gx[(static_cast<int64_t>(c) * H + 2 * i) * W + 2 * j] +=
                    gy[(static_cast<int64_t>(c) * h + i) * w + j];
}

void up2(const Tensor& x, Tensor& y) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    y = Tensor({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j)
                y[(static_cast<int64_t>(c) * 2 * H + i) * 2 * W + j] =
                    x[(static_cast<int64_t>(c) * H + i / 2) * W + j / 2];
}

void up2_backward(const Tensor& gy, Tensor& gx) {
    int C = gy.dim(0), H2 = gy.dim(1), W2 = gy.dim(2);
    int H = H2 / 2, W = W2 / 2;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H2; ++i)
            for (int j = 0; j < W2; ++j)
                gx[(static_cast<int64_t>(c) * H + i / 2) * W + j / 2] +=
                    gy[(static_cast<int64_t>(c) * H2 + i) * W2 + j];
}

}  // namespace melisa::kernels
