#include "melisa/solver.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "melisa/io.hpp"

namespace melisa {

namespace {

using cplx = std::complex<double>;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Signed wavenumber for index j on an N-point grid.
int wavenum(int j, int n) { return j <= n / 2 - 1 ? j : j - n; }

}  // namespace

void SolverConfig::validate() const {
    if (!power_of_two(grid) || grid < 8)
        throw ConfigError("solver grid must be a power of two >= 8, got " +
                          std::to_string(grid));
    if (!(nu >= 0.0))
        throw ConfigError("viscosity must be non-negative");
    if (forcing && forcing_n < 1)
        throw ConfigError("forcing wavenumber must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("timestep must be positive");
    if (stride < 1) throw ConfigError("save stride must be >= 1");
}

/// All spectral buffers hold coefficient-normalized data: forward transforms
/// are divided by N^2 immediately, backward transforms are plain FFTW sums.
struct KolmogorovSolver::Impl {
    int n = 0;
    int64_t m = 0;  // n * n
    std::vector<cplx> omega_hat;
    std::vector<cplx> force_hat;   // spectral curl of the body force
    std::vector<double> e_half;    // exp(-nu |k|^2 dt / 2)
    std::vector<double> e_full;    // e_half squared
    std::vector<double> inv_k2;    // 1/|k|^2, zero at k = 0
    std::vector<int> kx, ky;
    std::vector<bool> keep;        // 2/3-rule mask

    // Scratch for transforms; plans alias these buffers.
    std::vector<cplx> work_in, work_out;
    fftw_plan fwd = nullptr, bwd = nullptr;

    explicit Impl(const SolverConfig& cfg) {
        n = cfg.grid;
        m = int64_t(n) * n;
        omega_hat.assign(m, cplx(0.0));
        force_hat.assign(m, cplx(0.0));
        e_half.resize(m);
        e_full.resize(m);
        inv_k2.resize(m);
        kx.resize(m);
        ky.resize(m);
        keep.resize(m);
        work_in.resize(m);
        work_out.resize(m);

        const int kmax = n / 3;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int64_t idx = int64_t(i) * n + j;
                int kyv = wavenum(i, n), kxv = wavenum(j, n);
                kx[idx] = kxv;
                ky[idx] = kyv;
                double k2 = double(kxv) * kxv + double(kyv) * kyv;
                inv_k2[idx] = k2 > 0.0 ? 1.0 / k2 : 0.0;
                keep[idx] = std::abs(kxv) <= kmax && std::abs(kyv) <= kmax;
                double e = std::exp(-cfg.nu * k2 * cfg.dt * 0.5);
                e_half[idx] = e;
                e_full[idx] = e * e;
            }

        fwd = fftw_plan_dft_2d(
            n, n, reinterpret_cast<fftw_complex*>(work_in.data()),
            reinterpret_cast<fftw_complex*>(work_out.data()), FFTW_FORWARD,
            FFTW_ESTIMATE);
        bwd = fftw_plan_dft_2d(
            n, n, reinterpret_cast<fftw_complex*>(work_in.data()),
            reinterpret_cast<fftw_complex*>(work_out.data()), FFTW_BACKWARD,
            FFTW_ESTIMATE);

        if (cfg.forcing) {
            // Curl of (sin(n y), 0) is -n cos(n y): modes (kx=0, ky=+-n)
            // with coefficient -n/2.
            for (int i = 0; i < n; ++i) {
                int kyv = wavenum(i, n);
                if (std::abs(kyv) == cfg.forcing_n)
                    force_hat[int64_t(i) * n] = cplx(-0.5 * cfg.forcing_n, 0.0);
            }
        }
    }

    ~Impl() {
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }

    /// Physical -> normalized coefficients.
    void forward(const std::vector<cplx>& phys, std::vector<cplx>& spec) {
        std::memcpy(work_in.data(), phys.data(), sizeof(cplx) * m);
        fftw_execute(fwd);
        double s = 1.0 / double(m);
        for (int64_t i = 0; i < m; ++i) spec[i] = work_out[i] * s;
    }

    /// Normalized coefficients -> physical (complex with ~zero imag).
    void backward(const std::vector<cplx>& spec, std::vector<cplx>& phys) {
        std::memcpy(work_in.data(), spec.data(), sizeof(cplx) * m);
        fftw_execute(bwd);
        std::memcpy(phys.data(), work_out.data(), sizeof(cplx) * m);
    }

    void velocity_spectral(const std::vector<cplx>& w, std::vector<cplx>& uh,
                           std::vector<cplx>& vh) const {
        const cplx iu(0.0, 1.0);
        for (int64_t i = 0; i < m; ++i) {
            cplx psi = w[i] * inv_k2[i];
            uh[i] = iu * double(ky[i]) * psi;
            vh[i] = -iu * double(kx[i]) * psi;
        }
    }

    /// Dealiased advection + forcing. Optionally reports max |u|, |v|.
    void nonlinear(const std::vector<cplx>& w, std::vector<cplx>& out,
                   bool with_forcing, double* max_u = nullptr,
                   double* max_v = nullptr) {
        std::vector<cplx> uh(m), vh(m), gx(m), gy(m);
        velocity_spectral(w, uh, vh);
        const cplx iu(0.0, 1.0);
        for (int64_t i = 0; i < m; ++i) {
            gx[i] = iu * double(kx[i]) * w[i];
            gy[i] = iu * double(ky[i]) * w[i];
        }
        std::vector<cplx> u(m), v(m), wx(m), wy(m);
        backward(uh, u);
        backward(vh, v);
        backward(gx, wx);
        backward(gy, wy);
        if (max_u) {
            double mu = 0.0, mv = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                mu = std::max(mu, std::abs(u[i].real()));
                mv = std::max(mv, std::abs(v[i].real()));
            }
            *max_u = mu;
            if (max_v) *max_v = mv;
        }
        std::vector<cplx> adv(m);
        for (int64_t i = 0; i < m; ++i)
            adv[i] = cplx(-(u[i].real() * wx[i].real() +
                            v[i].real() * wy[i].real()),
                          0.0);
        forward(adv, out);
        for (int64_t i = 0; i < m; ++i)
            if (!keep[i]) out[i] = cplx(0.0);
        out[0] = cplx(0.0);  // advection of a mean-free field stays mean-free
        if (with_forcing)
            for (int64_t i = 0; i < m; ++i) out[i] += force_hat[i];
    }
};

KolmogorovSolver::KolmogorovSolver(SolverConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    impl_ = std::make_unique<Impl>(cfg_);
}

KolmogorovSolver::~KolmogorovSolver() = default;

void KolmogorovSolver::set_vorticity(const Tensor& omega) {
    const int n = impl_->n;
    if (omega.rank() != 2 || omega.dim(0) != n || omega.dim(1) != n)
        throw DataError("vorticity field must be [" + std::to_string(n) + "," +
                        std::to_string(n) + "], got " + omega.shape_str());
    if (!omega.all_finite())
        throw DataError("vorticity field contains non-finite values");
    std::vector<cplx> phys(impl_->m);
    for (int64_t i = 0; i < impl_->m; ++i) phys[i] = cplx(omega[i], 0.0);
    impl_->forward(phys, impl_->omega_hat);
    impl_->omega_hat[0] = cplx(0.0);
}

Tensor KolmogorovSolver::vorticity() const {
    std::vector<cplx> phys(impl_->m);
    impl_->backward(impl_->omega_hat, phys);
    Tensor out({impl_->n, impl_->n});
    for (int64_t i = 0; i < impl_->m; ++i) out[i] = phys[i].real();
    return out;
}

std::pair<Tensor, Tensor> KolmogorovSolver::velocity() const {
    const int64_t m = impl_->m;
    std::vector<cplx> uh(m), vh(m), u(m), v(m);
    impl_->velocity_spectral(impl_->omega_hat, uh, vh);
    impl_->backward(uh, u);
    impl_->backward(vh, v);
    Tensor ut({impl_->n, impl_->n}), vt({impl_->n, impl_->n});
    for (int64_t i = 0; i < m; ++i) {
        ut[i] = u[i].real();
        vt[i] = v[i].real();
    }
    return {std::move(ut), std::move(vt)};
}

void KolmogorovSolver::step() {
    Impl& s = *impl_;
    const int64_t m = s.m;
    const double dt = cfg_.dt;
    std::vector<cplx> n1(m), n2(m), n3(m), n4(m), tmp(m);

    double mu = 0.0, mv = 0.0;
    s.nonlinear(s.omega_hat, n1, cfg_.forcing, &mu, &mv);
    const double dx = 2.0 * std::numbers::pi / s.n;
    const double cfl = dt * (mu + mv) / dx;
    if (cfl > 1.0)
        throw NumericalError("CFL violation: advective CFL number " +
                             std::to_string(cfl) + " exceeds 1");

    // RK4 with the diffusion semigroup applied between stages.
    for (int64_t i = 0; i < m; ++i)
        tmp[i] = s.e_half[i] * (s.omega_hat[i] + 0.5 * dt * n1[i]);
    s.nonlinear(tmp, n2, cfg_.forcing);

    for (int64_t i = 0; i < m; ++i)
        tmp[i] = s.e_half[i] * s.omega_hat[i] + 0.5 * dt * n2[i];
    s.nonlinear(tmp, n3, cfg_.forcing);

    for (int64_t i = 0; i < m; ++i)
        tmp[i] = s.e_full[i] * s.omega_hat[i] + dt * s.e_half[i] * n3[i];
    s.nonlinear(tmp, n4, cfg_.forcing);

    for (int64_t i = 0; i < m; ++i)
        s.omega_hat[i] =
            s.e_full[i] * s.omega_hat[i] +
            dt / 6.0 *
                (s.e_full[i] * n1[i] + 2.0 * s.e_half[i] * (n2[i] + n3[i]) +
                 n4[i]);
    s.omega_hat[0] = cplx(0.0);
}

Tensor KolmogorovSolver::rhs() const {
    Impl& s = *impl_;
    std::vector<cplx> nl(s.m), phys(s.m);
    s.nonlinear(s.omega_hat, nl, cfg_.forcing);
    for (int64_t i = 0; i < s.m; ++i) {
        double k2 = double(s.kx[i]) * s.kx[i] + double(s.ky[i]) * s.ky[i];
        nl[i] -= cfg_.nu * k2 * s.omega_hat[i];
    }
    s.backward(nl, phys);
    Tensor out({s.n, s.n});
    for (int64_t i = 0; i < s.m; ++i) out[i] = phys[i].real();
    return out;
}

Tensor KolmogorovSolver::nonlinear_rhs() const {
    Impl& s = *impl_;
    std::vector<cplx> nl(s.m), phys(s.m);
    s.nonlinear(s.omega_hat, nl, cfg_.forcing);
    s.backward(nl, phys);
    Tensor out({s.n, s.n});
    for (int64_t i = 0; i < s.m; ++i) out[i] = phys[i].real();
    return out;
}

double KolmogorovSolver::energy() const {
    auto [u, v] = velocity();
    double acc = 0.0;
    for (int64_t i = 0; i < u.numel(); ++i) acc += u[i] * u[i] + v[i] * v[i];
    return 0.5 * acc / double(u.numel());
}

double KolmogorovSolver::enstrophy() const {
    Tensor w = vorticity();
    double acc = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) acc += w[i] * w[i];
    return acc / double(w.numel());
}

double KolmogorovSolver::max_spectral_asymmetry() const {
    const Impl& s = *impl_;
    const int n = s.n;
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int64_t a = int64_t(i) * n + j;
            int64_t b = int64_t((n - i) % n) * n + (n - j) % n;
            worst = std::max(worst,
                             std::abs(s.omega_hat[a] - std::conj(s.omega_hat[b])));
        }
    return worst;
}

std::vector<double> KolmogorovSolver::enstrophy_spectrum() const {
    const Impl& s = *impl_;
    std::vector<double> shells(s.n / 2 + 1, 0.0);
    for (int64_t i = 0; i < s.m; ++i) {
        double k = std::sqrt(double(s.kx[i]) * s.kx[i] +
                             double(s.ky[i]) * s.ky[i]);
        int r = int(std::lround(k));
        if (r < int(shells.size())) shells[r] += std::norm(s.omega_hat[i]);
    }
    return shells;
}

Tensor band_limited_vorticity(int grid, double peak_wavenumber, Rng& rng) {
    if (!power_of_two(grid) || grid < 8)
        throw ConfigError("grid must be a power of two >= 8");
    const int n = grid;
    const int64_t m = int64_t(n) * n;
    const int kmax = n / 3;
    std::vector<cplx> spec(m, cplx(0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            // Fixed draw order keeps the field deterministic in the seed.
            double a = rng.normal(), b = rng.normal();
            int kyv = wavenum(i, n), kxv = wavenum(j, n);
            double k = std::sqrt(double(kxv) * kxv + double(kyv) * kyv);
            if (k == 0.0 || std::abs(kxv) > kmax || std::abs(kyv) > kmax)
                continue;
            double env = std::exp(-0.5 * (k - peak_wavenumber) *
                                  (k - peak_wavenumber));
            spec[int64_t(i) * n + j] = env * cplx(a, b);
        }
    // Hermitian-symmetrize so the physical field is real.
    std::vector<cplx> sym(m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int64_t a = int64_t(i) * n + j;
            int64_t b = int64_t((n - i) % n) * n + (n - j) % n;
            sym[a] = 0.5 * (spec[a] + std::conj(spec[b]));
        }

    std::vector<cplx> phys(m);
    fftw_plan p = fftw_plan_dft_2d(
        n, n, reinterpret_cast<fftw_complex*>(sym.data()),
        reinterpret_cast<fftw_complex*>(phys.data()), FFTW_BACKWARD,
        FFTW_ESTIMATE);
    fftw_execute(p);
    fftw_destroy_plan(p);

    Tensor out({n, n});
    double mean = 0.0;
    for (int64_t i = 0; i < m; ++i) mean += phys[i].real();
    mean /= double(m);
    double rms = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        out[i] = phys[i].real() - mean;
        rms += out[i] * out[i];
    }
    rms = std::sqrt(rms / double(m));
    if (rms == 0.0) throw NumericalError("degenerate random initial field");
    for (int64_t i = 0; i < m; ++i) out[i] /= rms;
    return out;
}

Tensor band_project(const Tensor& field) {
    if (field.rank() < 2)
        throw DataError("band_project needs trailing grid dims, got " +
                        field.shape_str());
    const int h = int(field.dim(field.rank() - 2));
    const int w = int(field.dim(field.rank() - 1));
    const int64_t fe = int64_t(h) * w;
    const int64_t slices = field.numel() / fe;
    const int kmax_y = h / 3, kmax_x = w / 3;

    std::vector<cplx> buf_in(fe), buf_out(fe);
    fftw_plan fwd = fftw_plan_dft_2d(
        h, w, reinterpret_cast<fftw_complex*>(buf_in.data()),
        reinterpret_cast<fftw_complex*>(buf_out.data()), FFTW_FORWARD,
        FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_2d(
        h, w, reinterpret_cast<fftw_complex*>(buf_in.data()),
        reinterpret_cast<fftw_complex*>(buf_out.data()), FFTW_BACKWARD,
        FFTW_ESTIMATE);

    Tensor out(field.shape());
    const double inv = 1.0 / double(fe);
    for (int64_t s = 0; s < slices; ++s) {
        const int64_t off = s * fe;
        for (int64_t i = 0; i < fe; ++i) buf_in[i] = cplx(field[off + i], 0.0);
        fftw_execute(fwd);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                int kyv = wavenum(i, h), kxv = wavenum(j, w);
                bool drop = (kyv == 0 && kxv == 0) || std::abs(kyv) > kmax_y ||
                            std::abs(kxv) > kmax_x;
                buf_in[int64_t(i) * w + j] =
                    drop ? cplx(0.0) : buf_out[int64_t(i) * w + j];
            }
        fftw_execute(bwd);
        for (int64_t i = 0; i < fe; ++i) out[off + i] = buf_out[i].real() * inv;
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    return out;
}

std::vector<Tensor> generate_trajectories(const SolverConfig& cfg, int n_traj,
                                          int n_frames, int burn_in,
                                          uint64_t seed) {
    cfg.validate();
    if (n_traj < 1 || n_frames < 1)
        throw ConfigError("need at least one trajectory and one frame");
    if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
    std::vector<Tensor> out;
    out.reserve(n_traj);
    const int n = cfg.grid;
    for (int tr = 0; tr < n_traj; ++tr) {
        Rng rng(seed + uint64_t(tr));
        KolmogorovSolver solver(cfg);
        solver.set_vorticity(band_limited_vorticity(n, 4.0, rng));
        for (int s = 0; s < burn_in; ++s) solver.step();
        Tensor traj({n_frames, 1, n, n});
        for (int f = 0; f < n_frames; ++f) {
            for (int s = 0; s < cfg.stride; ++s) solver.step();
            Tensor w = solver.vorticity();
            if (!w.all_finite())
                throw NumericalError("non-finite vorticity in trajectory " +
                                     std::to_string(tr) + " frame " +
                                     std::to_string(f));
            std::memcpy(traj.data() + int64_t(f) * n * n, w.data(),
                        sizeof(double) * n * n);
        }
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace melisa
