/// @file
/// @brief Pseudo-spectral solver for the 2D incompressible Navier-Stokes
/// equations in vorticity form on the doubly periodic square [0, 2pi]^2,
/// with Kolmogorov forcing. Used to generate ground-truth trajectories.

#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "melisa/rng.hpp"
#include "melisa/tensor.hpp"

namespace melisa {

/// Parameters of one simulation. The domain is fixed at [0, 2pi]^2 so a
/// wavenumber k corresponds to the Fourier mode e^{i k.x} directly.
struct SolverConfig {
    /// Grid resolution per side; must be a power of two.
    int grid = 64;
    /// Kinematic viscosity. Zero is accepted for conservation test runs.
    double nu = 0.025;
    /// Forcing wavenumber n in f = (sin(n y), 0).
    int forcing_n = 4;
    /// Whether the body force is applied at all.
    bool forcing = true;
    /// Integration timestep.
    double dt = 5e-3;
    /// Saved-frame stride in steps when generating datasets.
    int stride = 20;

    /// Throws ConfigError on invalid settings.
    void validate() const;
};

/// Integrates the vorticity equation
///   d omega / dt = -u . grad(omega) + nu lap(omega) - n cos(n y)
/// with a 2/3-dealiased pseudo-spectral right-hand side and an RK4 scheme
/// whose diffusion term is treated exactly by an integrating factor.
///
/// The spectral state is kept in coefficient normalization (forward FFT
/// divided by N^2) so mode magnitudes match the analytic Fourier series.
class KolmogorovSolver {
public:
    explicit KolmogorovSolver(SolverConfig cfg);
    ~KolmogorovSolver();
    KolmogorovSolver(const KolmogorovSolver&) = delete;
    KolmogorovSolver& operator=(const KolmogorovSolver&) = delete;

    const SolverConfig& config() const { return cfg_; }

    /// Loads a real [N,N] vorticity field; the mean mode is zeroed.
    void set_vorticity(const Tensor& omega);
    /// Current vorticity as a real [N,N] tensor.
    Tensor vorticity() const;
    /// Velocity (u, v) recovered from the streamfunction, each [N,N].
    /// Incompressible by construction.
    std::pair<Tensor, Tensor> velocity() const;

    /// Advances one timestep. Throws NumericalError when the advective CFL
    /// number dt * max(|u|/dx + |v|/dx) exceeds 1.
    void step();

    /// Full right-hand side (advection + forcing + diffusion) evaluated at
    /// the current state, returned as a real [N,N] tensor.
    Tensor rhs() const;
    /// The dealiased advection + forcing part alone, as a real [N,N] tensor.
    Tensor nonlinear_rhs() const;

    /// Mean kinetic energy (u^2 + v^2)/2 over the grid.
    double energy() const;
    /// Mean squared vorticity over the grid.
    double enstrophy() const;
    /// Largest |omega_hat(k) - conj(omega_hat(-k))| over all modes.
    double max_spectral_asymmetry() const;
    /// Isotropic enstrophy spectrum: sum of |omega_hat|^2 over integer
    /// radial shells r = round(|k|), up to N/2 inclusive.
    std::vector<double> enstrophy_spectrum() const;

private:
    struct Impl;
    SolverConfig cfg_;
    std::unique_ptr<Impl> impl_;
};

/// Isotropic band-limited Gaussian random vorticity: spectral amplitudes
/// follow exp(-(|k| - peak)^2 / 2) with uniform random phases, zero mean,
/// normalized to unit RMS. Deterministic in the Rng stream.
Tensor band_limited_vorticity(int grid, double peak_wavenumber, Rng& rng);

/// Projects fields onto the solver's resolved subspace: spectral modes
/// outside the 2/3-rule square (|kx| > W/3 or |ky| > H/3) are zeroed, as is
/// the mean mode, which the dynamics conserve at zero. The trailing two dims
/// are the grid; leading dims are batched. Fields already in the subspace
/// pass through unchanged up to roundoff.
Tensor band_project(const Tensor& field);

/// Integrates `n_traj` independent trajectories of `n_frames` saved frames
/// each. Every trajectory starts from a fresh band-limited random field
/// (peak wavenumber 4), runs `burn_in` steps unsaved, then records a frame
/// every cfg.stride steps (the first frame lands after one stride). Returns
/// tensors of shape [n_frames, 1, N, N]; trajectory j uses seed + j.
std::vector<Tensor> generate_trajectories(const SolverConfig& cfg, int n_traj,
                                          int n_frames, int burn_in,
                                          uint64_t seed);

}  // namespace melisa
