/// @file
/// @brief Evaluation metrics for predicted trajectories: relative L2 error,
/// Gaussian-window SSIM, radially averaged spectral discrepancy (PSDD),
/// turbulent kinetic energy difference (TKED), mixing-rate difference (MRD),
/// and the empirical CRPS for ensembles.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "melisa/tensor.hpp"

namespace melisa {

/// Small stabilizer used across the metric formulas.
inline constexpr double kMetricEps = 1e-12;

/// Relative L2 error of one trajectory over its first `t_eval` frames:
/// ||pred - ref||_2 / (||ref||_2 + eps) after flattening time and space.
double rl2_traj(const Tensor& pred, const Tensor& ref, int t_eval);

/// Mean SSIM between two 2D frames using a Gaussian window (default 7x7,
/// sigma 1.5) applied as a separable zero-padded same convolution. The data
/// range L is max(ref) - min(ref); a constant reference returns 1 when the
/// frames agree within tolerance and 0 otherwise.
double ssim_frame(const Tensor& ref, const Tensor& pred, int window = 7,
                  double sigma = 1.5);

/// Radially averaged power spectrum of a 2D frame. The FFT is shifted so the
/// zero mode sits at (H/2, W/2); bin k holds the average of |F|^2 over cells
/// with floor(distance to center) == k.
std::vector<double> radial_spectrum(const Tensor& frame);

/// Cell count of each radial bin for an HxW frame; the counts sum to H*W.
std::vector<int64_t> radial_bin_counts(int height, int width);

/// Retained-bin default: 220 for 256x256 frames, otherwise every bin.
int kr_default(int height, int width);

/// Mean absolute log-difference of two cropped, sum-normalized radial
/// profiles. Inputs are raw (unnormalized) radial spectra.
double psdd_from_profiles(const std::vector<double>& px,
                          const std::vector<double>& py, int k_r);

/// PSDD between two equal-length frame sequences: the profile discrepancy
/// averaged over frames. Frames are [H,W] tensors.
double psdd_frames(const std::vector<Tensor>& pred,
                   const std::vector<Tensor>& ref, int k_r);

/// Turbulent-kinetic-energy difference between two trajectory sets. Each
/// trajectory is [T,C,H,W]; fluctuations are taken about per-trajectory
/// temporal means, TKE maps average the squared fluctuations over time and
/// trajectories, and the score is mean((TKEp - TKEr)^2) / mean(TKEr).
double tked(const std::vector<Tensor>& pred, const std::vector<Tensor>& ref);

/// Batch-mean TKE map of a trajectory set, as a [C,H,W] tensor.
Tensor tke_map_mean(const std::vector<Tensor>& trajs);

/// Normalized empirical autocorrelation over lags 0..K after centering by the
/// global mean of the whole set; entry 0 is always 1. Requires T > 2K; throws
/// DataError on constant data.
std::vector<double> autocorrelation(const std::vector<Tensor>& trajs, int lags);

/// Decay exponent lambda >= 0 fitted to the normalized empirical
/// autocorrelation over lags 0..K.
double mixing_rate(const std::vector<Tensor>& trajs, int lags);

/// Default lag count: min(20, (T-1)/2).
int mixing_lags_default(int frames);

/// Relative mixing-rate error |pred - gt| / gt; gt must be positive.
double mrd(double lambda_pred, double lambda_gt);

/// Empirical CRPS of a scalar ensemble against a target:
/// mean |x_n - y| - (1/2) mean |x_n - x_m|.
double crps_point(const std::vector<double>& members, double y);

/// Pointwise CRPS averaged over every (frame, channel, pixel) position of a
/// trajectory. `members` holds M predicted trajectories shaped like `ref`.
double crps_traj(const std::vector<Tensor>& members, const Tensor& ref);

/// Per-trajectory values with their mean and standard error.
struct MetricSummary {
    std::vector<double> per_traj;
    double mean = 0.0;
    double sem = 0.0;

    static MetricSummary of(std::vector<double> values);
};

/// Evaluation over a test set: short-horizon field metrics plus full-horizon
/// statistical metrics, aggregated over trajectories.
struct MetricReport {
    int short_horizon = 0;  // frames used by RL2 and SSIM
    int long_horizon = 0;   // frames used by PSDD, TKED, MRD
    MetricSummary rl2, ssim, psdd, tked, mrd;
    std::optional<MetricSummary> crps;

    /// Aligned text table, one row per trajectory plus the aggregate row.
    std::string table() const;
    /// CSV with header traj,rl2,ssim,psdd,tked,mrd[,crps].
    std::string csv() const;
};

/// Computes the full report. `pred` and `ref` are parallel trajectory sets
/// of identical shapes [T,C,H,W]. `ensemble`, when nonempty, holds M rollout
/// sets parallel to `pred` (ensemble[m][b]) and enables the CRPS column.
MetricReport evaluate_rollout(
    const std::vector<Tensor>& pred, const std::vector<Tensor>& ref,
    const std::vector<std::vector<Tensor>>& ensemble = {});

}  // namespace melisa
