#pragma once

#include <cstdint>
#include <vector>

#include "melisa/net.hpp"
#include "melisa/rng.hpp"

namespace melisa {

/// Inference settings for blockwise autoregressive forecasting. Each network
/// call denoises one window and contributes `window - context` new frames.
struct RolloutConfig {
    int context = 2;      ///< frames carried between blocks
    int horizon = 318;    ///< forecast length in frames
    int ensemble = 1;     ///< independent forecast members
    uint64_t seed = 0;    ///< base seed; member m uses seed + 10*m

    void validate(int window) const;
};

/// First q frames of a [T,C,H,W] sequence (q may be 0).
Tensor head_frames(const Tensor& seq, int q);
/// Last q frames.
Tensor tail_frames(const Tensor& seq, int q);
/// Concatenation along the frame axis.
Tensor append_frames(const Tensor& a, const Tensor& b);

/// One denoiser evaluation at (r, t) = (0, 1) on a pure-noise window whose
/// first dim(context, 0) frames are revealed through the conditioning
/// channels; returns the remaining predicted frames as [S,C,H,W], projected
/// onto the simulation's resolved spectral band (see band_project). All
/// stochasticity enters through the noise drawn from `rng`. Increments
/// `*evals` once when given.
Tensor generate_block(const DenoiserNet& net, const Tensor& context, Rng& rng,
                      int64_t* evals = nullptr);

struct RolloutResult {
    Tensor frames;    ///< [horizon, C, H, W]
    int64_t nfe = 0;  ///< network evaluations performed
};

/// Autoregressive forecast seeded from the last `cfg.context` frames of
/// `observed` ([T,C,H,W] with T >= context). Blocks of S = window - context
/// frames are generated until `cfg.horizon` frames are accepted; the final
/// block is truncated as needed, so nfe == ceil(horizon / S).
RolloutResult rollout(const DenoiserNet& net, const Tensor& observed,
                      const RolloutConfig& cfg);

/// cfg.ensemble independent forecasts; member m runs with seed
/// cfg.seed + 10*m.
std::vector<RolloutResult> ensemble_rollout(const DenoiserNet& net,
                                            const Tensor& observed,
                                            const RolloutConfig& cfg);

}  // namespace melisa
