#include "melisa/rollout.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "melisa/io.hpp"
#include "melisa/solver.hpp"

namespace melisa {

namespace {

int64_t frame_elems(const Tensor& seq) { return seq.numel() / seq.dim(0); }

void check_sequence(const Tensor& seq, const char* what) {
    if (seq.rank() != 4)
        throw DataError(std::string(what) + " must be [T,C,H,W], got " +
                        seq.shape_str());
}

}  // namespace

void RolloutConfig::validate(int window) const {
    if (context < 1 || context >= window)
        throw ConfigError("rollout context must be in [1, window), got " +
                          std::to_string(context) + " with window " +
                          std::to_string(window));
    if (horizon < 1)
        throw ConfigError("rollout horizon must be positive");
    if (ensemble < 1)
        throw ConfigError("ensemble size must be positive");
}

Tensor head_frames(const Tensor& seq, int q) {
    check_sequence(seq, "sequence");
    if (q < 0 || q > seq.dim(0))
        throw DataError("head length " + std::to_string(q) +
                        " out of range for " + std::to_string(seq.dim(0)) +
                        " frames");
    Tensor out({q, seq.dim(1), seq.dim(2), seq.dim(3)});
    std::memcpy(out.data(), seq.data(),
                sizeof(double) * static_cast<size_t>(q * frame_elems(seq)));
    return out;
}

Tensor tail_frames(const Tensor& seq, int q) {
    check_sequence(seq, "sequence");
    if (q < 0 || q > seq.dim(0))
        throw DataError("tail length " + std::to_string(q) +
                        " out of range for " + std::to_string(seq.dim(0)) +
                        " frames");
    Tensor out({q, seq.dim(1), seq.dim(2), seq.dim(3)});
    int64_t fe = frame_elems(seq);
    std::memcpy(out.data(), seq.data() + (seq.dim(0) - q) * fe,
                sizeof(double) * static_cast<size_t>(q * fe));
    return out;
}

Tensor append_frames(const Tensor& a, const Tensor& b) {
    check_sequence(a, "sequence");
    check_sequence(b, "sequence");
    for (int d = 1; d < 4; ++d)
        if (a.dim(d) != b.dim(d))
            throw DataError("frame shapes differ: " + a.shape_str() + " vs " +
                            b.shape_str());
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
    std::memcpy(out.data(), a.data(), sizeof(double) * size_t(a.numel()));
    std::memcpy(out.data() + a.numel(), b.data(),
                sizeof(double) * size_t(b.numel()));
    return out;
}

Tensor generate_block(const DenoiserNet& net, const Tensor& context, Rng& rng,
                      int64_t* evals) {
    const NetConfig& cfg = net.config();
    check_sequence(context, "context");
    if (context.dim(1) != cfg.channels || context.dim(2) != cfg.height ||
        context.dim(3) != cfg.width_s)
        throw DataError("context frames " + context.shape_str() +
                        " do not match the network's field shape");
    int w_ctx = context.dim(0);
    if (w_ctx < 1 || w_ctx >= cfg.window)
        throw DataError("context must hold between 1 and window-1 frames, got " +
                        std::to_string(w_ctx));
    int s = cfg.window - w_ctx;

    // Clean window: revealed context frames followed by zeros, channel-stacked.
    Tensor clean({cfg.window * cfg.channels, cfg.height, cfg.width_s});
    std::memcpy(clean.data(), context.data(),
                sizeof(double) * size_t(context.numel()));
    std::vector<uint8_t> mask(static_cast<size_t>(cfg.window), 0);
    for (int w = 0; w < w_ctx; ++w) mask[static_cast<size_t>(w)] = 1;

    Tensor eps(clean.shape());
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();

    Tensor input = net.assemble_input(eps, clean, mask);
    Tensor d = net.forward(input, 1.0, 0.0);
    if (evals) ++*evals;

    Tensor block({s, cfg.channels, cfg.height, cfg.width_s});
    std::memcpy(block.data(),
                d.data() + int64_t(w_ctx) * cfg.channels * cfg.height * cfg.width_s,
                sizeof(double) * size_t(block.numel()));
    // Keep generated frames on the simulation's resolved band so forecasts
    // share the training data's spectral support.
    return band_project(block);
}

RolloutResult rollout(const DenoiserNet& net, const Tensor& observed,
                      const RolloutConfig& cfg) {
    const NetConfig& nc = net.config();
    cfg.validate(nc.window);
    check_sequence(observed, "observed sequence");
    if (observed.dim(0) < cfg.context)
        throw DataError("observed sequence has " +
                        std::to_string(observed.dim(0)) + " frames, need " +
                        std::to_string(cfg.context) + " for context");

    RolloutResult res;
    res.frames = Tensor({cfg.horizon, nc.channels, nc.height, nc.width_s});
    Tensor context = tail_frames(observed, cfg.context);
    Rng rng(cfg.seed);
    int64_t fe = int64_t(nc.channels) * nc.height * nc.width_s;
    int done = 0;
    while (done < cfg.horizon) {
        Tensor block = generate_block(net, context, rng, &res.nfe);
        int q = std::min(block.dim(0), cfg.horizon - done);
        Tensor accepted = head_frames(block, q);
        std::memcpy(res.frames.data() + int64_t(done) * fe, accepted.data(),
                    sizeof(double) * size_t(accepted.numel()));
        done += q;
        context = tail_frames(append_frames(context, accepted), cfg.context);
    }
    return res;
}

std::vector<RolloutResult> ensemble_rollout(const DenoiserNet& net,
                                            const Tensor& observed,
                                            const RolloutConfig& cfg) {
    cfg.validate(net.config().window);
    std::vector<RolloutResult> members;
    members.reserve(static_cast<size_t>(cfg.ensemble));
    for (int m = 0; m < cfg.ensemble; ++m) {
        RolloutConfig mc = cfg;
        mc.seed = cfg.seed + 10ull * static_cast<uint64_t>(m);
        members.push_back(rollout(net, observed, mc));
    }
    return members;
}

}  // namespace melisa
