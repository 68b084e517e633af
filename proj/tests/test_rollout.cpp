/// @file
/// @brief Tests for blockwise autoregressive inference: frame-window algebra,
/// single-block generation, horizon accounting, determinism, and ensembles.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "melisa/io.hpp"
#include "melisa/rng.hpp"
#include "melisa/rollout.hpp"

using namespace melisa;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor counting_seq(int frames, int c, int h, int w) {
    Tensor t({frames, c, h, w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = double(i);
    return t;
}

NetConfig tiny_cfg() {
    NetConfig cfg;
    cfg.depth = 1;
    cfg.width = 8;
    cfg.window = 4;
    cfg.channels = 1;
    cfg.height = 8;
    cfg.width_s = 8;
    cfg.embed = 8;
    cfg.groups = 4;
    return cfg;
}

/// Fresh net with every parameter nudged off its initialization so the
/// zero-initialized output head responds to its inputs.
DenoiserNet perturbed_net(uint64_t seed) {
    DenoiserNet net(tiny_cfg(), seed);
    Rng rng(seed + 1);
    ParamStore& ps = net.params();
    for (size_t i = 0; i < ps.size(); ++i) {
        Tensor& v = ps.value(int(i));
        for (int64_t j = 0; j < v.numel(); ++j) v[j] += 0.05 * rng.normal();
    }
    return net;
}

Tensor random_frames(Rng& rng, int frames, const NetConfig& cfg) {
    Tensor t({frames, cfg.channels, cfg.height, cfg.width_s});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("frame-window algebra: head, tail, append") {
    Tensor s = counting_seq(5, 2, 3, 4);
    int64_t fe = 2 * 3 * 4;

    Tensor h0 = head_frames(s, 0);
    CHECK(h0.dim(0) == 0);
    CHECK(h0.numel() == 0);
    CHECK(bitwise_equal(tail_frames(s, 5), s));
    CHECK(bitwise_equal(head_frames(s, 5), s));

    Tensor h2 = head_frames(s, 2);
    REQUIRE(h2.dim(0) == 2);
    for (int64_t i = 0; i < 2 * fe; ++i) CHECK(h2[i] == double(i));
    Tensor t3 = tail_frames(s, 3);
    REQUIRE(t3.dim(0) == 3);
    for (int64_t i = 0; i < 3 * fe; ++i) CHECK(t3[i] == double(i + 2 * fe));

    CHECK(bitwise_equal(head_frames(t3, 3), t3));
    CHECK(bitwise_equal(append_frames(h2, t3), s));
    Tensor empty_back = append_frames(s, head_frames(s, 0));
    CHECK(bitwise_equal(empty_back, s));

    CHECK_THROWS_AS(head_frames(s, 6), DataError);
    CHECK_THROWS_AS(tail_frames(s, -1), DataError);
    CHECK_THROWS_AS(append_frames(s, counting_seq(2, 2, 3, 5)), DataError);
    CHECK_THROWS_AS(head_frames(Tensor({3, 4}), 1), DataError);
}

TEST_CASE("block generation: shape, call count, and noise dependence") {
    DenoiserNet net = perturbed_net(101);
    const NetConfig& cfg = net.config();
    Rng data_rng(55);

    for (int w_ctx : {1, 2, 3}) {
        Tensor ctx = random_frames(data_rng, w_ctx, cfg);
        int64_t evals = 0;
        Rng rng(7);
        Tensor block = generate_block(net, ctx, rng, &evals);
        CHECK(evals == 1);
        REQUIRE(block.rank() == 4);
        CHECK(block.dim(0) == cfg.window - w_ctx);
        CHECK(block.dim(1) == cfg.channels);
        CHECK(block.dim(2) == cfg.height);
        CHECK(block.dim(3) == cfg.width_s);
        CHECK(block.all_finite());

        // Same noise stream, same block.
        Rng rng2(7);
        Tensor again = generate_block(net, ctx, rng2);
        CHECK(bitwise_equal(block, again));

        // Different noise must move the prediction on a responsive net.
        Rng rng3(8);
        Tensor other = generate_block(net, ctx, rng3);
        CHECK(max_abs_diff(block, other) > 1e-9);
    }

    // The conditioning frames matter too.
    Tensor ca = random_frames(data_rng, 2, cfg);
    Tensor cb = random_frames(data_rng, 2, cfg);
    Rng ra(9), rb(9);
    CHECK(max_abs_diff(generate_block(net, ca, ra),
                       generate_block(net, cb, rb)) > 1e-9);

    Tensor bad({2, 1, 8, 7});
    Rng rng(1);
    CHECK_THROWS_AS(generate_block(net, bad, rng), DataError);
    Tensor too_many = random_frames(data_rng, 4, cfg);
    CHECK_THROWS_AS(generate_block(net, too_many, rng), DataError);
}

TEST_CASE("rollout: horizon, NFE accounting, and context discipline") {
    DenoiserNet net = perturbed_net(202);
    const NetConfig& cfg = net.config();
    Rng data_rng(66);
    Tensor observed = random_frames(data_rng, 6, cfg);

    RolloutConfig rc;
    rc.context = 2;
    rc.seed = 40;
    const int s = cfg.window - rc.context;
    for (int horizon : {1, 2, 3, 4, 5, 7, 10}) {
        rc.horizon = horizon;
        RolloutResult res = rollout(net, observed, rc);
        CHECK(res.frames.dim(0) == horizon);
        CHECK(res.nfe == (horizon + s - 1) / s);
        CHECK(res.frames.all_finite());
    }

    // Horizon of exactly one block takes a single call.
    rc.horizon = s;
    CHECK(rollout(net, observed, rc).nfe == 1);

    // Shadow simulation: an independent loop over the public block generator,
    // keeping context as the tail of (observed tail || accepted frames), must
    // reproduce the forecast bit for bit.
    rc.horizon = 7;
    RolloutResult res = rollout(net, observed, rc);
    Rng rng(rc.seed);
    Tensor accepted = head_frames(observed, 0);
    Tensor seq = tail_frames(observed, rc.context);
    while (accepted.dim(0) < rc.horizon) {
        Tensor block = generate_block(net, tail_frames(seq, rc.context), rng);
        int q = std::min(block.dim(0), rc.horizon - accepted.dim(0));
        accepted = append_frames(accepted, head_frames(block, q));
        seq = append_frames(seq, head_frames(block, q));
    }
    CHECK(bitwise_equal(res.frames, accepted));

    // Context frames beyond the last rc.context never influence the result.
    RolloutResult from_tail = rollout(net, tail_frames(observed, 2), rc);
    CHECK(bitwise_equal(res.frames, from_tail.frames));

    // Wider context: S = 1, every frame needs its own call.
    RolloutConfig wide = rc;
    wide.context = 3;
    wide.horizon = 4;
    RolloutResult wres = rollout(net, observed, wide);
    CHECK(wres.nfe == 4);
    CHECK(wres.frames.dim(0) == 4);
}

TEST_CASE("rollout: determinism and validation") {
    DenoiserNet net = perturbed_net(303);
    Rng data_rng(77);
    Tensor observed = random_frames(data_rng, 3, net.config());

    RolloutConfig rc;
    rc.context = 2;
    rc.horizon = 5;
    rc.seed = 11;
    RolloutResult a = rollout(net, observed, rc);
    RolloutResult b = rollout(net, observed, rc);
    CHECK(bitwise_equal(a.frames, b.frames));
    rc.seed = 12;
    CHECK(max_abs_diff(a.frames, rollout(net, observed, rc).frames) > 1e-9);

    RolloutConfig bad = rc;
    bad.context = 0;
    CHECK_THROWS_AS(rollout(net, observed, bad), ConfigError);
    bad.context = net.config().window;
    CHECK_THROWS_AS(rollout(net, observed, bad), ConfigError);
    bad = rc;
    bad.horizon = 0;
    CHECK_THROWS_AS(rollout(net, observed, bad), ConfigError);
    bad = rc;
    bad.ensemble = 0;
    CHECK_THROWS_AS(ensemble_rollout(net, observed, bad), ConfigError);

    Tensor short_obs = random_frames(data_rng, 1, net.config());
    CHECK_THROWS_AS(rollout(net, short_obs, rc), DataError);
}

TEST_CASE("ensemble rollout: seed offsets and member independence") {
    DenoiserNet net = perturbed_net(404);
    Rng data_rng(88);
    Tensor observed = random_frames(data_rng, 2, net.config());

    RolloutConfig rc;
    rc.context = 2;
    rc.horizon = 4;
    rc.seed = 5;
    rc.ensemble = 1;
    std::vector<RolloutResult> one = ensemble_rollout(net, observed, rc);
    REQUIRE(one.size() == 1);
    CHECK(bitwise_equal(one[0].frames, rollout(net, observed, rc).frames));

    rc.ensemble = 3;
    std::vector<RolloutResult> members = ensemble_rollout(net, observed, rc);
    REQUIRE(members.size() == 3);
    for (size_t i = 0; i < members.size(); ++i) {
        CHECK(members[i].nfe == 2);
        for (size_t j = i + 1; j < members.size(); ++j)
            CHECK(max_abs_diff(members[i].frames, members[j].frames) > 1e-9);
    }

    // Member m is exactly a solo rollout at seed base + 10*m.
    RolloutConfig solo = rc;
    solo.ensemble = 1;
    solo.seed = rc.seed + 20;
    CHECK(bitwise_equal(members[2].frames, rollout(net, observed, solo).frames));
}
