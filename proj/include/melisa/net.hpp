#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "melisa/ops.hpp"
#include "melisa/rng.hpp"

namespace melisa {

/// Architecture hyperparameters of the window denoiser.
struct NetConfig {
    int depth = 2;     ///< number of down/up resolution stages
    int width = 16;    ///< channels at full resolution (doubled per stage)
    int window = 6;    ///< frames W per window
    int channels = 1;  ///< physical channels C per frame
    int height = 64;
    int width_s = 64;
    int embed = 64;    ///< sinusoidal features per scalar (t and r separately)
    int groups = 8;    ///< group-norm groups (clamped to channel count)

    int in_channels() const { return 2 * window * channels + window; }
    int out_channels() const { return window * channels; }
    void validate() const;
    bool operator==(const NetConfig&) const = default;
};

/// Named parameter tensors in declaration order; the order is the wire order
/// of checkpoints.
class ParamStore {
public:
    int add(std::string name, Tensor value);
    size_t size() const { return values_.size(); }
    int64_t total_elements() const;
    const std::string& name(int id) const { return names_[static_cast<size_t>(id)]; }
    const Tensor& value(int id) const { return values_[static_cast<size_t>(id)]; }
    Tensor& value(int id) { return values_[static_cast<size_t>(id)]; }
    int find(const std::string& name) const;  ///< -1 if absent

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

/// Lift functors mapping a parameter id into each evaluation mode.
struct EvalLift {
    const ParamStore* ps;
    Tensor operator()(int id) const { return ps->value(id); }
};
struct DualLift {
    const ParamStore* ps;
    Dual operator()(int id) const { return Dual::constant(ps->value(id)); }
};
struct TapeLift {
    std::vector<Var> vars;
    Var operator()(int id) const { return vars[static_cast<size_t>(id)]; }
};
TapeLift lift_params(Tape& tape, const ParamStore& ps);

/// Conditioning layout shared by every window denoiser:
/// Concat[noisy | mask-zeroed clean | per-frame indicator planes].
Tensor assemble_window_input(const Tensor& noisy, const Tensor& clean,
                             const std::vector<uint8_t>& mask, int window,
                             int channels);
/// Tangent in the same layout: direction in the noisy block, zeros elsewhere.
Tensor assemble_window_tangent(const Tensor& dnoisy, int window, int channels);

/// Compact conv UNet over channel-stacked frame windows with circular padding
/// and FiLM conditioning on (t, r). Output is the predicted clean window.
class DenoiserNet {
public:
    DenoiserNet(NetConfig cfg, uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Concat[noisy | mask-zeroed clean | mask indicator planes].
    /// `mask[w]` nonzero means frame w is observed.
    Tensor assemble_input(const Tensor& noisy, const Tensor& clean,
                          const std::vector<uint8_t>& mask) const;
    /// Tangent with the same layout: direction in the noisy block, zeros
    /// elsewhere.
    Tensor assemble_tangent(const Tensor& dnoisy) const;

    template <class T, class L>
    T apply(const L& lift, const T& x, const T& t, const T& r) const;

    /// Plain evaluation convenience.
    Tensor forward(const Tensor& x, double t, double r) const;

    static constexpr double kGnEps = 1e-5;

private:
    struct ConvP {
        int w = -1, b = -1;
    };
    struct LinP {
        int w = -1, b = -1;
    };
    struct GnP {
        int g = -1, b = -1;
    };
    struct ResBlockP {
        GnP gn1;
        ConvP conv1;
        LinP film;
        GnP gn2;
        ConvP conv2;
        ConvP proj;
        int cin = 0, cout = 0;
        bool has_proj = false;
    };
    struct DownStageP {
        ResBlockP rb;
        ConvP down;
    };
    struct UpStageP {
        ConvP up;
        ResBlockP rb;
    };

    int groups_for(int channels) const;
    ConvP add_conv(Rng& rng, const std::string& name, int cout, int cin, int k,
                   bool zero_init);
    LinP add_linear(Rng& rng, const std::string& name, int rows, int cols,
                    bool zero_init);
    GnP add_gn(const std::string& name, int channels);
    ResBlockP add_resblock(Rng& rng, const std::string& name, int cin, int cout);

    template <class T, class L>
    T resblock(const ResBlockP& rb, const L& lift, const T& x, const T& e) const;

    NetConfig cfg_;
    ParamStore params_;
    LinP emb1_, emb2_;
    ConvP stem_;
    std::vector<DownStageP> downs_;
    ResBlockP mid_;
    std::vector<UpStageP> ups_;
    GnP head_gn_;
    ConvP head_;
};

template <class T, class L>
T DenoiserNet::resblock(const ResBlockP& rb, const L& lift, const T& x,
                        const T& e) const {
    T h = group_norm(x, lift(rb.gn1.g), lift(rb.gn1.b), groups_for(rb.cin), kGnEps);
    h = conv2d(silu(h), lift(rb.conv1.w), lift(rb.conv1.b));
    T sc = linear(lift(rb.film.w), e, lift(rb.film.b));
    T fs = slice(sc, 0, rb.cout);
    T fb = slice(sc, rb.cout, 2 * rb.cout);
    h = channel_affine(h, offset(fs, 1.0), fb);
    h = group_norm(h, lift(rb.gn2.g), lift(rb.gn2.b), groups_for(rb.cout), kGnEps);
    h = conv2d(silu(h), lift(rb.conv2.w), lift(rb.conv2.b));
    if (rb.has_proj) {
        T s = conv2d(x, lift(rb.proj.w), lift(rb.proj.b));
        return add(s, h);
    }
    return add(x, h);
}

template <class T, class L>
T DenoiserNet::apply(const L& lift, const T& x, const T& t, const T& r) const {
    T e = concat(std::vector<T>{time_features(t, cfg_.embed),
                                time_features(r, cfg_.embed)});
    e = silu(linear(lift(emb1_.w), e, lift(emb1_.b)));
    e = linear(lift(emb2_.w), e, lift(emb2_.b));

    T h = conv2d(x, lift(stem_.w), lift(stem_.b));
    std::vector<T> skips;
    skips.reserve(downs_.size());
    for (const DownStageP& st : downs_) {
        h = resblock(st.rb, lift, h, e);
        skips.push_back(h);
        h = conv2d(down2(h), lift(st.down.w), lift(st.down.b));
    }
    h = resblock(mid_, lift, h, e);
    for (int d = cfg_.depth - 1; d >= 0; --d) {
        const UpStageP& st = ups_[static_cast<size_t>(d)];
        h = conv2d(up2(h), lift(st.up.w), lift(st.up.b));
        h = concat(std::vector<T>{h, skips[static_cast<size_t>(d)]});
        h = resblock(st.rb, lift, h, e);
    }
    h = group_norm(h, lift(head_gn_.g), lift(head_gn_.b), groups_for(cfg_.width),
                   kGnEps);
    h = silu(h);
    return conv2d(h, lift(head_.w), lift(head_.b));
}

}  // namespace melisa
