#include "melisa/net.hpp"

#include <cmath>

namespace melisa {

void NetConfig::validate() const {
    if (depth < 1) throw std::runtime_error("depth must be >= 1");
    if (width < 1) throw std::runtime_error("width must be >= 1");
    if (window < 2) throw std::runtime_error("window must be >= 2");
    if (channels < 1) throw std::runtime_error("channels must be >= 1");
    if (embed < 2 || embed % 2) throw std::runtime_error("embed must be even, >= 2");
    int stride = 1 << depth;
    if (height % stride || width_s % stride)
        throw std::runtime_error("spatial extent must be divisible by 2^depth");
    int g = std::min(groups, width);
    for (int d = 0; d <= depth; ++d) {
        int c = width << d;
        if (c % g) throw std::runtime_error("group count must divide stage channels");
    }
}

int ParamStore::add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return static_cast<int>(values_.size()) - 1;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

int ParamStore::find(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

TapeLift lift_params(Tape& tape, const ParamStore& ps) {
    TapeLift lift;
    lift.vars.reserve(ps.size());
    for (size_t i = 0; i < ps.size(); ++i)
        lift.vars.push_back(tape.leaf(ps.value(static_cast<int>(i))));
    return lift;
}

int DenoiserNet::groups_for(int channels) const {
    int g = std::min(cfg_.groups, channels);
    while (channels % g) --g;
    return g;
}

DenoiserNet::ConvP DenoiserNet::add_conv(Rng& rng, const std::string& name,
                                         int cout, int cin, int k, bool zero_init) {
    Tensor w({cout, cin, k, k});
    if (!zero_init) {
        double std = std::sqrt(2.0 / (cin * k * k));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    }
    ConvP p;
    p.w = params_.add(name + ".w", std::move(w));
    p.b = params_.add(name + ".b", Tensor::zeros({cout}));
    return p;
}

DenoiserNet::LinP DenoiserNet::add_linear(Rng& rng, const std::string& name,
                                          int rows, int cols, bool zero_init) {
    Tensor w({rows, cols});
    if (!zero_init) {
        double std = std::sqrt(1.0 / cols);
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    }
    LinP p;
    p.w = params_.add(name + ".w", std::move(w));
    p.b = params_.add(name + ".b", Tensor::zeros({rows}));
    return p;
}

DenoiserNet::GnP DenoiserNet::add_gn(const std::string& name, int channels) {
    GnP p;
    p.g = params_.add(name + ".g", Tensor::full({channels}, 1.0));
    p.b = params_.add(name + ".b", Tensor::zeros({channels}));
    return p;
}

DenoiserNet::ResBlockP DenoiserNet::add_resblock(Rng& rng, const std::string& name,
                                                 int cin, int cout) {
    ResBlockP rb;
    rb.cin = cin;
    rb.cout = cout;
    rb.gn1 = add_gn(name + ".gn1", cin);
    rb.conv1 = add_conv(rng, name + ".conv1", cout, cin, 3, false);
    // zero-init FiLM projection: identity modulation at the start
    rb.film = add_linear(rng, name + ".film", 2 * cout, 2 * cfg_.embed, true);
    rb.gn2 = add_gn(name + ".gn2", cout);
    // zero-init second conv: the block starts as (projected) identity
    rb.conv2 = add_conv(rng, name + ".conv2", cout, cout, 3, true);
    if (cin != cout) {
        rb.has_proj = true;
        rb.proj = add_conv(rng, name + ".proj", cout, cin, 1, false);
    }
    return rb;
}

DenoiserNet::DenoiserNet(NetConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    int E2 = 2 * cfg_.embed;
    emb1_ = add_linear(rng, "emb.fc1", E2, E2, false);
    emb2_ = add_linear(rng, "emb.fc2", E2, E2, false);
    stem_ = add_conv(rng, "stem", cfg_.width, cfg_.in_channels(), 3, false);
    for (int d = 0; d < cfg_.depth; ++d) {
        int c = cfg_.width << d;
        DownStageP st;
        st.rb = add_resblock(rng, "down" + std::to_string(d) + ".rb", c, c);
        st.down = add_conv(rng, "down" + std::to_string(d) + ".ds", 2 * c, c, 3, false);
        downs_.push_back(st);
    }
    int cm = cfg_.width << cfg_.depth;
    mid_ = add_resblock(rng, "mid.rb", cm, cm);
    ups_.resize(static_cast<size_t>(cfg_.depth));
    for (int d = cfg_.depth - 1; d >= 0; --d) {
        int c = cfg_.width << d;
        UpStageP st;
        st.up = add_conv(rng, "up" + std::to_string(d) + ".us", c, 2 * c, 1, false);
        st.rb = add_resblock(rng, "up" + std::to_string(d) + ".rb", 2 * c, c);
        ups_[static_cast<size_t>(d)] = st;
    }
    head_gn_ = add_gn("head.gn", cfg_.width);
    // zero-init head: the denoiser output starts at exactly zero
    head_ = add_conv(rng, "head", cfg_.out_channels(), cfg_.width, 3, true);
}

Tensor assemble_window_input(const Tensor& noisy, const Tensor& clean,
                             const std::vector<uint8_t>& mask, int window,
                             int channels) {
    if (noisy.rank() != 3 || !clean.same_shape(noisy))
        throw std::runtime_error("window blocks must be matching [W*C,H,Ws] tensors");
    int WC = window * channels;
    if (noisy.dim(0) != WC)
        throw std::runtime_error("window block channel count mismatch");
    if (static_cast<int>(mask.size()) != window)
        throw std::runtime_error("mask length must equal the window");
    int H = noisy.dim(1), Ws = noisy.dim(2);
    Tensor out({2 * WC + window, H, Ws});
    int64_t plane = static_cast<int64_t>(H) * Ws;
    double* dst = out.data();
    const double* np = noisy.data();
    for (int64_t i = 0; i < noisy.numel(); ++i) dst[i] = np[i];
    dst += noisy.numel();
    const double* cp = clean.data();
    for (int w = 0; w < window; ++w) {
        bool obs = mask[static_cast<size_t>(w)] != 0;
        for (int c = 0; c < channels; ++c) {
            int64_t off = (static_cast<int64_t>(w) * channels + c) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[off + i] = obs ? cp[off + i] : 0.0;
        }
    }
    dst += clean.numel();
    for (int w = 0; w < window; ++w) {
        double v = mask[static_cast<size_t>(w)] ? 1.0 : 0.0;
        for (int64_t i = 0; i < plane; ++i) dst[static_cast<int64_t>(w) * plane + i] = v;
    }
    return out;
}

Tensor assemble_window_tangent(const Tensor& dnoisy, int window, int channels) {
    int WC = window * channels;
    if (dnoisy.dim(0) != WC)
        throw std::runtime_error("tangent block channel count mismatch");
    Tensor out({2 * WC + window, dnoisy.dim(1), dnoisy.dim(2)});
    const double* sp = dnoisy.data();
    double* dp = out.data();
    for (int64_t i = 0; i < dnoisy.numel(); ++i) dp[i] = sp[i];
    return out;
}

Tensor DenoiserNet::assemble_input(const Tensor& noisy, const Tensor& clean,
                                   const std::vector<uint8_t>& mask) const {
    if (noisy.rank() != 3 || noisy.dim(1) != cfg_.height || noisy.dim(2) != cfg_.width_s)
        throw std::runtime_error("assemble_input expects [W*C,H,Ws] blocks");
    return assemble_window_input(noisy, clean, mask, cfg_.window, cfg_.channels);
}

Tensor DenoiserNet::assemble_tangent(const Tensor& dnoisy) const {
    return assemble_window_tangent(dnoisy, cfg_.window, cfg_.channels);
}

Tensor DenoiserNet::forward(const Tensor& x, double t, double r) const {
    if (r > t || t > 1.0 || r < 0.0)
        throw std::runtime_error("times must satisfy 0 <= r <= t <= 1");
    EvalLift lift{&params_};
    return apply(lift, x, Tensor::scalar(t), Tensor::scalar(r));
}

}  // namespace melisa
