#include "fmgan/nn.hpp"

#include <cmath>

namespace fmgan {

Tensor apply_act(const Tensor& x, Act a) {
    switch (a) {
        case Act::Relu: return relu(x);
        case Act::Tanh: return tanh(x);
        case Act::Sigmoid: return sigmoid(x);
        case Act::Linear: return x;
    }
    raise("apply_act: unknown activation");
}

const char* act_name(Act a) {
    switch (a) {
        case Act::Relu: return "relu";
        case Act::Tanh: return "tanh";
        case Act::Sigmoid: return "sigmoid";
        case Act::Linear: return "linear";
    }
    return "?";
}

Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    FMGAN_CHECK(fan_in > 0, "init_uniform: fan_in must be positive");
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    int64_t n = shape_numel(shape);
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return Tensor::param(std::move(shape), std::move(v));
}

// --- Dense ------------------------------------------------------------

Dense::Dense(int64_t in, int64_t out, Rng& rng) {
    FMGAN_CHECK(in > 0 && out > 0, "Dense: dimensions must be positive (" << in << " -> " << out
                                                                          << ")");
    w = init_uniform({in, out}, in, rng);
    b = Tensor::param_zeros({out});
}

Tensor Dense::forward(const Tensor& x) const {
    FMGAN_CHECK(x.ndim() == 2, "Dense: input must be [N, in], got " << shape_str(x.shape()));
    FMGAN_CHECK(x.dim(1) == w.dim(0), "Dense: input width " << x.dim(1) << " vs layer "
                                                            << w.dim(0) << " -> " << w.dim(1));
    return add(matmul(x, w), b);
}

void Dense::collect_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

// --- Conv layers --------------------------------------------------------

Conv2dLayer::Conv2dLayer(int64_t in_ch, int64_t out_ch, int64_t k, int stride_, Padding padding_,
                         Rng& rng)
    : stride(stride_), padding(padding_) {
    w = init_uniform({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    b = Tensor::param_zeros({out_ch});
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }

void Conv2dLayer::collect_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

ConvT2dLayer::ConvT2dLayer(int64_t in_ch, int64_t out_ch, int64_t k, int stride_, int pad_,
                           Rng& rng)
    : stride(stride_), pad(pad_) {
    w = init_uniform({in_ch, out_ch, k, k}, in_ch * k * k, rng);
    b = Tensor::param_zeros({out_ch});
}

Tensor ConvT2dLayer::forward(const Tensor& x) const {
    return conv2d_transpose(x, w, b, stride, pad);
}

void ConvT2dLayer::collect_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

// --- BatchNorm ----------------------------------------------------------

BatchNorm::BatchNorm(int64_t channels) {
    gamma = Tensor::param({channels}, std::vector<float>(static_cast<size_t>(channels), 1.0f));
    beta = Tensor::param_zeros({channels});
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
    FMGAN_CHECK(x.ndim() == 2 || x.ndim() == 4,
                "BatchNorm: input must be [N,F] or [N,C,H,W], got " << shape_str(x.shape()));
    int64_t channels = x.ndim() == 2 ? x.dim(1) : x.dim(1);
    FMGAN_CHECK(channels == gamma.dim(0), "BatchNorm: channel mismatch, input "
                                              << shape_str(x.shape()) << " vs " << gamma.dim(0));
    std::vector<int> dims = x.ndim() == 2 ? std::vector<int>{0} : std::vector<int>{0, 2, 3};
    Shape bshape = x.ndim() == 2 ? Shape{1, channels} : Shape{1, channels, 1, 1};

    Tensor mean_t, var_t;
    if (train) {
        FMGAN_CHECK(x.dim(0) >= 2, "BatchNorm: train mode needs batch >= 2, got " << x.dim(0));
        auto [m, v] = batch_stats(x, dims);
        mean_t = m;
        var_t = v;
        // running stats track the detached batch statistics
        const float* pm = mean_t.data();
        const float* pv = var_t.data();
        float* rm = running_mean.data();
        float* rv = running_var.data();
        for (int64_t c = 0; c < channels; ++c) {
            rm[c] = momentum * rm[c] + (1.0f - momentum) * pm[c];
            rv[c] = momentum * rv[c] + (1.0f - momentum) * pv[c];
        }
    } else {
        mean_t = reshape(running_mean.detach(), bshape);
        var_t = reshape(running_var.detach(), bshape);
    }
    auto xhat = div(sub(x, mean_t), sqrt(add_scalar(var_t, eps)));
    auto g = reshape(gamma, bshape);
    auto bt = reshape(beta, bshape);
    return add(mul(xhat, g), bt);
}

void BatchNorm::collect_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

void BatchNorm::collect_buffers(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".running_mean", running_mean});
    out.push_back({prefix + ".running_var", running_var});
}

// --- Mlp ------------------------------------------------------------------

Tensor Mlp::forward(const Tensor& x) const { return forward_with_tap(x).out; }

Mlp::Tapped Mlp::forward_with_tap(const Tensor& x) const {
    FMGAN_CHECK(!layers.empty(), "Mlp: empty network");
    Tensor h = x;
    Tensor tap;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (i + 1 == layers.size()) tap = h;
        h = layers[i].forward(h);
        h = apply_act(h, act_after[i]);
    }
    return {h, tap};
}

int64_t Mlp::param_count() const {
    int64_t n = 0;
    for (const auto& l : layers) n += l.w.numel() + l.b.numel();
    return n;
}

void Mlp::collect_params(const std::string& prefix, ParamList& out) const {
    for (size_t i = 0; i < layers.size(); ++i) {
        layers[i].collect_params(prefix + ".fc" + std::to_string(i), out);
    }
}

Mlp build_mlp(const std::vector<LayerSpec>& spec, Rng& rng) {
    FMGAN_CHECK(!spec.empty(), "build_mlp: empty layer spec");
    Mlp net;
    for (size_t i = 0; i < spec.size(); ++i) {
        const auto& s = spec[i];
        if (s.kind == LayerSpec::Kind::Dense) {
            FMGAN_CHECK(s.in > 0 && s.out > 0,
                        "build_mlp: layer " << i << " has non-positive sizes");
            if (!net.layers.empty()) {
                FMGAN_CHECK(net.layers.back().out_dim() == s.in,
                            "build_mlp: layer " << i << " expects input " << s.in
                                                << " but previous layer produces "
                                                << net.layers.back().out_dim());
            }
            net.layers.emplace_back(s.in, s.out, rng);
            net.act_after.push_back(Act::Linear);
        } else if (s.kind == LayerSpec::Kind::Activation) {
            FMGAN_CHECK(!net.layers.empty(),
                        "build_mlp: layer " << i << " is an activation with no preceding dense");
            FMGAN_CHECK(net.act_after.back() == Act::Linear,
                        "build_mlp: layer " << i << " stacks a second activation");
            net.act_after.back() = s.act;
        } else {
            raise("build_mlp: layer " + std::to_string(i) + " kind is not supported in a dense chain");
        }
    }
    return net;
}

// --- optimizers -------------------------------------------------------------

const char* opt_kind_name(OptKind k) {
    switch (k) {
        case OptKind::Sgd: return "sgd";
        case OptKind::RmsProp: return "rmsprop";
        case OptKind::Adam: return "adam";
    }
    return "?";
}

OptKind opt_kind_from(const std::string& s) {
    if (s == "sgd") return OptKind::Sgd;
    if (s == "rmsprop") return OptKind::RmsProp;
    if (s == "adam") return OptKind::Adam;
    raise("unknown optimizer '" + s + "' (expected sgd|rmsprop|adam)");
}

Optimizer::Optimizer(OptimizerConfig cfg, ParamList params)
    : cfg_(cfg), params_(std::move(params)) {
    // lr = 0 is a legal no-op (training configs require lr > 0 separately)
    FMGAN_CHECK(std::isfinite(cfg_.lr) && cfg_.lr >= 0,
                "Optimizer: learning rate must be finite and >= 0, got " << cfg_.lr);
    size_t nslots = cfg_.kind == OptKind::Sgd ? 0 : (cfg_.kind == OptKind::RmsProp ? 1 : 2);
    slots_.resize(nslots);
    for (auto& slot : slots_) {
        slot.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            slot[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0f);
        }
    }
}

void Optimizer::step(const std::vector<std::vector<float>>& grads) {
    FMGAN_CHECK(grads.size() == params_.size(),
                "Optimizer::step: " << grads.size() << " gradients for " << params_.size()
                                    << " parameters");
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        FMGAN_CHECK(grads[i].size() == static_cast<size_t>(p.tensor.numel()),
                    "Optimizer::step: gradient size mismatch for " << p.name);
        for (float g : grads[i]) {
            FMGAN_CHECK(std::isfinite(g), "Optimizer::step: non-finite gradient in " << p.name);
        }
    }
    ++steps_;
    for (size_t i = 0; i < params_.size(); ++i) {
        float* p = params_[i].tensor.data();
        const float* g = grads[i].data();
        size_t n = grads[i].size();
        switch (cfg_.kind) {
            case OptKind::Sgd: {
                for (size_t j = 0; j < n; ++j) p[j] -= cfg_.lr * g[j];
                break;
            }
            case OptKind::RmsProp: {
                float* a = slots_[0][i].data();
                for (size_t j = 0; j < n; ++j) {
                    a[j] = cfg_.rho * a[j] + (1.0f - cfg_.rho) * g[j] * g[j];
                    p[j] -= cfg_.lr * g[j] / std::sqrt(a[j] + cfg_.eps);
                }
                break;
            }
            case OptKind::Adam: {
                float* m = slots_[0][i].data();
                float* v = slots_[1][i].data();
                float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(steps_));
                float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(steps_));
                for (size_t j = 0; j < n; ++j) {
                    m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
                    v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
                    float mh = m[j] / bc1;
                    float vh = v[j] / bc2;
                    p[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
                }
                break;
            }
        }
    }
}

std::vector<std::vector<float>> collect_grads(const ParamList& params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        if (p.tensor.has_grad()) {
            auto g = p.tensor.grad();
            out.emplace_back(g.begin(), g.end());
        } else {
            out.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
        }
    }
    return out;
}

void clamp_params(ParamList& params, float c) {
    FMGAN_CHECK(c > 0, "clamp_params: clamp must be positive, got " << c);
    if (!std::isfinite(c)) return;  // clamp = inf disables clipping
    for (auto& p : params) {
        float* v = p.tensor.data();
        int64_t n = p.tensor.numel();
        for (int64_t i = 0; i < n; ++i) v[i] = std::min(c, std::max(-c, v[i]));
    }
}

}  // namespace fmgan
