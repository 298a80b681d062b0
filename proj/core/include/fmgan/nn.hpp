#pragma once

#include <string>
#include <vector>

#include "fmgan/losses.hpp"
#include "fmgan/tensor.hpp"

namespace fmgan {

struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

enum class Act { Relu, Tanh, Sigmoid, Linear };

Tensor apply_act(const Tensor& x, Act a);
const char* act_name(Act a);

// Scaled-uniform fan-in init: U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng);

// Fully connected layer, x [N, in] -> [N, out].
struct Dense {
    Tensor w;  // [in, out]
    Tensor b;  // [out]

    Dense() = default;
    Dense(int64_t in, int64_t out, Rng& rng);
    Tensor forward(const Tensor& x) const;
    int64_t in_dim() const { return w.dim(0); }
    int64_t out_dim() const { return w.dim(1); }
    void collect_params(const std::string& prefix, ParamList& out) const;
};

struct Conv2dLayer {
    Tensor w;  // [out, in, k, k]
    Tensor b;  // [out]
    int stride = 1;
    Padding padding = Padding::Same;

    Conv2dLayer() = default;
    Conv2dLayer(int64_t in_ch, int64_t out_ch, int64_t k, int stride, Padding padding, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect_params(const std::string& prefix, ParamList& out) const;
};

struct ConvT2dLayer {
    Tensor w;  // [in, out, k, k]
    Tensor b;  // [out]
    int stride = 2;
    int pad = 1;

    ConvT2dLayer() = default;
    ConvT2dLayer(int64_t in_ch, int64_t out_ch, int64_t k, int stride, int pad, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect_params(const std::string& prefix, ParamList& out) const;
};

// Batch normalization over the channel axis of [N, C, H, W] or the feature
// axis of [N, F]. Train mode requires batch >= 2 and updates running stats;
// eval mode is a fixed affine map of the input.
struct BatchNorm {
    Tensor gamma, beta;              // learned
    Tensor running_mean, running_var;  // buffers, updated in train mode
    float momentum = 0.99f;
    float eps = 1e-5f;

    BatchNorm() = default;
    explicit BatchNorm(int64_t channels);
    Tensor forward(const Tensor& x, bool train);
    void collect_params(const std::string& prefix, ParamList& out) const;
    void collect_buffers(const std::string& prefix, ParamList& out) const;
};

// --- declarative MLP (the toy-study architecture vocabulary) ---------------

struct LayerSpec {
    enum class Kind { Dense, Conv, Deconv, BatchNorm, Activation, Flatten, Reshape };
    Kind kind = Kind::Dense;
    int64_t in = 0, out = 0;  // dense
    Act act = Act::Linear;    // activation

    static LayerSpec dense(int64_t in, int64_t out) {
        LayerSpec s;
        s.kind = Kind::Dense;
        s.in = in;
        s.out = out;
        return s;
    }
    static LayerSpec activation(Act a) {
        LayerSpec s;
        s.kind = Kind::Activation;
        s.act = a;
        return s;
    }
};

struct Mlp {
    std::vector<Dense> layers;
    std::vector<Act> act_after;  // one per dense layer; Linear means none

    Tensor forward(const Tensor& x) const;
    // out plus the activation entering the last dense layer (the feature tap).
    struct Tapped {
        Tensor out;
        Tensor tap;
    };
    Tapped forward_with_tap(const Tensor& x) const;

    int64_t param_count() const;
    int64_t in_dim() const { return layers.front().in_dim(); }
    int64_t out_dim() const { return layers.back().out_dim(); }
    void collect_params(const std::string& prefix, ParamList& out) const;
};

// Builds a dense/activation chain. Errors name the offending layer index.
Mlp build_mlp(const std::vector<LayerSpec>& spec, Rng& rng);

// --- optimizers -------------------------------------------------------------

enum class OptKind { Sgd, RmsProp, Adam };

const char* opt_kind_name(OptKind k);
OptKind opt_kind_from(const std::string& s);

struct OptimizerConfig {
    OptKind kind = OptKind::RmsProp;
    float lr = 5e-5f;
    float rho = 0.9f;      // rmsprop decay
    float eps = 1e-8f;     // rmsprop/adam denominator floor
    float beta1 = 0.9f;    // adam
    float beta2 = 0.999f;  // adam
};

// Owns per-parameter accumulator slots aligned with the bound parameter
// list. Gradients are supplied explicitly so callers control exactly which
// objective produced them.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptimizerConfig cfg, ParamList params);

    // grads[i] must match params[i] in size. Throws on non-finite gradients,
    // naming the parameter.
    void step(const std::vector<std::vector<float>>& grads);

    const OptimizerConfig& config() const { return cfg_; }
    uint64_t steps() const { return steps_; }
    const ParamList& params() const { return params_; }
    size_t slot_count() const { return slots_.size(); }
    std::vector<std::vector<float>>& slot(size_t i) { return slots_[i]; }
    const std::vector<std::vector<float>>& slot(size_t i) const { return slots_[i]; }
    void set_steps(uint64_t s) { steps_ = s; }

private:
    OptimizerConfig cfg_;
    ParamList params_;
    // rmsprop: slots_[0]=sq accum; adam: slots_[0]=m, slots_[1]=v; sgd: none.
    std::vector<std::vector<std::vector<float>>> slots_;
    uint64_t steps_ = 0;
};

// Copies param.grad() for every entry (zeros when a param was unreachable).
std::vector<std::vector<float>> collect_grads(const ParamList& params);

// Clamps every parameter value into [-c, c] (the WGAN critic trick).
void clamp_params(ParamList& params, float c);

}  // namespace fmgan
