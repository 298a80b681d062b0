#pragma once

#include <string>
#include <vector>

#include "fmgan/nn.hpp"

namespace fmgan {

enum class Scale { Toy2d, Image };

const char* scale_name(Scale s);
Scale scale_from(const std::string& s);

struct ModelConfig {
    Scale scale = Scale::Toy2d;
    int image_side = 32;      // multiple of 4 (two 2x upsamplings)
    int image_channels = 3;
    int latent_dim = 64;      // 8 is the toy default set by config files
    int classes = 1;
    std::vector<int> toy_hidden{32, 64, 64};
    int feature_width = 128;  // width of the dense feature layer on image D/C/E
    int gen_base_channels = 64;

    void validate() const;
    // Flattened sample dimensionality at this scale.
    int64_t sample_dim() const;
    Shape sample_shape(int64_t batch) const;
};

// E: maps (x, c) to the latent heads (mu, eps). The class one-hot merges at
// the last dense layer of the trunk.
class Encoder {
public:
    Encoder() = default;
    Encoder(const ModelConfig& cfg, Rng& rng);

    struct Heads {
        Tensor mu, eps;  // [N, latent]
    };
    Heads heads(const Tensor& x, const std::vector<int>& labels, bool train);

    void collect_params(const std::string& prefix, ParamList& out) const;
    void collect_buffers(const std::string& prefix, ParamList& out) const;
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    // toy trunk
    Mlp toy_;
    // image trunk
    Conv2dLayer c1_, c2_, c3_;
    BatchNorm bn2_, bn3_;
    Dense fc1_;
    Dense head_;
};

// Full encode step: heads plus the reparameterized sample.
LatentCode encode(Encoder& enc, const Tensor& x, const std::vector<int>& labels, Rng& rng,
                  LatentScale scale_map, bool train);
// Deterministic variant used at inference: z = mu.
LatentCode encode_mean(Encoder& enc, const Tensor& x, const std::vector<int>& labels, bool train);

// G: samples from P(x | z, c); z and the one-hot class merge at the input.
// Image scale ends in tanh (range [-1, 1]); toy scale is a linear 2-vector.
class Generator {
public:
    Generator() = default;
    Generator(const ModelConfig& cfg, Rng& rng);

    Tensor generate(const Tensor& z, const std::vector<int>& labels, bool train);

    void collect_params(const std::string& prefix, ParamList& out) const;
    void collect_buffers(const std::string& prefix, ParamList& out) const;
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Mlp toy_;
    Dense fc_;
    BatchNorm bn0_, bn1_, bn2_;
    ConvT2dLayer d1_, d2_;
    Conv2dLayer out_;
};

// D: real/fake probability plus the feature tap (the activation entering the
// final dense layer). The logit output is the WGAN critic score.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const ModelConfig& cfg, Rng& rng);

    struct Out {
        Tensor prob;      // [N], clamped into (0, 1)
        Tensor logit;     // [N]
        Tensor features;  // [N, F] tap
    };
    Out discriminate(const Tensor& x, bool train);

    int64_t feature_dim() const;
    void collect_params(const std::string& prefix, ParamList& out) const;
    void collect_buffers(const std::string& prefix, ParamList& out) const;
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Mlp toy_;
    Conv2dLayer c1_, c2_, c3_;
    BatchNorm bn2_, bn3_;
    Dense fc1_;
    Dense out_;
};

// C: class posteriors plus the feature tap.
class Classifier {
public:
    Classifier() = default;
    Classifier(const ModelConfig& cfg, Rng& rng);

    struct Out {
        Tensor logits;      // [N, K]
        Tensor posteriors;  // [N, K], rows sum to 1
        Tensor features;    // [N, F] tap
    };
    Out classify(const Tensor& x, bool train);

    int64_t feature_dim() const;
    void collect_params(const std::string& prefix, ParamList& out) const;
    void collect_buffers(const std::string& prefix, ParamList& out) const;
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Mlp toy_;
    Conv2dLayer c1_, c2_, c3_;
    BatchNorm bn2_, bn3_;
    Dense fc1_;
    Dense out_;
};

// Checks a batch against the configured scale; raises on mismatch.
void check_sample_shape(const ModelConfig& cfg, const Tensor& x, const char* who);

}  // namespace fmgan
