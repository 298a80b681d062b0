#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "fmgan/center_bank.hpp"
#include "fmgan/datasets.hpp"
#include "fmgan/models.hpp"
#include "fmgan/nn.hpp"

namespace fmgan {

enum class Method { CvaeGan, Gan, Wgan, FmGan };

const char* method_name(Method m);
Method method_from(const std::string& s);

// Switches over the three generator-side matching sites: pixel-level
// reconstruction, discriminator-feature terms (pairwise + mean), and
// classifier-feature terms (pairwise + mean). Off means the site drops out
// of the generator/encoder objectives entirely.
struct AblationMask {
    bool img = true;
    bool fd = true;
    bool fc = true;
};

struct TrainRunConfig {
    Method method = Method::CvaeGan;
    int64_t batch = 64;
    int64_t max_iterations = 0;
    OptimizerConfig opt;
    float wgan_clamp = 0.01f;
    float center_decay = 0.9f;
    LossWeights weights;
    LatentScale latent_scale = LatentScale::ExpHalfEps;
    AblationMask ablation;
    bool use_encoder = true;  // false trains the conditional variant without E
    uint64_t seed = 0;
    int64_t metrics_every = 1;
    int64_t checkpoint_every = 0;
    int64_t points_every = 0;
    int64_t eval_every = 0;

    void validate() const;
};

// The six objective values plus method extras, one row per iteration.
struct StepRecord {
    int64_t iteration = 0;
    double loss_d = 0, loss_c = 0, loss_kl = 0, loss_g = 0, loss_gd = 0, loss_gc = 0;
    // gan: naive generator loss; wgan: critic estimate and generator score.
    double extra_a = 0, extra_b = 0;
};

// Owns the networks, optimizer slots, the center bank and the training RNG.
// One Trainer instance is confined to one thread.
class Trainer {
public:
    Trainer(TrainRunConfig run_cfg, ModelConfig model_cfg, std::shared_ptr<const Dataset> data);

    StepRecord step();

    struct Sinks {
        std::function<void(const StepRecord&)> on_metrics;
        std::function<void(Trainer&, int64_t)> on_checkpoint;
        std::function<void(Trainer&, int64_t)> on_points;
        std::function<void(Trainer&, int64_t)> on_eval;
    };
    // Runs until the iteration counter reaches `until_iteration`.
    void run(int64_t until_iteration, const Sinks& sinks);

    int64_t iteration() const { return iteration_; }
    const TrainRunConfig& run_config() const { return run_cfg_; }
    const ModelConfig& model_config() const { return model_cfg_; }
    const Dataset& dataset() const { return *data_; }

    bool has_encoder() const { return encoder_.has_value(); }
    bool has_classifier() const { return classifier_.has_value(); }
    Encoder& encoder() { return *encoder_; }
    Generator& generator() { return generator_; }
    Discriminator& discriminator() { return discriminator_; }
    Classifier& classifier() { return *classifier_; }
    CenterBank& bank() { return bank_; }
    const CenterBank& bank() const { return bank_; }
    Rng& rng() { return rng_; }
    void set_iteration(int64_t it) { iteration_ = it; }

    // Named trainable parameters / buffers of one network ("E","G","D","C").
    ParamList& params(const std::string& net);
    ParamList buffers() const;
    std::vector<std::string> nets() const;
    Optimizer& optimizer(const std::string& net);

    // Gradients applied by the most recent step, per network (test hook).
    const std::map<std::string, std::vector<std::vector<float>>>& last_grads() const {
        return last_grads_;
    }

    // Samples z ~ N(0, I) batches from the training RNG stream.
    Tensor sample_prior(int64_t m);

private:
    StepRecord cvae_gan_step();
    StepRecord gan_step();
    StepRecord wgan_step();
    StepRecord fm_gan_step();
    void check_finite(double v, const char* term) const;
    Tensor class_mean(const Tensor& features, const std::vector<int>& labels, int cls,
                      int64_t count) const;

    TrainRunConfig run_cfg_;
    ModelConfig model_cfg_;
    std::shared_ptr<const Dataset> data_;

    std::optional<Encoder> encoder_;
    Generator generator_;
    Discriminator discriminator_;
    std::optional<Classifier> classifier_;

    std::map<std::string, ParamList> params_;
    std::map<std::string, Optimizer> opts_;
    std::map<std::string, std::vector<std::vector<float>>> last_grads_;

    CenterBank bank_;
    Rng rng_;
    int64_t iteration_ = 0;
};

}  // namespace fmgan
