#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fmgan/datasets.hpp"
#include "fmgan/models.hpp"

namespace fmgan {

struct EvalReport {
    std::string metric;
    double value = 0;
    int64_t samples = 0;
    std::string config_digest;
    int64_t iteration = 0;
};

// A classifier trained on real data only and then frozen; evaluation scores
// are computed against its posteriors.
class ReferenceClassifier {
public:
    ReferenceClassifier() = default;
    ReferenceClassifier(Classifier net, ModelConfig cfg, double test_accuracy,
                        std::string provenance);

    // Eval-mode posteriors for a batch.
    Tensor posteriors(const Tensor& x);
    int predict_one(const Tensor& x1);  // x1 is a single [C,H,W] item
    double test_accuracy() const { return test_accuracy_; }
    const std::string& provenance() const { return provenance_; }
    const ModelConfig& config() const { return cfg_; }
    Classifier& net() { return net_; }

private:
    Classifier net_;
    ModelConfig cfg_;
    double test_accuracy_ = 0;
    std::string provenance_;
};

// Trains a fresh classifier on `train`, measures held-out accuracy on
// `test`, and freezes it.
ReferenceClassifier train_reference_classifier(const Dataset& train, const Dataset& test,
                                               const ModelConfig& cfg, int64_t steps,
                                               int64_t batch, float lr, uint64_t seed);

// Emits a batch of samples of one class; generators and held-out oracles
// both fit this shape.
using ClassSampler = std::function<Tensor(int cls, int64_t count, Rng& rng)>;

ClassSampler generator_sampler(Generator& g, int latent_dim);

// Fraction of per-class samples the frozen classifier assigns to their
// conditioning class.
double top1_discriminability(ReferenceClassifier& ref, const ClassSampler& sampler,
                             int64_t per_class_count, Rng& rng);

// exp(mean KL(p(y|x) || mean posterior)) over n samples; bounded by [1, K].
double realism_score(ReferenceClassifier& ref, const Tensor& samples);

// Same score from an explicit posterior matrix [N, K] (rows sum to 1).
double realism_from_posteriors(const Tensor& posteriors);

struct ModeCoverage {
    double coverage = 0;             // occupied angular bins / bins
    std::vector<int64_t> histogram;  // per-bin on-ring counts
    int64_t on_ring = 0;
    int64_t off_ring = 0;
};

// Points within |dist-to-center - r| <= 3*sigma + tol land in angular bins.
ModeCoverage mode_coverage(const Tensor& points, const RingDistribution& dist, int bins,
                           double tol = 0.5);

// Mean pairwise L2 pixel distance among same-class samples (diversity).
double mean_pairwise_distance(const Tensor& samples);

struct RunSummary {
    std::string name;
    std::string protocol;  // dataset + seed discipline; must match across runs
    double recon_error = 0;
    double top1 = 0;
    double realism = 0;
};

// Formats one row per run; raises when protocols differ.
std::string ablation_compare(const std::vector<RunSummary>& runs);

}  // namespace fmgan
