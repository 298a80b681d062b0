#include "fmgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmgan/losses.hpp"
#include "fmgan/trainer.hpp"

namespace fmgan {

ReferenceClassifier::ReferenceClassifier(Classifier net, ModelConfig cfg, double test_accuracy,
                                         std::string provenance)
    : net_(std::move(net)), cfg_(cfg), test_accuracy_(test_accuracy),
      provenance_(std::move(provenance)) {}

Tensor ReferenceClassifier::posteriors(const Tensor& x) {
    return net_.classify(x, false).posteriors;
}

int ReferenceClassifier::predict_one(const Tensor& x1) {
    Shape batched;
    batched.push_back(1);
    for (int i = 0; i < x1.ndim(); ++i) batched.push_back(x1.dim(i));
    auto p = posteriors(reshape(x1, batched));
    const float* v = p.data();
    int best = 0;
    for (int64_t j = 1; j < p.dim(1); ++j) {
        if (v[j] > v[best]) best = static_cast<int>(j);
    }
    return best;
}

ReferenceClassifier train_reference_classifier(const Dataset& train, const Dataset& test,
                                               const ModelConfig& cfg, int64_t steps,
                                               int64_t batch, float lr, uint64_t seed) {
    FMGAN_CHECK(train.classes() == cfg.classes && test.classes() == cfg.classes,
                "train_reference_classifier: class count mismatch");
    Rng init_rng(seed * 8 + 4);
    Classifier net(cfg, init_rng);
    ParamList params;
    net.collect_params("ref", params);
    OptimizerConfig ocfg;
    ocfg.kind = OptKind::Adam;
    ocfg.lr = lr;
    Optimizer opt(ocfg, params);
    Rng rng(seed * 8 + 5);

    for (int64_t it = 0; it < steps; ++it) {
        auto b = train.sample(batch, rng);
        Tape tape;
        Tape::Scope scope(tape);
        auto out = net.classify(b.x, true);
        auto loss = classification_loss(out.logits, b.labels);
        FMGAN_CHECK(std::isfinite(static_cast<double>(loss.item())),
                    "train_reference_classifier: non-finite loss at step " << it);
        tape.backward(loss);
        opt.step(collect_grads(params));
    }

    // held-out accuracy over the full test set
    int64_t correct = 0, total = 0;
    int64_t n = test.size();
    FMGAN_CHECK(n > 0, "train_reference_classifier: test set is empty");
    const auto* mem = dynamic_cast<const MemoryDataset*>(&test);
    FMGAN_CHECK(mem != nullptr, "train_reference_classifier: test set must be materialized");
    const int64_t chunk = 64;
    for (int64_t start = 0; start < n; start += chunk) {
        int64_t count = std::min<int64_t>(chunk, n - start);
        std::vector<float> data;
        std::vector<int> labels;
        for (int64_t i = 0; i < count; ++i) {
            auto item = mem->item(start + i);
            data.insert(data.end(), item.data(), item.data() + item.numel());
            labels.push_back(mem->label(start + i));
        }
        Shape bshape;
        bshape.push_back(count);
        for (auto d : test.item_shape()) bshape.push_back(d);
        auto x = Tensor::from_vec(std::move(bshape), std::move(data));
        auto posts = net.classify(x, false).posteriors;
        const float* p = posts.data();
        int64_t kk = posts.dim(1);
        for (int64_t i = 0; i < count; ++i) {
            int best = 0;
            for (int64_t j = 1; j < kk; ++j) {
                if (p[i * kk + j] > p[i * kk + best]) best = static_cast<int>(j);
            }
            if (best == labels[static_cast<size_t>(i)]) ++correct;
            ++total;
        }
    }
    double acc = static_cast<double>(correct) / static_cast<double>(total);
    std::ostringstream prov;
    prov << "trained on " << train.describe() << " for " << steps << " steps (batch " << batch
         << ", adam lr " << lr << ", seed " << seed << "); held-out accuracy " << acc << " on "
         << test.describe();
    return ReferenceClassifier(std::move(net), cfg, acc, prov.str());
}

ClassSampler generator_sampler(Generator& g, int latent_dim) {
    return [&g, latent_dim](int cls, int64_t count, Rng& rng) {
        std::vector<float> z(static_cast<size_t>(count * latent_dim));
        for (auto& v : z) v = static_cast<float>(rng.normal());
        auto zt = Tensor::from_vec({count, latent_dim}, std::move(z));
        std::vector<int> labels(static_cast<size_t>(count), cls);
        return g.generate(zt, labels, false);
    };
}

double top1_discriminability(ReferenceClassifier& ref, const ClassSampler& sampler,
                             int64_t per_class_count, Rng& rng) {
    FMGAN_CHECK(per_class_count >= 1, "top1_discriminability: per_class_count must be >= 1");
    int k = ref.config().classes;
    int64_t correct = 0, total = 0;
    for (int cls = 0; cls < k; ++cls) {
        auto x = sampler(cls, per_class_count, rng);
        auto posts = ref.posteriors(x);
        const float* p = posts.data();
        int64_t kk = posts.dim(1);
        for (int64_t i = 0; i < per_class_count; ++i) {
            int best = 0;
            for (int64_t j = 1; j < kk; ++j) {
                if (p[i * kk + j] > p[i * kk + best]) best = static_cast<int>(j);
            }
            if (best == cls) ++correct;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double realism_score(ReferenceClassifier& ref, const Tensor& samples) {
    FMGAN_CHECK(samples.ndim() >= 2, "realism_score: need a batch of samples");
    int64_t n = samples.dim(0);
    FMGAN_CHECK(n >= 100, "realism_score: need at least 100 samples, got " << n);
    return realism_from_posteriors(ref.posteriors(samples));
}

double realism_from_posteriors(const Tensor& posteriors) {
    FMGAN_CHECK(posteriors.ndim() == 2, "realism_from_posteriors: need [N, K] posteriors");
    int64_t n = posteriors.dim(0);
    int64_t k = posteriors.dim(1);
    const float* p = posteriors.data();

    std::vector<double> marginal(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < k; ++j) marginal[static_cast<size_t>(j)] += p[i * k + j];
    }
    for (auto& v : marginal) v /= static_cast<double>(n);

    double mean_kl = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double kl = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            double pij = std::max(1e-12, static_cast<double>(p[i * k + j]));
            double pj = std::max(1e-12, marginal[static_cast<size_t>(j)]);
            kl += pij * std::log(pij / pj);
        }
        mean_kl += kl;
    }
    mean_kl /= static_cast<double>(n);
    return std::exp(mean_kl);
}

ModeCoverage mode_coverage(const Tensor& points, const RingDistribution& dist, int bins,
                           double tol) {
    FMGAN_CHECK(bins >= 8, "mode_coverage: bins must be >= 8, got " << bins);
    FMGAN_CHECK(points.ndim() == 2 && points.dim(1) == 2,
                "mode_coverage: points must be [N, 2], got " << shape_str(points.shape()));
    ModeCoverage out;
    out.histogram.assign(static_cast<size_t>(bins), 0);
    const float* p = points.data();
    const double band = 3.0 * dist.sigma + tol;
    const double two_pi = 6.283185307179586476925286766559;
    for (int64_t i = 0; i < points.dim(0); ++i) {
        double dx = static_cast<double>(p[2 * i]) - dist.cx;
        double dy = static_cast<double>(p[2 * i + 1]) - dist.cy;
        double d = std::hypot(dx, dy);
        if (std::abs(d - dist.r) > band) {
            ++out.off_ring;
            continue;
        }
        double ang = std::atan2(dy, dx);  // [-pi, pi]
        double frac = (ang + two_pi / 2.0) / two_pi;
        int bin = static_cast<int>(frac * bins);
        bin = std::min(bins - 1, std::max(0, bin));
        ++out.histogram[static_cast<size_t>(bin)];
        ++out.on_ring;
    }
    int occupied = 0;
    for (auto c : out.histogram) {
        if (c > 0) ++occupied;
    }
    out.coverage = static_cast<double>(occupied) / static_cast<double>(bins);
    return out;
}

double mean_pairwise_distance(const Tensor& samples) {
    int64_t n = samples.dim(0);
    FMGAN_CHECK(n >= 2, "mean_pairwise_distance: need at least 2 samples");
    int64_t d = samples.numel() / n;
    const float* p = samples.data();
    double total = 0.0;
    int64_t pairs = 0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            const float* a = p + i * d;
            const float* b = p + j * d;
            for (int64_t t = 0; t < d; ++t) {
                double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
                s += diff * diff;
            }
            total += std::sqrt(s);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

std::string ablation_compare(const std::vector<RunSummary>& runs) {
    FMGAN_CHECK(!runs.empty(), "ablation_compare: no runs");
    for (const auto& r : runs) {
        FMGAN_CHECK(r.protocol == runs.front().protocol,
                    "ablation_compare: run '" << r.name << "' uses protocol '" << r.protocol
                                              << "' but '" << runs.front().name << "' uses '"
                                              << runs.front().protocol << "'");
    }
    std::ostringstream os;
    os << "run,recon_error,top1,realism\n";
    char buf[160];
    for (const auto& r : runs) {
        std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g", r.name.c_str(), r.recon_error,
                      r.top1, r.realism);
        os << buf << "\n";
    }
    return os.str();
}

}  // namespace fmgan
