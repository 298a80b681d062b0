#include "fmgan/trainer.hpp"

#include <cmath>

namespace fmgan {

const char* method_name(Method m) {
    switch (m) {
        case Method::CvaeGan: return "cvae_gan";
        case Method::Gan: return "gan";
        case Method::Wgan: return "wgan";
        case Method::FmGan: return "fm_gan";
    }
    return "?";
}

Method method_from(const std::string& s) {
    if (s == "cvae_gan") return Method::CvaeGan;
    if (s == "gan") return Method::Gan;
    if (s == "wgan") return Method::Wgan;
    if (s == "fm_gan") return Method::FmGan;
    raise("unknown method '" + s + "' (expected cvae_gan|gan|wgan|fm_gan)");
}

void TrainRunConfig::validate() const {
    FMGAN_CHECK(batch >= 2, "TrainRunConfig: batch must be >= 2, got " << batch);
    FMGAN_CHECK(max_iterations >= 0, "TrainRunConfig: max_iterations must be >= 0");
    FMGAN_CHECK(opt.lr > 0, "TrainRunConfig: learning rate must be positive");
    FMGAN_CHECK(center_decay >= 0.0f && center_decay < 1.0f,
                "TrainRunConfig: center_decay must lie in [0, 1)");
    if (method == Method::Wgan) {
        FMGAN_CHECK(wgan_clamp > 0, "TrainRunConfig: wgan clamp must be positive");
    }
    auto check_weight = [](float v, const char* name) {
        FMGAN_CHECK(std::isfinite(v) && v >= 0,
                    "TrainRunConfig: loss weight " << name << " must be finite and >= 0");
    };
    check_weight(weights.kl, "lambda1");
    check_weight(weights.pairwise, "lambda2");
    check_weight(weights.mean_d, "lambda3");
    check_weight(weights.mean_c, "lambda4");
    if (method == Method::CvaeGan) {
        FMGAN_CHECK(use_encoder || ablation.fd || ablation.fc,
                    "TrainRunConfig: without the encoder at least one feature-matching site must "
                    "stay enabled");
    }
}

Trainer::Trainer(TrainRunConfig run_cfg, ModelConfig model_cfg,
                 std::shared_ptr<const Dataset> data)
    : run_cfg_(run_cfg), model_cfg_(model_cfg), data_(std::move(data)),
      rng_(run_cfg.seed * 8 + 5) {
    run_cfg_.validate();
    model_cfg_.validate();
    FMGAN_CHECK(data_ != nullptr, "Trainer: dataset required");
    FMGAN_CHECK(data_->classes() == model_cfg_.classes,
                "Trainer: dataset has " << data_->classes() << " classes but models expect "
                                        << model_cfg_.classes);
    Shape expect = model_cfg_.sample_shape(1);
    Shape expect_item(expect.begin() + 1, expect.end());
    FMGAN_CHECK(shape_eq(data_->item_shape(), expect_item),
                "Trainer: dataset items " << shape_str(data_->item_shape())
                                          << " do not match the " << scale_name(model_cfg_.scale)
                                          << " scale " << shape_str(expect_item));

    bool want_encoder = run_cfg_.method == Method::CvaeGan && run_cfg_.use_encoder;
    bool want_classifier = run_cfg_.method == Method::CvaeGan;

    // per-network init streams so a method change does not shift the others
    {
        Rng r(run_cfg_.seed * 8 + 1);
        if (want_encoder) encoder_.emplace(model_cfg_, r);
    }
    {
        Rng r(run_cfg_.seed * 8 + 2);
        generator_ = Generator(model_cfg_, r);
    }
    {
        Rng r(run_cfg_.seed * 8 + 3);
        discriminator_ = Discriminator(model_cfg_, r);
    }
    {
        Rng r(run_cfg_.seed * 8 + 4);
        if (want_classifier) classifier_.emplace(model_cfg_, r);
    }

    if (encoder_) encoder_->collect_params("E", params_["E"]);
    generator_.collect_params("G", params_["G"]);
    discriminator_.collect_params("D", params_["D"]);
    if (classifier_) classifier_->collect_params("C", params_["C"]);

    for (auto& [net, plist] : params_) {
        opts_.emplace(net, Optimizer(run_cfg_.opt, plist));
    }

    int64_t fdim = discriminator_.feature_dim();
    if (classifier_) {
        FMGAN_CHECK(classifier_->feature_dim() == fdim,
                    "Trainer: D and C feature taps must share one dimensionality");
    }
    bank_ = CenterBank(static_cast<int>(fdim), model_cfg_.classes, run_cfg_.center_decay);
}

ParamList& Trainer::params(const std::string& net) {
    auto it = params_.find(net);
    FMGAN_CHECK(it != params_.end(), "Trainer: no network '" << net << "' in this method");
    return it->second;
}

Optimizer& Trainer::optimizer(const std::string& net) {
    auto it = opts_.find(net);
    FMGAN_CHECK(it != opts_.end(), "Trainer: no optimizer for network '" << net << "'");
    return it->second;
}

std::vector<std::string> Trainer::nets() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

ParamList Trainer::buffers() const {
    ParamList out;
    if (encoder_) encoder_->collect_buffers("E", out);
    generator_.collect_buffers("G", out);
    discriminator_.collect_buffers("D", out);
    if (classifier_) classifier_->collect_buffers("C", out);
    return out;
}

Tensor Trainer::sample_prior(int64_t m) {
    int64_t l = model_cfg_.latent_dim;
    std::vector<float> z(static_cast<size_t>(m * l));
    for (auto& v : z) v = static_cast<float>(rng_.normal());
    return Tensor::from_vec({m, l}, std::move(z));
}

void Trainer::check_finite(double v, const char* term) const {
    FMGAN_CHECK(std::isfinite(v), "iteration " << (iteration_ + 1) << ": " << term
                                               << " is non-finite, aborting step");
}

// Differentiable mean of the feature rows whose label equals cls.
Tensor Trainer::class_mean(const Tensor& features, const std::vector<int>& labels, int cls,
                           int64_t count) const {
    int64_t m = features.dim(0);
    std::vector<float> sel(static_cast<size_t>(m), 0.0f);
    for (int64_t i = 0; i < m; ++i) {
        if (labels[static_cast<size_t>(i)] == cls) {
            sel[static_cast<size_t>(i)] = 1.0f / static_cast<float>(count);
        }
    }
    auto s = Tensor::from_vec({1, m}, std::move(sel));
    return reshape(matmul(s, features), {features.dim(1)});
}

StepRecord Trainer::step() {
    switch (run_cfg_.method) {
        case Method::CvaeGan: return cvae_gan_step();
        case Method::Gan: return gan_step();
        case Method::Wgan: return wgan_step();
        case Method::FmGan: return fm_gan_step();
    }
    raise("Trainer::step: bad method");
}

namespace {

std::vector<float> tensor_values(const Tensor& t) {
    return std::vector<float>(t.data(), t.data() + t.numel());
}

// Plain per-class means of detached feature rows: class -> (mean, count).
std::map<int, std::pair<std::vector<float>, int64_t>> class_means_plain(
    const Tensor& features, const std::vector<int>& labels) {
    int64_t m = features.dim(0), f = features.dim(1);
    std::map<int, std::pair<std::vector<float>, int64_t>> out;
    for (int64_t i = 0; i < m; ++i) {
        auto& slot = out[labels[static_cast<size_t>(i)]];
        if (slot.first.empty()) slot.first.assign(static_cast<size_t>(f), 0.0f);
        const float* row = features.data() + i * f;
        for (int64_t j = 0; j < f; ++j) slot.first[static_cast<size_t>(j)] += row[j];
        slot.second += 1;
    }
    for (auto& [cls, slot] : out) {
        (void)cls;
        for (auto& v : slot.first) v /= static_cast<float>(slot.second);
    }
    return out;
}

Tensor bank_center_tensor(const CenterBank& bank, std::span<const float> v) {
    return Tensor::from_vec({bank.feature_dim()}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

StepRecord Trainer::cvae_gan_step() {
    const int64_t m = run_cfg_.batch;
    const auto& mask = run_cfg_.ablation;
    const bool use_e = run_cfg_.use_encoder;
    const int k = model_cfg_.classes;

    auto batch = data_->sample(m, rng_);

    Tape tape;
    Tape::Scope scope(tape);

    // classifier on real data
    auto c_real = classifier_->classify(batch.x, true);
    auto l_c = classification_loss(c_real.logits, batch.labels);

    // encoder path: z, KL, reconstruction
    Tensor l_kl = Tensor::scalar(0.0f);
    Tensor x_f;
    Discriminator::Out d_f;
    if (use_e) {
        auto code = encode(*encoder_, batch.x, batch.labels, rng_, run_cfg_.latent_scale, true);
        l_kl = kl_to_standard_normal(code.mu, code.eps);
        x_f = generator_.generate(code.z, batch.labels, true);
    }

    // prior stream
    auto z_p = sample_prior(m);
    std::vector<int> c_p(static_cast<size_t>(m));
    for (auto& c : c_p) c = static_cast<int>(rng_.index(k));
    auto x_p = generator_.generate(z_p, c_p, true);

    // discriminator streams
    auto d_r = discriminator_.discriminate(batch.x, true);
    std::vector<Tensor> fake_probs;
    if (use_e) {
        d_f = discriminator_.discriminate(x_f, true);
        fake_probs.push_back(d_f.prob);
    }
    auto d_p = discriminator_.discriminate(x_p, true);
    fake_probs.push_back(d_p.prob);
    auto l_d = discriminator_loss(d_r.prob, fake_probs);

    // global f_D centers (moving average); the gradient reaches G only
    // through the current fake batch mean
    auto real_fd_mean = reduce_mean(d_r.features.detach(), {0}, false);
    bank_.observe_global(Side::Real, real_fd_mean.values());
    auto real_fd_center = bank_center_tensor(bank_, bank_.global_center(Side::Real));
    auto fake_fd_mean = reduce_mean(d_p.features, {0}, false);
    auto prev_fake_fd = bank_.observe_global(Side::Fake, tensor_values(fake_fd_mean));
    auto fake_fd_center = combined_center(prev_fake_fd, fake_fd_mean, bank_.decay());
    auto l_gd = mean_feature_match(real_fd_center, fake_fd_center);

    // per-class f_C centers: real side from the batch, fake side from the
    // prior stream
    auto c_prior = classifier_->classify(x_p, true);
    for (auto& [cls, slot] : class_means_plain(c_real.features.detach(), batch.labels)) {
        bank_.observe_class(Side::Real, cls, slot.first, slot.second);
    }
    std::map<int, Tensor> fake_class_centers;
    for (auto& [cls, slot] : class_means_plain(c_prior.features.detach(), c_p)) {
        auto mean_t = class_mean(c_prior.features, c_p, cls, slot.second);
        auto prev = bank_.observe_class(Side::Fake, cls, slot.first, slot.second);
        fake_class_centers.emplace(cls, combined_center(prev, mean_t, bank_.decay()));
    }
    std::vector<std::pair<Tensor, Tensor>> center_pairs;
    for (int cls : bank_.ready_classes()) {
        auto real_t = bank_center_tensor(bank_, bank_.class_center(Side::Real, cls));
        auto it = fake_class_centers.find(cls);
        Tensor fake_t = it != fake_class_centers.end()
                            ? it->second
                            : bank_center_tensor(bank_, bank_.class_center(Side::Fake, cls));
        center_pairs.emplace_back(real_t, fake_t);
    }
    auto l_gc = per_class_mean_match(center_pairs);

    // pairwise reconstruction terms
    Tensor l_g = Tensor::scalar(0.0f);
    if (use_e) {
        auto c_f = classifier_->classify(x_f, true);
        l_g = pairwise_match_masked(batch.x, x_f, d_r.features.detach(), d_f.features,
                                    c_real.features.detach(), c_f.features, mask.img, mask.fd,
                                    mask.fc);
    }

    LossWeights w = run_cfg_.weights;
    if (!mask.fd) w.mean_d = 0.0f;
    if (!mask.fc) w.mean_c = 0.0f;
    LossParts<float> parts{l_c, l_d, l_kl, l_g, l_gd, l_gc};
    auto obj = composite_objectives(parts, w);

    StepRecord rec;
    rec.iteration = iteration_ + 1;
    rec.loss_c = l_c.item();
    rec.loss_d = l_d.item();
    rec.loss_kl = l_kl.item();
    rec.loss_g = l_g.item();
    rec.loss_gd = l_gd.item();
    rec.loss_gc = l_gc.item();
    check_finite(rec.loss_c, "loss_C");
    check_finite(rec.loss_d, "loss_D");
    check_finite(rec.loss_kl, "loss_KL");
    check_finite(rec.loss_g, "loss_G");
    check_finite(rec.loss_gd, "loss_GD");
    check_finite(rec.loss_gc, "loss_GC");

    // four gradient evaluations, all at the pre-update parameters
    last_grads_.clear();
    tape.backward(obj.classifier);
    last_grads_["C"] = collect_grads(params_["C"]);
    tape.backward(obj.discriminator);
    last_grads_["D"] = collect_grads(params_["D"]);
    tape.backward(obj.generator);
    last_grads_["G"] = collect_grads(params_["G"]);
    if (use_e) {
        tape.backward(obj.encoder);
        last_grads_["E"] = collect_grads(params_["E"]);
    }

    opts_.at("C").step(last_grads_["C"]);
    opts_.at("D").step(last_grads_["D"]);
    opts_.at("G").step(last_grads_["G"]);
    if (use_e) opts_.at("E").step(last_grads_["E"]);

    ++iteration_;
    return rec;
}

StepRecord Trainer::gan_step() {
    const int64_t m = run_cfg_.batch;
    const int k = model_cfg_.classes;
    auto batch = data_->sample(m, rng_);
    StepRecord rec;
    rec.iteration = iteration_ + 1;
    last_grads_.clear();

    {  // discriminator update
        Tape tape;
        Tape::Scope scope(tape);
        auto z1 = sample_prior(m);
        std::vector<int> c1(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c1) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z1, c1, true);
        auto d_r = discriminator_.discriminate(batch.x, true);
        auto d_fk = discriminator_.discriminate(x_f, true);
        auto l_d = discriminator_loss(d_r.prob, {d_fk.prob});
        rec.loss_d = l_d.item();
        check_finite(rec.loss_d, "loss_D");
        tape.backward(l_d);
        last_grads_["D"] = collect_grads(params_["D"]);
        opts_.at("D").step(last_grads_["D"]);
    }
    {  // generator update against the refreshed discriminator
        Tape tape;
        Tape::Scope scope(tape);
        auto z2 = sample_prior(m);
        std::vector<int> c2(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c2) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z2, c2, true);
        auto d_fk = discriminator_.discriminate(x_f, true);
        auto l_g = neg(reduce_mean(log(d_fk.prob)));
        rec.extra_a = l_g.item();
        check_finite(rec.extra_a, "loss_G_naive");
        tape.backward(l_g);
        last_grads_["G"] = collect_grads(params_["G"]);
        opts_.at("G").step(last_grads_["G"]);
    }
    ++iteration_;
    return rec;
}

StepRecord Trainer::wgan_step() {
    const int64_t m = run_cfg_.batch;
    const int k = model_cfg_.classes;
    auto batch = data_->sample(m, rng_);
    StepRecord rec;
    rec.iteration = iteration_ + 1;
    last_grads_.clear();

    {  // critic update, then weight clamping
        Tape tape;
        Tape::Scope scope(tape);
        auto z1 = sample_prior(m);
        std::vector<int> c1(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c1) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z1, c1, true);
        auto d_r = discriminator_.discriminate(batch.x, true);
        auto d_fk = discriminator_.discriminate(x_f, true);
        auto l_critic = sub(reduce_mean(d_fk.logit), reduce_mean(d_r.logit));
        rec.loss_d = l_critic.item();
        check_finite(rec.loss_d, "critic loss");
        tape.backward(l_critic);
        last_grads_["D"] = collect_grads(params_["D"]);
        opts_.at("D").step(last_grads_["D"]);
        if (std::isfinite(run_cfg_.wgan_clamp)) {
            clamp_params(params_["D"], run_cfg_.wgan_clamp);
        }
    }
    {  // generator maximizes the critic score
        Tape tape;
        Tape::Scope scope(tape);
        auto z2 = sample_prior(m);
        std::vector<int> c2(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c2) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z2, c2, true);
        auto d_fk = discriminator_.discriminate(x_f, true);
        auto l_g = neg(reduce_mean(d_fk.logit));
        rec.extra_a = l_g.item();
        check_finite(rec.extra_a, "generator score");
        tape.backward(l_g);
        last_grads_["G"] = collect_grads(params_["G"]);
        opts_.at("G").step(last_grads_["G"]);
    }
    ++iteration_;
    return rec;
}

StepRecord Trainer::fm_gan_step() {
    const int64_t m = run_cfg_.batch;
    const int k = model_cfg_.classes;
    auto batch = data_->sample(m, rng_);
    StepRecord rec;
    rec.iteration = iteration_ + 1;
    last_grads_.clear();

    {  // discriminator update; the real feature center moves here
        Tape tape;
        Tape::Scope scope(tape);
        auto z1 = sample_prior(m);
        std::vector<int> c1(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c1) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z1, c1, true);
        auto d_r = discriminator_.discriminate(batch.x, true);
        auto d_fk = discriminator_.discriminate(x_f, true);
        auto l_d = discriminator_loss(d_r.prob, {d_fk.prob});
        rec.loss_d = l_d.item();
        check_finite(rec.loss_d, "loss_D");

        auto real_mean = reduce_mean(d_r.features.detach(), {0}, false);
        bank_.observe_global(Side::Real, real_mean.values());

        tape.backward(l_d);
        last_grads_["D"] = collect_grads(params_["D"]);
        opts_.at("D").step(last_grads_["D"]);
    }
    {  // generator matches the moving real feature center
        Tape tape;
        Tape::Scope scope(tape);
        auto z2 = sample_prior(m);
        std::vector<int> c2(static_cast<size_t>(m), 0);
        if (k > 1)
            for (auto& c : c2) c = static_cast<int>(rng_.index(k));
        auto x_f = generator_.generate(z2, c2, true);
        auto d_fk = discriminator_.discriminate(x_f, true);

        auto real_center = bank_center_tensor(bank_, bank_.global_center(Side::Real));
        auto fake_mean = reduce_mean(d_fk.features, {0}, false);
        auto prev = bank_.observe_global(Side::Fake, tensor_values(fake_mean));
        auto fake_center = combined_center(prev, fake_mean, bank_.decay());
        auto l_gd = mean_feature_match(real_center, fake_center);
        rec.loss_gd = l_gd.item();
        check_finite(rec.loss_gd, "loss_GD");
        tape.backward(l_gd);
        last_grads_["G"] = collect_grads(params_["G"]);
        opts_.at("G").step(last_grads_["G"]);
    }
    ++iteration_;
    return rec;
}

void Trainer::run(int64_t until_iteration, const Sinks& sinks) {
    FMGAN_CHECK(until_iteration >= iteration_,
                "Trainer::run: target iteration " << until_iteration << " is behind the current "
                                                  << iteration_);
    while (iteration_ < until_iteration) {
        auto rec = step();
        if (sinks.on_metrics && run_cfg_.metrics_every > 0 &&
            iteration_ % run_cfg_.metrics_every == 0) {
            sinks.on_metrics(rec);
        }
        if (sinks.on_points && run_cfg_.points_every > 0 &&
            iteration_ % run_cfg_.points_every == 0) {
            sinks.on_points(*this, iteration_);
        }
        if (sinks.on_eval && run_cfg_.eval_every > 0 && iteration_ % run_cfg_.eval_every == 0) {
            sinks.on_eval(*this, iteration_);
        }
        if (sinks.on_checkpoint && run_cfg_.checkpoint_every > 0 &&
            iteration_ % run_cfg_.checkpoint_every == 0) {
            sinks.on_checkpoint(*this, iteration_);
        }
    }
}

}  // namespace fmgan
