#include "fmgan/models.hpp"

namespace fmgan {

const char* scale_name(Scale s) { return s == Scale::Toy2d ? "toy2d" : "image"; }

Scale scale_from(const std::string& s) {
    if (s == "toy2d") return Scale::Toy2d;
    if (s == "image") return Scale::Image;
    raise("unknown scale '" + s + "' (expected toy2d|image)");
}

void ModelConfig::validate() const {
    FMGAN_CHECK(latent_dim > 0, "ModelConfig: latent_dim must be positive, got " << latent_dim);
    FMGAN_CHECK(classes >= 1, "ModelConfig: classes must be >= 1, got " << classes);
    FMGAN_CHECK(!toy_hidden.empty(), "ModelConfig: toy_hidden must name at least one layer");
    if (scale == Scale::Image) {
        FMGAN_CHECK(image_side >= 4 && image_side % 4 == 0,
                    "ModelConfig: image_side must be a positive multiple of 4, got "
                        << image_side);
        FMGAN_CHECK(image_channels >= 1, "ModelConfig: image_channels must be >= 1");
        FMGAN_CHECK(feature_width >= 1 && gen_base_channels >= 4,
                    "ModelConfig: feature/generator widths too small");
    }
}

int64_t ModelConfig::sample_dim() const {
    return scale == Scale::Toy2d
               ? 2
               : static_cast<int64_t>(image_channels) * image_side * image_side;
}

Shape ModelConfig::sample_shape(int64_t batch) const {
    if (scale == Scale::Toy2d) return {batch, 2};
    return {batch, image_channels, image_side, image_side};
}

void check_sample_shape(const ModelConfig& cfg, const Tensor& x, const char* who) {
    if (cfg.scale == Scale::Toy2d) {
        FMGAN_CHECK(x.ndim() == 2 && x.dim(1) == 2,
                    who << ": toy2d input must be [N, 2], got " << shape_str(x.shape()));
    } else {
        FMGAN_CHECK(x.ndim() == 4 && x.dim(1) == cfg.image_channels &&
                        x.dim(2) == cfg.image_side && x.dim(3) == cfg.image_side,
                    who << ": image input must be [N, " << cfg.image_channels << ", "
                        << cfg.image_side << ", " << cfg.image_side << "], got "
                        << shape_str(x.shape()));
    }
}

namespace {

std::vector<LayerSpec> toy_trunk_spec(int64_t in, const std::vector<int>& hidden, int64_t out) {
    std::vector<LayerSpec> spec;
    int64_t prev = in;
    for (int h : hidden) {
        spec.push_back(LayerSpec::dense(prev, h));
        spec.push_back(LayerSpec::activation(Act::Relu));
        prev = h;
    }
    spec.push_back(LayerSpec::dense(prev, out));
    return spec;
}

void check_labels(const std::vector<int>& labels, int64_t batch, int classes, const char* who) {
    FMGAN_CHECK(static_cast<int64_t>(labels.size()) == batch,
                who << ": " << labels.size() << " labels for batch of " << batch);
    for (int c : labels) {
        FMGAN_CHECK(c >= 0 && c < classes,
                    who << ": class " << c << " out of range [0, " << classes << ")");
    }
}

}  // namespace

// --- Encoder ---------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.scale == Scale::Toy2d) {
        // Trunk mirrors the toy G/D stack; heads split from one dense output.
        auto spec = toy_trunk_spec(2 + (cfg_.classes > 1 ? cfg_.classes : 0), cfg_.toy_hidden,
                                   2 * cfg_.latent_dim);
        toy_ = build_mlp(spec, rng);
    } else {
        int s = cfg_.image_side;
        c1_ = Conv2dLayer(cfg_.image_channels, 16, 3, 2, Padding::Same, rng);  // s/2
        c2_ = Conv2dLayer(16, 32, 3, 2, Padding::Same, rng);                   // s/4
        bn2_ = BatchNorm(32);
        c3_ = Conv2dLayer(32, 32, 3, 2, Padding::Same, rng);                   // s/8
        bn3_ = BatchNorm(32);
        int64_t flat = 32LL * ((s + 7) / 8) * ((s + 7) / 8);
        fc1_ = Dense(flat, cfg_.feature_width, rng);
        head_ = Dense(cfg_.feature_width + cfg_.classes, 2LL * cfg_.latent_dim, rng);
    }
}

Encoder::Heads Encoder::heads(const Tensor& x, const std::vector<int>& labels, bool train) {
    check_sample_shape(cfg_, x, "encode");
    check_labels(labels, x.dim(0), cfg_.classes, "encode");
    Tensor joint;
    if (cfg_.scale == Scale::Toy2d) {
        Tensor in = x;
        if (cfg_.classes > 1) in = concat<float>({x, one_hot<float>(labels, cfg_.classes)}, 1);
        joint = toy_.forward(in);
    } else {
        auto h = relu(c1_.forward(x));
        h = relu(bn2_.forward(c2_.forward(h), train));
        h = relu(bn3_.forward(c3_.forward(h), train));
        h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        h = relu(fc1_.forward(h));
        // category information merges at the last dense layer
        auto oh = one_hot<float>(labels, cfg_.classes);
        joint = head_.forward(concat<float>({h, oh}, 1));
    }
    Heads out;
    out.mu = slice(joint, 1, 0, cfg_.latent_dim);
    out.eps = slice(joint, 1, cfg_.latent_dim, cfg_.latent_dim);
    return out;
}

void Encoder::collect_params(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) {
        toy_.collect_params(prefix, out);
        return;
    }
    c1_.collect_params(prefix + ".c1", out);
    c2_.collect_params(prefix + ".c2", out);
    bn2_.collect_params(prefix + ".bn2", out);
    c3_.collect_params(prefix + ".c3", out);
    bn3_.collect_params(prefix + ".bn3", out);
    fc1_.collect_params(prefix + ".fc1", out);
    head_.collect_params(prefix + ".head", out);
}

void Encoder::collect_buffers(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) return;
    bn2_.collect_buffers(prefix + ".bn2", out);
    bn3_.collect_buffers(prefix + ".bn3", out);
}

LatentCode encode(Encoder& enc, const Tensor& x, const std::vector<int>& labels, Rng& rng,
                  LatentScale scale_map, bool train) {
    auto heads = enc.heads(x, labels, train);
    int64_t n = heads.mu.dim(0), l = heads.mu.dim(1);
    std::vector<float> noise(static_cast<size_t>(n * l));
    for (auto& v : noise) v = static_cast<float>(rng.normal());
    auto r = Tensor::from_vec({n, l}, std::move(noise));
    LatentCode code;
    code.mu = heads.mu;
    code.eps = heads.eps;
    code.z = reparameterize(heads.mu, heads.eps, r, scale_map);
    code.dim = l;
    return code;
}

LatentCode encode_mean(Encoder& enc, const Tensor& x, const std::vector<int>& labels, bool train) {
    auto heads = enc.heads(x, labels, train);
    LatentCode code;
    code.mu = heads.mu;
    code.eps = heads.eps;
    code.z = heads.mu;
    code.dim = heads.mu.dim(1);
    return code;
}

// --- Generator ---------------------------------------------------------------

Generator::Generator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.scale == Scale::Toy2d) {
        auto spec = toy_trunk_spec(cfg_.latent_dim + (cfg_.classes > 1 ? cfg_.classes : 0),
                                   cfg_.toy_hidden, 2);
        toy_ = build_mlp(spec, rng);
    } else {
        int s = cfg_.image_side;
        int base = cfg_.gen_base_channels;
        int64_t s4 = s / 4;
        fc_ = Dense(cfg_.latent_dim + cfg_.classes, base * s4 * s4, rng);
        bn0_ = BatchNorm(base);
        d1_ = ConvT2dLayer(base, base / 2, 4, 2, 1, rng);  // s/4 -> s/2
        bn1_ = BatchNorm(base / 2);
        d2_ = ConvT2dLayer(base / 2, base / 4, 4, 2, 1, rng);  // s/2 -> s
        bn2_ = BatchNorm(base / 4);
        out_ = Conv2dLayer(base / 4, cfg_.image_channels, 3, 1, Padding::Same, rng);
    }
}

Tensor Generator::generate(const Tensor& z, const std::vector<int>& labels, bool train) {
    FMGAN_CHECK(z.ndim() == 2 && z.dim(1) == cfg_.latent_dim,
                "generate: z must be [N, " << cfg_.latent_dim << "], got "
                                           << shape_str(z.shape()));
    check_labels(labels, z.dim(0), cfg_.classes, "generate");
    if (cfg_.scale == Scale::Toy2d) {
        Tensor in = z;
        if (cfg_.classes > 1) in = concat<float>({z, one_hot<float>(labels, cfg_.classes)}, 1);
        return toy_.forward(in);
    }
    auto in = concat<float>({z, one_hot<float>(labels, cfg_.classes)}, 1);
    int64_t n = z.dim(0);
    int base = cfg_.gen_base_channels;
    int64_t s4 = cfg_.image_side / 4;
    auto h = fc_.forward(in);
    h = reshape(h, {n, base, s4, s4});
    h = relu(bn0_.forward(h, train));
    h = relu(bn1_.forward(d1_.forward(h), train));
    h = relu(bn2_.forward(d2_.forward(h), train));
    return tanh(out_.forward(h));
}

void Generator::collect_params(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) {
        toy_.collect_params(prefix, out);
        return;
    }
    fc_.collect_params(prefix + ".fc", out);
    bn0_.collect_params(prefix + ".bn0", out);
    d1_.collect_params(prefix + ".d1", out);
    bn1_.collect_params(prefix + ".bn1", out);
    d2_.collect_params(prefix + ".d2", out);
    bn2_.collect_params(prefix + ".bn2", out);
    out_.collect_params(prefix + ".out", out);
}

void Generator::collect_buffers(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) return;
    bn0_.collect_buffers(prefix + ".bn0", out);
    bn1_.collect_buffers(prefix + ".bn1", out);
    bn2_.collect_buffers(prefix + ".bn2", out);
}

// --- Discriminator -----------------------------------------------------------

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.scale == Scale::Toy2d) {
        toy_ = build_mlp(toy_trunk_spec(2, cfg_.toy_hidden, 1), rng);
    } else {
        int s = cfg_.image_side;
        c1_ = Conv2dLayer(cfg_.image_channels, 16, 3, 2, Padding::Same, rng);
        c2_ = Conv2dLayer(16, 32, 3, 2, Padding::Same, rng);
        bn2_ = BatchNorm(32);
        c3_ = Conv2dLayer(32, 32, 3, 2, Padding::Same, rng);
        bn3_ = BatchNorm(32);
        int64_t flat = 32LL * ((s + 7) / 8) * ((s + 7) / 8);
        fc1_ = Dense(flat, cfg_.feature_width, rng);
        out_ = Dense(cfg_.feature_width, 1, rng);
    }
}

Discriminator::Out Discriminator::discriminate(const Tensor& x, bool train) {
    check_sample_shape(cfg_, x, "discriminate");
    Tensor logit, feat;
    if (cfg_.scale == Scale::Toy2d) {
        auto t = toy_.forward_with_tap(x);
        logit = t.out;
        feat = t.tap;
    } else {
        auto h = relu(c1_.forward(x));
        h = relu(bn2_.forward(c2_.forward(h), train));
        h = relu(bn3_.forward(c3_.forward(h), train));
        h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        feat = relu(fc1_.forward(h));
        logit = out_.forward(feat);
    }
    Out o;
    o.logit = reshape(logit, {logit.dim(0)});
    o.prob = clamp(sigmoid(o.logit), static_cast<float>(kProbClampLo),
                   static_cast<float>(kProbClampHi));
    o.features = feat;
    return o;
}

int64_t Discriminator::feature_dim() const {
    return cfg_.scale == Scale::Toy2d ? cfg_.toy_hidden.back() : cfg_.feature_width;
}

void Discriminator::collect_params(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) {
        toy_.collect_params(prefix, out);
        return;
    }
    c1_.collect_params(prefix + ".c1", out);
    c2_.collect_params(prefix + ".c2", out);
    bn2_.collect_params(prefix + ".bn2", out);
    c3_.collect_params(prefix + ".c3", out);
    bn3_.collect_params(prefix + ".bn3", out);
    fc1_.collect_params(prefix + ".fc1", out);
    out_.collect_params(prefix + ".out", out);
}

void Discriminator::collect_buffers(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) return;
    bn2_.collect_buffers(prefix + ".bn2", out);
    bn3_.collect_buffers(prefix + ".bn3", out);
}

// --- Classifier ---------------------------------------------------------------

Classifier::Classifier(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.scale == Scale::Toy2d) {
        toy_ = build_mlp(toy_trunk_spec(2, cfg_.toy_hidden, cfg_.classes), rng);
    } else {
        int s = cfg_.image_side;
        c1_ = Conv2dLayer(cfg_.image_channels, 16, 3, 2, Padding::Same, rng);
        c2_ = Conv2dLayer(16, 32, 3, 2, Padding::Same, rng);
        bn2_ = BatchNorm(32);
        c3_ = Conv2dLayer(32, 32, 3, 2, Padding::Same, rng);
        bn3_ = BatchNorm(32);
        int64_t flat = 32LL * ((s + 7) / 8) * ((s + 7) / 8);
        fc1_ = Dense(flat, cfg_.feature_width, rng);
        out_ = Dense(cfg_.feature_width, cfg_.classes, rng);
    }
}

Classifier::Out Classifier::classify(const Tensor& x, bool train) {
    check_sample_shape(cfg_, x, "classify");
    Tensor logits, feat;
    if (cfg_.scale == Scale::Toy2d) {
        auto t = toy_.forward_with_tap(x);
        logits = t.out;
        feat = t.tap;
    } else {
        auto h = relu(c1_.forward(x));
        h = relu(bn2_.forward(c2_.forward(h), train));
        h = relu(bn3_.forward(c3_.forward(h), train));
        h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        feat = relu(fc1_.forward(h));
        logits = out_.forward(feat);
    }
    Out o;
    o.logits = logits;
    o.posteriors = softmax(logits);
    o.features = feat;
    return o;
}

int64_t Classifier::feature_dim() const {
    return cfg_.scale == Scale::Toy2d ? cfg_.toy_hidden.back() : cfg_.feature_width;
}

void Classifier::collect_params(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) {
        toy_.collect_params(prefix, out);
        return;
    }
    c1_.collect_params(prefix + ".c1", out);
    c2_.collect_params(prefix + ".c2", out);
    bn2_.collect_params(prefix + ".bn2", out);
    c3_.collect_params(prefix + ".c3", out);
    bn3_.collect_params(prefix + ".bn3", out);
    fc1_.collect_params(prefix + ".fc1", out);
    out_.collect_params(prefix + ".out", out);
}

void Classifier::collect_buffers(const std::string& prefix, ParamList& out) const {
    if (cfg_.scale == Scale::Toy2d) return;
    bn2_.collect_buffers(prefix + ".bn2", out);
    bn3_.collect_buffers(prefix + ".bn3", out);
}

}  // namespace fmgan
