#include "fmgan/procedures.hpp"

namespace fmgan {

std::vector<Tensor> morph_frames(Encoder& enc, Generator& gen, const Tensor& x1, int cls1,
                                 const Tensor& x2, int cls2, int steps) {
    FMGAN_CHECK(cls1 == cls2, "morph: inputs declare different classes (" << cls1 << " vs "
                                                                          << cls2 << ")");
    FMGAN_CHECK(steps >= 2, "morph: steps must be >= 2, got " << steps);
    const auto& cfg = gen.config();

    auto batched = [&](const Tensor& x) {
        Shape s;
        s.push_back(1);
        for (int i = 0; i < x.ndim(); ++i) s.push_back(x.dim(i));
        return reshape(x, s);
    };
    auto b1 = batched(x1);
    auto b2 = batched(x2);
    std::vector<int> label{cls1};
    auto z1 = encode_mean(enc, b1, label, false).z;
    auto z2 = encode_mean(enc, b2, label, false).z;

    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(steps));
    int64_t l = cfg.latent_dim;
    for (int i = 0; i < steps; ++i) {
        float alpha = static_cast<float>(i) / static_cast<float>(steps - 1);
        std::vector<float> z(static_cast<size_t>(l));
        const float* p1 = z1.data();
        const float* p2 = z2.data();
        for (int64_t j = 0; j < l; ++j) {
            if (i == 0) z[static_cast<size_t>(j)] = p2[j];
            else if (i == steps - 1) z[static_cast<size_t>(j)] = p1[j];
            else z[static_cast<size_t>(j)] = alpha * p1[j] + (1.0f - alpha) * p2[j];
        }
        auto zt = Tensor::from_vec({1, l}, std::move(z));
        auto img = gen.generate(zt, label, false);
        Shape item(img.shape().begin() + 1, img.shape().end());
        frames.push_back(reshape(img, item));
    }
    return frames;
}

std::vector<Tensor> inpaint_frames(Encoder& enc, Generator& gen, const Tensor& corrupted,
                                   const Tensor& mask, int cls, int iterations) {
    FMGAN_CHECK(iterations >= 1, "inpaint: iterations must be >= 1");
    FMGAN_CHECK(corrupted.ndim() == 3, "inpaint: image must be [C, H, W], got "
                                           << shape_str(corrupted.shape()));
    FMGAN_CHECK(mask.ndim() == 3 && mask.dim(0) == 1 && mask.dim(1) == corrupted.dim(1) &&
                    mask.dim(2) == corrupted.dim(2),
                "inpaint: mask must be [1, H, W] matching the image, got "
                    << shape_str(mask.shape()) << " for image " << shape_str(corrupted.shape()));
    const float* pm = mask.data();
    for (int64_t i = 0; i < mask.numel(); ++i) {
        FMGAN_CHECK(pm[i] == 0.0f || pm[i] == 1.0f,
                    "inpaint: mask must be binary, found " << pm[i] << " at offset " << i);
    }

    int64_t c = corrupted.dim(0), h = corrupted.dim(1), w = corrupted.dim(2);
    auto x = corrupted.clone();
    std::vector<int> label{cls};
    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(iterations));
    for (int it = 0; it < iterations; ++it) {
        auto xb = reshape(x, {1, c, h, w});
        auto code = encode_mean(enc, xb, label, false);
        auto xr = gen.generate(code.z, label, false);
        // masked update; outside-mask pixels keep their exact bits
        auto next = x.clone();
        float* pn = next.data();
        const float* pr = xr.data();
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t i = 0; i < h * w; ++i) {
                if (pm[i] == 1.0f) pn[ch * h * w + i] = pr[ch * h * w + i];
            }
        }
        x = next;
        frames.push_back(x.clone());
    }
    return frames;
}

Tensor generate_class_batch(Generator& gen, int cls, int64_t count, Rng& rng) {
    FMGAN_CHECK(count >= 1, "generate_class_batch: count must be >= 1");
    int64_t l = gen.config().latent_dim;
    std::vector<float> z(static_cast<size_t>(count * l));
    for (auto& v : z) v = static_cast<float>(rng.normal());
    auto zt = Tensor::from_vec({count, l}, std::move(z));
    std::vector<int> labels(static_cast<size_t>(count), cls);
    return gen.generate(zt, labels, false);
}

}  // namespace fmgan
