#pragma once

#include <utility>
#include <vector>

#include "fmgan/tensor.hpp"

namespace fmgan {

// How the encoder's second head maps to the latent noise scale:
//   ExpHalfEps treats eps as log-variance (sigma = exp(eps/2)), which is the
//   scale the KL term below integrates exactly; ExpEps uses sigma = exp(eps).
enum class LatentScale { ExpHalfEps, ExpEps };

// Weights of the composite objective: kl, pairwise reconstruction,
// mean matching on discriminator features, mean matching on classifier
// features. Defaults (3, 1, 1e-3, 1e-3).
struct LossWeights {
    float kl = 3.0f;
    float pairwise = 1.0f;
    float mean_d = 1e-3f;
    float mean_c = 1e-3f;
};

// mu: [L], eps: [L], z: reparameterized sample.
struct LatentCode {
    Tensor mu, eps, z;
    int64_t dim = 0;
};

inline constexpr double kProbClampLo = 1e-7;
inline constexpr double kProbClampHi = 1.0 - 1e-7;

namespace detail {

template <typename T>
TensorT<T> as_rows(const TensorT<T>& t) {
    if (t.ndim() == 1) return reshape(t, {1, t.dim(0)});
    if (t.ndim() == 2) return t;
    return reshape(t, {t.dim(0), t.numel() / t.dim(0)});
}

// Per-row squared-norm of (a - b): returns [N].
template <typename T>
TensorT<T> row_sq_dist(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    FMGAN_CHECK(shape_eq(a.shape(), b.shape()),
                what << ": shape mismatch, " << shape_str(a.shape()) << " vs "
                     << shape_str(b.shape()));
    auto ra = as_rows(a);
    auto rb = as_rows(b);
    return reduce_sum(square(sub(ra, rb)), {1}, false);
}

}  // namespace detail

// Cross-entropy objective of the real/fake discriminator:
//   -mean[log d_real] - sum over fake streams of mean[log(1 - d_fake)].
// Inputs are probabilities; values are clamped away from {0,1} before logs.
template <typename T>
TensorT<T> discriminator_loss(const TensorT<T>& d_real, const std::vector<TensorT<T>>& d_fakes) {
    FMGAN_CHECK(d_real.numel() > 0, "discriminator_loss: empty real batch");
    FMGAN_CHECK(!d_fakes.empty(), "discriminator_loss: at least one fake stream required");
    auto clamped = clamp(d_real, static_cast<T>(kProbClampLo), static_cast<T>(kProbClampHi));
    auto loss = neg(reduce_mean(log(clamped)));
    for (const auto& df : d_fakes) {
        FMGAN_CHECK(df.numel() > 0, "discriminator_loss: empty fake batch");
        auto cf = clamp(df, static_cast<T>(kProbClampLo), static_cast<T>(kProbClampHi));
        auto one_minus = add_scalar(neg(cf), T(1));
        loss = sub(loss, reduce_mean(log(one_minus)));
    }
    return loss;
}

// 0.5 * || real_center - fake_center ||^2 over feature vectors.
template <typename T>
TensorT<T> mean_feature_match(const TensorT<T>& real_center, const TensorT<T>& fake_center) {
    FMGAN_CHECK(shape_eq(real_center.shape(), fake_center.shape()),
                "mean_feature_match: center shapes differ, " << shape_str(real_center.shape())
                                                             << " vs "
                                                             << shape_str(fake_center.shape()));
    return scale(reduce_sum(square(sub(real_center, fake_center))), T(0.5));
}

// Softmax cross entropy, mean over the batch: -E[log P(label | x)].
template <typename T>
TensorT<T> classification_loss(const TensorT<T>& logits, const std::vector<int>& labels) {
    FMGAN_CHECK(logits.ndim() == 2,
                "classification_loss: logits must be [N,K], got " << shape_str(logits.shape()));
    int64_t n = logits.dim(0), k = logits.dim(1);
    FMGAN_CHECK(static_cast<int64_t>(labels.size()) == n,
                "classification_loss: " << labels.size() << " labels for batch of " << n);
    for (size_t i = 0; i < labels.size(); ++i) {
        FMGAN_CHECK(labels[i] >= 0 && labels[i] < k,
                    "classification_loss: label " << labels[i] << " out of range [0, " << k
                                                  << ") at row " << i);
    }
    // Stable log-softmax: the row max enters as a constant shift.
    auto mx = TensorT<T>::zeros({n, 1});
    {
        const T* pl = logits.data();
        T* pm = mx.data();
        for (int64_t r = 0; r < n; ++r) {
            T m = pl[r * k];
            for (int64_t j = 1; j < k; ++j) m = std::max(m, pl[r * k + j]);
            pm[r] = m;
        }
    }
    auto shifted = sub(logits, mx);
    auto lse = log(reduce_sum(exp(shifted), {1}, true));
    auto logp = sub(shifted, lse);
    auto mask = one_hot<T>(labels, static_cast<int>(k));
    auto picked = reduce_sum(mul(logp, mask), {1}, false);
    return neg(reduce_mean(picked));
}

// Sum over classes of 0.5 * || real_center_c - fake_center_c ||^2.
template <typename T>
TensorT<T> per_class_mean_match(
    const std::vector<std::pair<TensorT<T>, TensorT<T>>>& center_pairs) {
    auto total = TensorT<T>::scalar(T(0));
    for (const auto& [real_c, fake_c] : center_pairs) {
        total = add(total, mean_feature_match(real_c, fake_c));
    }
    return total;
}

// KL(N(mu, diag(exp eps)) || N(0, I)) = 0.5*(mu^T mu + sum(exp(eps)-eps-1)),
// averaged over the batch when given [N, L] inputs.
template <typename T>
TensorT<T> kl_to_standard_normal(const TensorT<T>& mu, const TensorT<T>& eps) {
    FMGAN_CHECK(shape_eq(mu.shape(), eps.shape()),
                "kl_to_standard_normal: mu " << shape_str(mu.shape()) << " vs eps "
                                             << shape_str(eps.shape()));
    auto m = detail::as_rows(mu);
    auto e = detail::as_rows(eps);
    auto quad = reduce_sum(square(m), {1}, false);
    auto evar = reduce_sum(add_scalar(sub(exp(e), e), T(-1)), {1}, false);
    auto per_sample = scale(add(quad, evar), T(0.5));
    return reduce_mean(per_sample);
}

// z = mu + noise ⊙ sigma(eps).
template <typename T>
TensorT<T> reparameterize(const TensorT<T>& mu, const TensorT<T>& eps, const TensorT<T>& noise,
                          LatentScale scale_map) {
    FMGAN_CHECK(shape_eq(mu.shape(), eps.shape()) && shape_eq(mu.shape(), noise.shape()),
                "reparameterize: mu/eps/noise shapes differ: " << shape_str(mu.shape()) << ", "
                                                               << shape_str(eps.shape()) << ", "
                                                               << shape_str(noise.shape()));
    auto sigma = scale_map == LatentScale::ExpHalfEps ? exp(scale(eps, T(0.5))) : exp(eps);
    return add(mu, mul(noise, sigma));
}

// Pairwise reconstruction objective: per sample
//   0.5*(||x - xr||^2 + ||fd_x - fd_xr||^2 + ||fc_x - fc_xr||^2),
// then averaged over the batch. The masked form drops individual sites
// (pixel / f_D / f_C) for the loss-combination study.
template <typename T>
TensorT<T> pairwise_match_masked(const TensorT<T>& x, const TensorT<T>& xr, const TensorT<T>& fd_x,
                                 const TensorT<T>& fd_xr, const TensorT<T>& fc_x,
                                 const TensorT<T>& fc_xr, bool use_img, bool use_fd, bool use_fc) {
    auto pix = detail::row_sq_dist(x, xr, "pairwise_match(pixels)");
    auto dfeat = detail::row_sq_dist(fd_x, fd_xr, "pairwise_match(f_D)");
    auto cfeat = detail::row_sq_dist(fc_x, fc_xr, "pairwise_match(f_C)");
    FMGAN_CHECK(pix.numel() == dfeat.numel() && pix.numel() == cfeat.numel(),
                "pairwise_match: batch sizes differ across terms");
    auto per_sample = TensorT<T>::zeros(pix.shape());
    if (use_img) per_sample = add(per_sample, pix);
    if (use_fd) per_sample = add(per_sample, dfeat);
    if (use_fc) per_sample = add(per_sample, cfeat);
    return reduce_mean(scale(per_sample, T(0.5)));
}

template <typename T>
TensorT<T> pairwise_match(const TensorT<T>& x, const TensorT<T>& xr, const TensorT<T>& fd_x,
                          const TensorT<T>& fd_xr, const TensorT<T>& fc_x,
                          const TensorT<T>& fc_xr) {
    return pairwise_match_masked(x, xr, fd_x, fd_xr, fc_x, fc_xr, true, true, true);
}

template <typename T>
struct LossParts {
    TensorT<T> classification;  // L_C
    TensorT<T> adversarial;     // L_D
    TensorT<T> kl;              // L_KL
    TensorT<T> pairwise;        // L_G
    TensorT<T> mean_d;          // L_GD
    TensorT<T> mean_c;          // L_GC
};

// Per-network training objectives: C and D train on their own cross-entropy
// terms; G gets the weighted feature-matching sum; E gets KL + pairwise.
template <typename T>
struct Objectives {
    TensorT<T> classifier;
    TensorT<T> discriminator;
    TensorT<T> generator;
    TensorT<T> encoder;
};

template <typename T>
Objectives<T> composite_objectives(const LossParts<T>& parts, const LossWeights& w) {
    Objectives<T> o;
    o.classifier = parts.classification;
    o.discriminator = parts.adversarial;
    o.generator = add(add(scale(parts.pairwise, static_cast<T>(w.pairwise)),
                          scale(parts.mean_d, static_cast<T>(w.mean_d))),
                      scale(parts.mean_c, static_cast<T>(w.mean_c)));
    o.encoder = add(scale(parts.kl, static_cast<T>(w.kl)),
                    scale(parts.pairwise, static_cast<T>(w.pairwise)));
    return o;
}

}  // namespace fmgan
