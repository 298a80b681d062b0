#include "fmgan/center_bank.hpp"

namespace fmgan {

CenterBank::CenterBank(int feature_dim, int classes, float decay)
    : feature_dim_(feature_dim), classes_(classes), decay_(decay) {
    FMGAN_CHECK(feature_dim > 0, "CenterBank: feature_dim must be positive");
    FMGAN_CHECK(classes >= 1, "CenterBank: classes must be >= 1");
    FMGAN_CHECK(decay >= 0.0f && decay < 1.0f,
                "CenterBank: decay must lie in [0, 1), got " << decay);
    class_real_.resize(static_cast<size_t>(classes));
    class_fake_.resize(static_cast<size_t>(classes));
}

void CenterBank::check_dim(std::span<const float> v) const {
    FMGAN_CHECK(static_cast<int>(v.size()) == feature_dim_,
                "CenterBank: feature dimension changed mid-run, expected " << feature_dim_
                                                                           << " got " << v.size());
}

std::optional<std::vector<float>> CenterBank::update(Stream& s, std::span<const float> mean,
                                                     int64_t samples) {
    check_dim(mean);
    FMGAN_CHECK(samples >= 1, "CenterBank: empty batch slice");
    std::optional<std::vector<float>> prev;
    if (!s.initialized) {
        s.center.assign(mean.begin(), mean.end());
        s.initialized = true;
    } else {
        prev = s.center;
        for (size_t i = 0; i < s.center.size(); ++i) {
            s.center[i] = decay_ * s.center[i] + (1.0f - decay_) * mean[i];
        }
    }
    s.samples += samples;
    return prev;
}

std::optional<std::vector<float>> CenterBank::observe_global(Side side,
                                                             std::span<const float> batch_mean) {
    return update(stream_global(side), batch_mean, 1);
}

std::optional<std::vector<float>> CenterBank::observe_class(Side side, int cls,
                                                            std::span<const float> batch_mean,
                                                            int64_t samples) {
    return update(stream_class(side, cls), batch_mean, samples);
}

bool CenterBank::global_initialized(Side side) const { return stream_global(side).initialized; }

bool CenterBank::class_initialized(Side side, int cls) const {
    return stream_class(side, cls).initialized;
}

std::span<const float> CenterBank::global_center(Side side) const {
    const auto& s = stream_global(side);
    FMGAN_CHECK(s.initialized, "CenterBank: reading uninitialized global center");
    return {s.center.data(), s.center.size()};
}

std::span<const float> CenterBank::class_center(Side side, int cls) const {
    const auto& s = stream_class(side, cls);
    FMGAN_CHECK(s.initialized, "CenterBank: reading uninitialized center for class " << cls);
    return {s.center.data(), s.center.size()};
}

int64_t CenterBank::class_samples(Side side, int cls) const {
    return stream_class(side, cls).samples;
}

CenterBank::Stream& CenterBank::stream_class(Side side, int cls) {
    FMGAN_CHECK(cls >= 0 && cls < classes_, "CenterBank: class " << cls << " out of range [0, "
                                                                 << classes_ << ")");
    return side == Side::Real ? class_real_[static_cast<size_t>(cls)]
                              : class_fake_[static_cast<size_t>(cls)];
}

const CenterBank::Stream& CenterBank::stream_class(Side side, int cls) const {
    FMGAN_CHECK(cls >= 0 && cls < classes_, "CenterBank: class " << cls << " out of range [0, "
                                                                 << classes_ << ")");
    return side == Side::Real ? class_real_[static_cast<size_t>(cls)]
                              : class_fake_[static_cast<size_t>(cls)];
}

std::vector<int> CenterBank::ready_classes() const {
    std::vector<int> out;
    for (int c = 0; c < classes_; ++c) {
        if (class_real_[static_cast<size_t>(c)].initialized &&
            class_fake_[static_cast<size_t>(c)].initialized) {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<CenterPair> read_centers(const CenterBank& bank, const std::vector<int>& requested) {
    std::vector<CenterPair> out;
    for (int c : requested) {
        if (!bank.class_initialized(Side::Real, c) || !bank.class_initialized(Side::Fake, c)) {
            continue;  // skipped, not an error
        }
        auto r = bank.class_center(Side::Real, c);
        auto f = bank.class_center(Side::Fake, c);
        CenterPair p;
        p.cls = c;
        p.real_center = Tensor::from_vec({bank.feature_dim()}, std::vector<float>(r.begin(), r.end()));
        p.fake_center = Tensor::from_vec({bank.feature_dim()}, std::vector<float>(f.begin(), f.end()));
        out.push_back(std::move(p));
    }
    return out;
}

Tensor combined_center(const std::optional<std::vector<float>>& prev, const Tensor& batch_mean,
                       float decay) {
    if (!prev.has_value()) return batch_mean;
    FMGAN_CHECK(static_cast<int64_t>(prev->size()) == batch_mean.numel(),
                "combined_center: stored center size " << prev->size() << " vs batch mean "
                                                       << shape_str(batch_mean.shape()));
    auto anchor = Tensor::from_vec(batch_mean.shape(), *prev);
    return add(scale(anchor, decay), scale(batch_mean, 1.0f - decay));
}

}  // namespace fmgan
