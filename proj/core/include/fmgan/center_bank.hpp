#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fmgan/tensor.hpp"

namespace fmgan {

enum class Side { Real, Fake };

// Moving historical averages of feature centers: one global pair (for the
// discriminator features) and one pair per class (for the classifier
// features). Stored centers are plain values and never carry a grad path;
// the first observation of a stream seeds its center directly, later ones
// decay it: center <- decay*center + (1-decay)*batch_mean.
class CenterBank {
public:
    CenterBank() = default;
    CenterBank(int feature_dim, int classes, float decay);

    // Updates the stream and returns the previously stored center when the
    // stream was already seeded (the differentiable-combination anchor).
    std::optional<std::vector<float>> observe_global(Side side,
                                                     std::span<const float> batch_mean);
    std::optional<std::vector<float>> observe_class(Side side, int cls,
                                                    std::span<const float> batch_mean,
                                                    int64_t samples);

    bool global_initialized(Side side) const;
    bool class_initialized(Side side, int cls) const;
    std::span<const float> global_center(Side side) const;
    std::span<const float> class_center(Side side, int cls) const;
    int64_t class_samples(Side side, int cls) const;

    // Classes seeded on both the real and the fake side.
    std::vector<int> ready_classes() const;

    int feature_dim() const { return feature_dim_; }
    int classes() const { return classes_; }
    float decay() const { return decay_; }

    // Raw access for checkpointing.
    struct Stream {
        std::vector<float> center;
        bool initialized = false;
        int64_t samples = 0;
    };
    Stream& stream_global(Side side) { return side == Side::Real ? global_real_ : global_fake_; }
    const Stream& stream_global(Side side) const {
        return side == Side::Real ? global_real_ : global_fake_;
    }
    Stream& stream_class(Side side, int cls);
    const Stream& stream_class(Side side, int cls) const;

private:
    void check_dim(std::span<const float> v) const;
    std::optional<std::vector<float>> update(Stream& s, std::span<const float> mean,
                                             int64_t samples);

    int feature_dim_ = 0;
    int classes_ = 0;
    float decay_ = 0.9f;
    Stream global_real_, global_fake_;
    std::vector<Stream> class_real_, class_fake_;
};

// Detached (value-only) center pairs for the classes in `requested` that are
// seeded on both sides; classes missing a side are skipped.
struct CenterPair {
    int cls = 0;
    Tensor real_center;
    Tensor fake_center;
};
std::vector<CenterPair> read_centers(const CenterBank& bank, const std::vector<int>& requested);

// The training-time fake center: decay*stored_prev enters as a constant and
// (1-decay)*batch_mean carries the gradient. With no previous value the
// batch mean itself is the (fully differentiable) center.
Tensor combined_center(const std::optional<std::vector<float>>& prev, const Tensor& batch_mean,
                       float decay);

}  // namespace fmgan
