#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fmgan/models.hpp"
#include "fmgan/tensor.hpp"

namespace fmgan {

// Ring of radius r around `center` with Gaussian radial thickness sigma:
// p = center + (r + n)(cos t, sin t), t ~ U[0, 2pi), n ~ N(0, sigma^2).
struct RingDistribution {
    float cx = 100.0f;
    float cy = 100.0f;
    float r = 10.0f;
    float sigma = 0.25f;
};

Tensor sample_ring(const RingDistribution& dist, int64_t m, Rng& rng);

// One fine-grained synthetic category: the family parameters (hue, blob
// count, orientation) identify the class; position/scale/brightness jitter
// are the within-class nuisances.
struct SyntheticClassSpec {
    int cls = 0;
    int side = 32;
    // family parameters; distinct classes differ in at least the hue
    float hue_deg = 0.0f;
    int blobs = 1;
    float orientation = 0.0f;  // radians
    // nuisance ranges
    float jitter_frac = 0.12f;
    float scale_lo = 0.8f, scale_hi = 1.25f;
    float bright_lo = 0.65f, bright_hi = 1.0f;

    static SyntheticClassSpec for_class(int cls, int classes, int side);
};

// Deterministic [3, side, side] render in [-1, 1] for (spec, seed).
Tensor render_synthetic(const SyntheticClassSpec& spec, uint64_t seed);

struct LabeledBatch {
    Tensor x;
    std::vector<int> labels;
    std::string source;
};

// Read-only sample source; batch sampling is with replacement and is a pure
// function of the supplied rng state.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual int classes() const = 0;
    virtual Shape item_shape() const = 0;
    virtual int64_t size() const = 0;  // 0 for unbounded generators
    virtual LabeledBatch sample(int64_t m, Rng& rng) const = 0;
    virtual std::string describe() const = 0;
};

class RingDataset : public Dataset {
public:
    explicit RingDataset(RingDistribution dist) : dist_(dist) {}
    int classes() const override { return 1; }
    Shape item_shape() const override { return {2}; }
    int64_t size() const override { return 0; }
    LabeledBatch sample(int64_t m, Rng& rng) const override;
    std::string describe() const override;
    const RingDistribution& distribution() const { return dist_; }

private:
    RingDistribution dist_;
};

// In-memory labeled items of one fixed shape.
class MemoryDataset : public Dataset {
public:
    MemoryDataset(Shape item_shape, int classes, std::string source);
    void add(std::vector<float> values, int label);
    int classes() const override { return classes_; }
    Shape item_shape() const override { return item_shape_; }
    int64_t size() const override { return static_cast<int64_t>(labels_.size()); }
    LabeledBatch sample(int64_t m, Rng& rng) const override;
    std::string describe() const override { return source_; }

    // All items of one class, stacked.
    Tensor class_items(int cls) const;
    Tensor item(int64_t i) const;
    int label(int64_t i) const { return labels_[static_cast<size_t>(i)]; }

private:
    Shape item_shape_;
    int classes_;
    std::string source_;
    std::vector<std::vector<float>> items_;
    std::vector<int> labels_;
};

// `per_class` renders per class, seeds derived from `seed`.
std::shared_ptr<MemoryDataset> make_synthetic_dataset(int classes, int per_class, int side,
                                                      uint64_t seed);

// Loads "path<TAB>class_id" manifest lines (UTF-8, LF); class ids must be
// contiguous from 0. Images are BMP files relative to `root`.
std::shared_ptr<MemoryDataset> load_directory(const std::string& root,
                                              const std::string& manifest_path);

// Writes a synthetic dataset as BMP files plus manifest.tsv under dir.
void materialize_synthetic(const std::string& dir, int classes, int per_class, int side,
                           uint64_t seed);

// --- inpainting data ---------------------------------------------------------

struct PatchGeometry {
    int64_t y = 0, x = 0, h = 0, w = 0;
};

// Proportional analogue of a 50x50 patch in a 128x128 image.
int64_t default_patch_side(int64_t side);

// Fills the patch with uniform noise in [-1, 1]; returns the corrupted image
// and the binary mask (1 inside the patch). x: [C, H, W].
std::pair<Tensor, Tensor> corrupt_patch(const Tensor& x, const PatchGeometry& geom, uint64_t seed);

}  // namespace fmgan
