#include "fmgan/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fmgan/image_io.hpp"

namespace fmgan {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Tensor sample_ring(const RingDistribution& dist, int64_t m, Rng& rng) {
    FMGAN_CHECK(m >= 1, "sample_ring: m must be >= 1, got " << m);
    FMGAN_CHECK(dist.r > 0 && dist.sigma >= 0,
                "sample_ring: need r > 0 and sigma >= 0, got r=" << dist.r
                                                                 << " sigma=" << dist.sigma);
    std::vector<float> pts(static_cast<size_t>(2 * m));
    for (int64_t i = 0; i < m; ++i) {
        double theta = rng.uniform() * kTwoPi;
        double rad = dist.r + rng.normal() * dist.sigma;
        pts[static_cast<size_t>(2 * i)] = static_cast<float>(dist.cx + rad * std::cos(theta));
        pts[static_cast<size_t>(2 * i + 1)] = static_cast<float>(dist.cy + rad * std::sin(theta));
    }
    return Tensor::from_vec({m, 2}, std::move(pts));
}

LabeledBatch RingDataset::sample(int64_t m, Rng& rng) const {
    LabeledBatch b;
    b.x = sample_ring(dist_, m, rng);
    b.labels.assign(static_cast<size_t>(m), 0);
    b.source = describe();
    return b;
}

std::string RingDataset::describe() const {
    std::ostringstream ss;
    ss << "ring(center=(" << dist_.cx << "," << dist_.cy << "),r=" << dist_.r
       << ",sigma=" << dist_.sigma << ")";
    return ss.str();
}

// --- synthetic renderer ------------------------------------------------------

SyntheticClassSpec SyntheticClassSpec::for_class(int cls, int classes, int side) {
    FMGAN_CHECK(cls >= 0 && cls < classes,
                "SyntheticClassSpec: class " << cls << " out of range [0, " << classes << ")");
    SyntheticClassSpec s;
    s.cls = cls;
    s.side = side;
    s.hue_deg = 360.0f * static_cast<float>(cls) / static_cast<float>(classes);
    s.blobs = 1 + cls % 3;
    s.orientation = static_cast<float>(cls % 4) * 0.25f * static_cast<float>(kTwoPi / 2.0);
    return s;
}

namespace {

void hsv_to_rgb(float h_deg, float s, float v, float rgb[3]) {
    float h = std::fmod(h_deg, 360.0f) / 60.0f;
    if (h < 0) h += 6.0f;
    int i = static_cast<int>(h) % 6;
    float f = h - std::floor(h);
    float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

}  // namespace

Tensor render_synthetic(const SyntheticClassSpec& spec, uint64_t seed) {
    FMGAN_CHECK(spec.side >= 8, "render_synthetic: side must be >= 8, got " << spec.side);
    FMGAN_CHECK(spec.blobs >= 1, "render_synthetic: blobs must be >= 1");
    Rng rng(seed);
    const int s = spec.side;
    const float fs = static_cast<float>(s);

    // nuisance draws, fixed order
    float jitter = spec.jitter_frac * fs;
    float dx = static_cast<float>(rng.uniform(-jitter, jitter));
    float dy = static_cast<float>(rng.uniform(-jitter, jitter));
    float sc = static_cast<float>(rng.uniform(spec.scale_lo, spec.scale_hi));
    float bright = static_cast<float>(rng.uniform(spec.bright_lo, spec.bright_hi));

    float rgb[3];
    hsv_to_rgb(spec.hue_deg, 0.85f, bright, rgb);
    const float bg = -0.85f;
    float blob_rgb[3];
    for (int c = 0; c < 3; ++c) blob_rgb[c] = rgb[c] * 2.0f - 1.0f;

    float cx = fs * 0.5f + dx;
    float cy = fs * 0.5f + dy;
    float spacing = 0.24f * fs * sc;
    float radius = 0.16f * fs * sc;
    float ux = std::cos(spec.orientation);
    float uy = std::sin(spec.orientation);

    auto img = Tensor::full({3, s, s}, bg);
    float* p = img.data();
    for (int b = 0; b < spec.blobs; ++b) {
        float off = (static_cast<float>(b) - static_cast<float>(spec.blobs - 1) * 0.5f) * spacing;
        float bx = cx + off * ux;
        float by = cy + off * uy;
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                float ddx = (static_cast<float>(x) + 0.5f) - bx;
                float ddy = (static_cast<float>(y) + 0.5f) - by;
                float d2 = (ddx * ddx + ddy * ddy) / (radius * radius);
                float v = std::exp(-2.0f * d2);
                if (v < 1e-3f) continue;
                for (int c = 0; c < 3; ++c) {
                    float& px = p[c * s * s + y * s + x];
                    float candidate = bg + v * (blob_rgb[c] - bg);
                    px = std::max(px, candidate);
                }
            }
        }
    }
    return img;
}

// --- memory dataset ---------------------------------------------------------

MemoryDataset::MemoryDataset(Shape item_shape, int classes, std::string source)
    : item_shape_(std::move(item_shape)), classes_(classes), source_(std::move(source)) {
    FMGAN_CHECK(classes_ >= 1, "MemoryDataset: classes must be >= 1");
}

void MemoryDataset::add(std::vector<float> values, int label) {
    FMGAN_CHECK(static_cast<int64_t>(values.size()) == shape_numel(item_shape_),
                "MemoryDataset::add: item size " << values.size() << " vs shape "
                                                 << shape_str(item_shape_));
    FMGAN_CHECK(label >= 0 && label < classes_,
                "MemoryDataset::add: label " << label << " out of range [0, " << classes_ << ")");
    items_.push_back(std::move(values));
    labels_.push_back(label);
}

LabeledBatch MemoryDataset::sample(int64_t m, Rng& rng) const {
    FMGAN_CHECK(m >= 1, "MemoryDataset::sample: m must be >= 1");
    FMGAN_CHECK(!items_.empty(), "MemoryDataset::sample: dataset is empty");
    int64_t item_n = shape_numel(item_shape_);
    std::vector<float> data(static_cast<size_t>(m * item_n));
    LabeledBatch b;
    b.labels.resize(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        int64_t k = rng.index(static_cast<int64_t>(items_.size()));
        std::copy(items_[static_cast<size_t>(k)].begin(), items_[static_cast<size_t>(k)].end(),
                  data.begin() + i * item_n);
        b.labels[static_cast<size_t>(i)] = labels_[static_cast<size_t>(k)];
    }
    Shape bshape;
    bshape.push_back(m);
    for (auto d : item_shape_) bshape.push_back(d);
    b.x = Tensor::from_vec(std::move(bshape), std::move(data));
    b.source = source_;
    return b;
}

Tensor MemoryDataset::class_items(int cls) const {
    FMGAN_CHECK(cls >= 0 && cls < classes_, "class_items: class out of range");
    std::vector<float> data;
    int64_t count = 0;
    for (size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == cls) {
            data.insert(data.end(), items_[i].begin(), items_[i].end());
            ++count;
        }
    }
    FMGAN_CHECK(count > 0, "class_items: no items of class " << cls);
    Shape bshape;
    bshape.push_back(count);
    for (auto d : item_shape_) bshape.push_back(d);
    return Tensor::from_vec(std::move(bshape), std::move(data));
}

Tensor MemoryDataset::item(int64_t i) const {
    FMGAN_CHECK(i >= 0 && i < size(), "item: index out of range");
    return Tensor::from_vec(item_shape_, items_[static_cast<size_t>(i)]);
}

std::shared_ptr<MemoryDataset> make_synthetic_dataset(int classes, int per_class, int side,
                                                      uint64_t seed) {
    FMGAN_CHECK(classes >= 1 && per_class >= 1, "make_synthetic_dataset: bad sizes");
    std::ostringstream src;
    src << "synthetic(classes=" << classes << ",per_class=" << per_class << ",side=" << side
        << ",seed=" << seed << ")";
    auto ds = std::make_shared<MemoryDataset>(Shape{3, side, side}, classes, src.str());
    for (int c = 0; c < classes; ++c) {
        auto spec = SyntheticClassSpec::for_class(c, classes, side);
        for (int i = 0; i < per_class; ++i) {
            uint64_t item_seed =
                seed * 1000003ULL + static_cast<uint64_t>(c) * 131071ULL + static_cast<uint64_t>(i);
            auto img = render_synthetic(spec, item_seed);
            ds->add(std::vector<float>(img.data(), img.data() + img.numel()), c);
        }
    }
    return ds;
}

std::shared_ptr<MemoryDataset> load_directory(const std::string& root,
                                              const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    FMGAN_CHECK(mf.good(), "load_directory: cannot open manifest " << manifest_path);
    std::vector<std::pair<std::string, int>> entries;
    std::string line;
    int max_label = -1;
    size_t line_no = 0;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        FMGAN_CHECK(tab != std::string::npos, "load_directory: " << manifest_path << ":" << line_no
                                                                 << " has no tab separator");
        std::string rel = line.substr(0, tab);
        int label = -1;
        try {
            label = std::stoi(line.substr(tab + 1));
        } catch (...) {
            raise("load_directory: " + manifest_path + ":" + std::to_string(line_no) +
                  " has a malformed class id");
        }
        FMGAN_CHECK(label >= 0, "load_directory: negative class id at " << manifest_path << ":"
                                                                        << line_no);
        entries.emplace_back(std::move(rel), label);
        max_label = std::max(max_label, label);
    }
    FMGAN_CHECK(!entries.empty(), "load_directory: manifest " << manifest_path << " is empty");

    std::set<int> seen;
    for (auto& [rel, label] : entries) seen.insert(label);
    for (int c = 0; c <= max_label; ++c) {
        FMGAN_CHECK(seen.count(c) != 0, "load_directory: class ids not contiguous, missing class "
                                            << c << " (max id " << max_label << ")");
    }

    std::shared_ptr<MemoryDataset> ds;
    for (auto& [rel, label] : entries) {
        std::filesystem::path p = std::filesystem::path(root) / rel;
        auto img = read_bmp(p.string());
        if (!ds) {
            ds = std::make_shared<MemoryDataset>(img.shape(), max_label + 1,
                                                 "directory(" + root + ")");
        }
        FMGAN_CHECK(shape_eq(img.shape(), ds->item_shape()),
                    "load_directory: " << p.string() << " has shape " << shape_str(img.shape())
                                       << ", expected " << shape_str(ds->item_shape()));
        ds->add(std::vector<float>(img.data(), img.data() + img.numel()), label);
    }
    return ds;
}

void materialize_synthetic(const std::string& dir, int classes, int per_class, int side,
                           uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ostringstream manifest;
    for (int c = 0; c < classes; ++c) {
        auto spec = SyntheticClassSpec::for_class(c, classes, side);
        fs::create_directories(fs::path(dir) / ("class_" + std::to_string(c)));
        for (int i = 0; i < per_class; ++i) {
            uint64_t item_seed =
                seed * 1000003ULL + static_cast<uint64_t>(c) * 131071ULL + static_cast<uint64_t>(i);
            auto img = render_synthetic(spec, item_seed);
            std::string rel = "class_" + std::to_string(c) + "/img_" + std::to_string(i) + ".bmp";
            write_bmp((fs::path(dir) / rel).string(), img);
            manifest << rel << "\t" << c << "\n";
        }
    }
    write_text_file((fs::path(dir) / "manifest.tsv").string(), manifest.str());
}

// --- inpainting data ---------------------------------------------------------

int64_t default_patch_side(int64_t side) { return 50 * side / 128; }

std::pair<Tensor, Tensor> corrupt_patch(const Tensor& x, const PatchGeometry& geom,
                                        uint64_t seed) {
    FMGAN_CHECK(x.ndim() == 3, "corrupt_patch: image must be [C, H, W], got "
                                   << shape_str(x.shape()));
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    FMGAN_CHECK(geom.h > 0 && geom.w > 0 && geom.y >= 0 && geom.x >= 0 && geom.y + geom.h <= h &&
                    geom.x + geom.w <= w,
                "corrupt_patch: patch (y=" << geom.y << ",x=" << geom.x << "," << geom.h << "x"
                                           << geom.w << ") outside image " << h << "x" << w);
    auto corrupted = x.clone();
    auto mask = Tensor::zeros({1, h, w});
    Rng rng(seed);
    float* pc = corrupted.data();
    float* pm = mask.data();
    for (int64_t yy = geom.y; yy < geom.y + geom.h; ++yy) {
        for (int64_t xx = geom.x; xx < geom.x + geom.w; ++xx) {
            pm[yy * w + xx] = 1.0f;
            for (int64_t ch = 0; ch < c; ++ch) {
                pc[ch * h * w + yy * w + xx] = static_cast<float>(rng.uniform(-1.0, 1.0));
            }
        }
    }
    return {corrupted, mask};
}

}  // namespace fmgan
