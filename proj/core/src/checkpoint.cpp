#include "fmgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fmgan {

namespace {

constexpr char kMagic[8] = {'F', 'M', 'G', 'A', 'N', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;
constexpr char kRefMagic[8] = {'F', 'M', 'G', 'A', 'N', 'R', 'F', '1'};

struct Writer {
    std::ofstream f;
    explicit Writer(const std::string& path) : f(path, std::ios::binary | std::ios::trunc) {
        FMGAN_CHECK(f.good(), "checkpoint: cannot open " << path << " for writing");
    }
    void bytes(const void* p, size_t n) {
        f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void i64(int64_t v) { bytes(&v, 8); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void floats(const float* p, size_t n) { bytes(p, n * 4); }
    void done(const std::string& path) {
        f.flush();
        FMGAN_CHECK(f.good(), "checkpoint: write failed for " << path);
    }
};

struct Reader {
    std::ifstream f;
    std::string path;
    explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        FMGAN_CHECK(f.good(), "checkpoint: cannot open " << p);
    }
    void bytes(void* p, size_t n) {
        f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        FMGAN_CHECK(f.good(), "checkpoint: " << path << " is truncated");
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    int64_t i64() {
        int64_t v;
        bytes(&v, 8);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        uint64_t n = u64();
        FMGAN_CHECK(n < (1ULL << 32), "checkpoint: absurd string length in " << path);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    void floats(float* p, size_t n) { bytes(p, n * 4); }
};

void check_header(Reader& r) {
    char magic[8];
    r.bytes(magic, 8);
    FMGAN_CHECK(std::memcmp(magic, kMagic, 8) == 0,
                "checkpoint: " << r.path << " has a bad magic header");
    uint32_t v = r.u32();
    FMGAN_CHECK(v == kVersion, "checkpoint: " << r.path << " has format version " << v
                                              << ", expected " << kVersion);
}

void write_tensor(Writer& w, const NamedParam& p) {
    w.str(p.name);
    w.u32(static_cast<uint32_t>(p.tensor.ndim()));
    for (int i = 0; i < p.tensor.ndim(); ++i) w.i64(p.tensor.dim(i));
    w.floats(p.tensor.data(), static_cast<size_t>(p.tensor.numel()));
}

void write_bank_stream(Writer& w, const CenterBank::Stream& s, int fdim) {
    w.u8(s.initialized ? 1 : 0);
    w.i64(s.samples);
    std::vector<float> c = s.center;
    c.resize(static_cast<size_t>(fdim), 0.0f);
    w.floats(c.data(), c.size());
}

void read_bank_stream(Reader& r, CenterBank::Stream& s, int fdim) {
    s.initialized = r.u8() != 0;
    s.samples = r.i64();
    s.center.assign(static_cast<size_t>(fdim), 0.0f);
    r.floats(s.center.data(), s.center.size());
    if (!s.initialized) s.center.clear();
}

}  // namespace

void save_checkpoint(const std::string& path, Trainer& trainer, const std::string& config_text) {
    Writer w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    w.str(config_text);
    w.i64(trainer.iteration());
    w.str(trainer.rng().serialize());

    // tensors: per-net params (nets in lexicographic order), then buffers
    auto nets = trainer.nets();
    uint32_t count = 0;
    for (const auto& n : nets) count += static_cast<uint32_t>(trainer.params(n).size());
    auto buffers = trainer.buffers();
    count += static_cast<uint32_t>(buffers.size());
    w.u32(count);
    for (const auto& n : nets) {
        for (const auto& p : trainer.params(n)) write_tensor(w, p);
    }
    for (const auto& p : buffers) write_tensor(w, p);

    // optimizer slots
    w.u32(static_cast<uint32_t>(nets.size()));
    for (const auto& n : nets) {
        auto& opt = trainer.optimizer(n);
        w.str(n);
        w.u8(static_cast<uint8_t>(opt.config().kind));
        w.u64(opt.steps());
        w.u32(static_cast<uint32_t>(opt.slot_count()));
        for (size_t s = 0; s < opt.slot_count(); ++s) {
            auto& slot = opt.slot(s);
            w.u32(static_cast<uint32_t>(slot.size()));
            for (const auto& buf : slot) {
                w.u64(buf.size());
                w.floats(buf.data(), buf.size());
            }
        }
    }

    // center bank
    auto& bank = trainer.bank();
    w.u32(static_cast<uint32_t>(bank.feature_dim()));
    w.u32(static_cast<uint32_t>(bank.classes()));
    w.f32(bank.decay());
    write_bank_stream(w, bank.stream_global(Side::Real), bank.feature_dim());
    write_bank_stream(w, bank.stream_global(Side::Fake), bank.feature_dim());
    for (int c = 0; c < bank.classes(); ++c) {
        write_bank_stream(w, bank.stream_class(Side::Real, c), bank.feature_dim());
        write_bank_stream(w, bank.stream_class(Side::Fake, c), bank.feature_dim());
    }
    w.done(path);
}

std::string peek_checkpoint_config(const std::string& path) {
    Reader r(path);
    check_header(r);
    return r.str();
}

void load_checkpoint_into(const std::string& path, Trainer& trainer) {
    Reader r(path);
    check_header(r);
    (void)r.str();  // config text; the caller already built the trainer from it
    trainer.set_iteration(r.i64());
    {
        Rng rng;
        rng.deserialize(r.str());
        trainer.rng() = rng;
    }

    std::map<std::string, Tensor> by_name;
    for (const auto& n : trainer.nets()) {
        for (auto& p : trainer.params(n)) by_name.emplace(p.name, p.tensor);
    }
    for (auto& p : trainer.buffers()) by_name.emplace(p.name, p.tensor);

    uint32_t count = r.u32();
    FMGAN_CHECK(count == by_name.size(), "checkpoint: " << path << " holds " << count
                                                        << " tensors, trainer expects "
                                                        << by_name.size());
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.i64();
        auto it = by_name.find(name);
        FMGAN_CHECK(it != by_name.end(), "checkpoint: unknown tensor '" << name << "' in " << path);
        FMGAN_CHECK(shape_eq(shape, it->second.shape()),
                    "checkpoint: tensor '" << name << "' has shape " << shape_str(shape)
                                           << ", trainer expects "
                                           << shape_str(it->second.shape()));
        r.floats(it->second.data(), static_cast<size_t>(it->second.numel()));
    }

    uint32_t nopt = r.u32();
    FMGAN_CHECK(nopt == trainer.nets().size(),
                "checkpoint: optimizer count mismatch in " << path);
    for (uint32_t i = 0; i < nopt; ++i) {
        std::string net = r.str();
        auto& opt = trainer.optimizer(net);
        uint8_t kind = r.u8();
        FMGAN_CHECK(kind == static_cast<uint8_t>(opt.config().kind),
                    "checkpoint: optimizer kind mismatch for network " << net);
        opt.set_steps(r.u64());
        uint32_t nslots = r.u32();
        FMGAN_CHECK(nslots == opt.slot_count(),
                    "checkpoint: optimizer slot count mismatch for network " << net);
        for (uint32_t s = 0; s < nslots; ++s) {
            auto& slot = opt.slot(s);
            uint32_t nparams = r.u32();
            FMGAN_CHECK(nparams == slot.size(),
                        "checkpoint: optimizer parameter count mismatch for network " << net);
            for (auto& buf : slot) {
                uint64_t len = r.u64();
                FMGAN_CHECK(len == buf.size(),
                            "checkpoint: optimizer buffer size mismatch for network " << net);
                r.floats(buf.data(), buf.size());
            }
        }
    }

    auto& bank = trainer.bank();
    uint32_t fdim = r.u32();
    uint32_t classes = r.u32();
    float decay = r.f32();
    FMGAN_CHECK(static_cast<int>(fdim) == bank.feature_dim() &&
                    static_cast<int>(classes) == bank.classes(),
                "checkpoint: center bank layout mismatch in " << path);
    FMGAN_CHECK(decay == bank.decay(), "checkpoint: center bank decay mismatch in " << path);
    read_bank_stream(r, bank.stream_global(Side::Real), bank.feature_dim());
    read_bank_stream(r, bank.stream_global(Side::Fake), bank.feature_dim());
    for (int c = 0; c < bank.classes(); ++c) {
        read_bank_stream(r, bank.stream_class(Side::Real, c), bank.feature_dim());
        read_bank_stream(r, bank.stream_class(Side::Fake, c), bank.feature_dim());
    }
}

RestoredRun restore_run(const std::string& checkpoint_path) {
    RestoredRun out;
    out.config = ExperimentConfig::parse(peek_checkpoint_config(checkpoint_path));
    out.config.validate();
    out.dataset = out.config.make_dataset();
    out.trainer = std::make_unique<Trainer>(out.config.run, out.config.model, out.dataset);
    load_checkpoint_into(checkpoint_path, *out.trainer);
    return out;
}

void save_reference(const std::string& path, ReferenceClassifier& ref) {
    Writer w(path);
    w.bytes(kRefMagic, 8);
    w.u32(kVersion);
    const auto& cfg = ref.config();
    w.u8(cfg.scale == Scale::Toy2d ? 0 : 1);
    w.u32(static_cast<uint32_t>(cfg.image_side));
    w.u32(static_cast<uint32_t>(cfg.image_channels));
    w.u32(static_cast<uint32_t>(cfg.latent_dim));
    w.u32(static_cast<uint32_t>(cfg.classes));
    w.u32(static_cast<uint32_t>(cfg.toy_hidden.size()));
    for (int h : cfg.toy_hidden) w.u32(static_cast<uint32_t>(h));
    w.u32(static_cast<uint32_t>(cfg.feature_width));
    w.u32(static_cast<uint32_t>(cfg.gen_base_channels));
    w.f64(ref.test_accuracy());
    w.str(ref.provenance());

    ParamList tensors;
    ref.net().collect_params("ref", tensors);
    ref.net().collect_buffers("ref", tensors);
    w.u32(static_cast<uint32_t>(tensors.size()));
    for (const auto& p : tensors) write_tensor(w, p);
    w.done(path);
}

ReferenceClassifier load_reference(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, 8);
    FMGAN_CHECK(std::memcmp(magic, kRefMagic, 8) == 0,
                "reference classifier: " << path << " has a bad magic header");
    uint32_t v = r.u32();
    FMGAN_CHECK(v == kVersion, "reference classifier: version mismatch in " << path);

    ModelConfig cfg;
    cfg.scale = r.u8() == 0 ? Scale::Toy2d : Scale::Image;
    cfg.image_side = static_cast<int>(r.u32());
    cfg.image_channels = static_cast<int>(r.u32());
    cfg.latent_dim = static_cast<int>(r.u32());
    cfg.classes = static_cast<int>(r.u32());
    uint32_t nh = r.u32();
    cfg.toy_hidden.clear();
    for (uint32_t i = 0; i < nh; ++i) cfg.toy_hidden.push_back(static_cast<int>(r.u32()));
    cfg.feature_width = static_cast<int>(r.u32());
    cfg.gen_base_channels = static_cast<int>(r.u32());
    double acc = r.f64();
    std::string prov = r.str();

    Rng dummy(0);
    Classifier net(cfg, dummy);
    ParamList tensors;
    net.collect_params("ref", tensors);
    net.collect_buffers("ref", tensors);
    std::map<std::string, Tensor> by_name;
    for (auto& p : tensors) by_name.emplace(p.name, p.tensor);

    uint32_t count = r.u32();
    FMGAN_CHECK(count == by_name.size(), "reference classifier: tensor count mismatch in " << path);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.i64();
        auto it = by_name.find(name);
        FMGAN_CHECK(it != by_name.end(),
                    "reference classifier: unknown tensor '" << name << "' in " << path);
        FMGAN_CHECK(shape_eq(shape, it->second.shape()),
                    "reference classifier: shape mismatch for '" << name << "' in " << path);
        r.floats(it->second.data(), static_cast<size_t>(it->second.numel()));
    }
    return ReferenceClassifier(std::move(net), cfg, acc, prov);
}

}  // namespace fmgan
