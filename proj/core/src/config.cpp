#include "fmgan/config.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "fmgan/image_io.hpp"

namespace fmgan {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_float(float v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

float parse_float(const std::string& v, const std::string& key, size_t line) {
    if (v == "inf") return INFINITY;
    try {
        size_t pos = 0;
        float f = std::stof(v, &pos);
        FMGAN_CHECK(pos == v.size(), "config line " << line << ": trailing characters in value of '"
                                                    << key << "'");
        return f;
    } catch (const Error&) {
        throw;
    } catch (...) {
        raise("config line " + std::to_string(line) + ": '" + key + "' expects a number, got '" +
              v + "'");
    }
}

int64_t parse_int(const std::string& v, const std::string& key, size_t line) {
    try {
        size_t pos = 0;
        long long x = std::stoll(v, &pos);
        FMGAN_CHECK(pos == v.size(), "config line " << line << ": trailing characters in value of '"
                                                    << key << "'");
        return x;
    } catch (const Error&) {
        throw;
    } catch (...) {
        raise("config line " + std::to_string(line) + ": '" + key + "' expects an integer, got '" +
              v + "'");
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key, size_t line) {
    try {
        size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        FMGAN_CHECK(pos == v.size(), "config line " << line << ": trailing characters in value of '"
                                                    << key << "'");
        return x;
    } catch (const Error&) {
        throw;
    } catch (...) {
        raise("config line " + std::to_string(line) + ": '" + key +
              "' expects an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key, size_t line) {
    if (v == "true") return true;
    if (v == "false") return false;
    raise("config line " + std::to_string(line) + ": '" + key + "' expects true|false, got '" + v +
          "'");
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key, size_t line) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(parse_int(item, key, line)));
    }
    FMGAN_CHECK(!out.empty(), "config line " << line << ": '" << key << "' expects a list");
    return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, size_t> seen;
    std::istringstream is(text);
    std::string raw;
    size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        FMGAN_CHECK(eq != std::string::npos,
                    "config line " << line_no << ": expected 'key = value', got '" << trim(raw)
                                   << "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = unquote(trim(line.substr(eq + 1)));
        FMGAN_CHECK(!key.empty(), "config line " << line_no << ": empty key");
        FMGAN_CHECK(!seen.count(key), "config line " << line_no << ": duplicate key '" << key
                                                     << "' (first at line " << seen[key] << ")");
        seen[key] = line_no;

        if (key == "name") cfg.name = value;
        else if (key == "out") cfg.out_dir = value;
        else if (key == "method") cfg.run.method = method_from(value);
        else if (key == "seed") cfg.run.seed = parse_u64(value, key, line_no);
        else if (key == "iterations") cfg.run.max_iterations = parse_int(value, key, line_no);
        else if (key == "batch") cfg.run.batch = parse_int(value, key, line_no);
        else if (key == "scale") cfg.model.scale = scale_from(value);
        else if (key == "image-side") cfg.model.image_side = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "image-channels") cfg.model.image_channels = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "latent-dim") cfg.model.latent_dim = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "classes") cfg.model.classes = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "toy-hidden") cfg.model.toy_hidden = parse_int_list(value, key, line_no);
        else if (key == "feature-width") cfg.model.feature_width = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "gen-base-channels") cfg.model.gen_base_channels = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "optimizer") cfg.run.opt.kind = opt_kind_from(value);
        else if (key == "learning-rate") cfg.run.opt.lr = parse_float(value, key, line_no);
        else if (key == "rmsprop-rho") cfg.run.opt.rho = parse_float(value, key, line_no);
        else if (key == "opt-eps") cfg.run.opt.eps = parse_float(value, key, line_no);
        else if (key == "adam-beta1") cfg.run.opt.beta1 = parse_float(value, key, line_no);
        else if (key == "adam-beta2") cfg.run.opt.beta2 = parse_float(value, key, line_no);
        else if (key == "lambda1") cfg.run.weights.kl = parse_float(value, key, line_no);
        else if (key == "lambda2") cfg.run.weights.pairwise = parse_float(value, key, line_no);
        else if (key == "lambda3") cfg.run.weights.mean_d = parse_float(value, key, line_no);
        else if (key == "lambda4") cfg.run.weights.mean_c = parse_float(value, key, line_no);
        else if (key == "latent-scale") {
            if (value == "exp-half-eps") cfg.run.latent_scale = LatentScale::ExpHalfEps;
            else if (value == "exp-eps") cfg.run.latent_scale = LatentScale::ExpEps;
            else raise("config line " + std::to_string(line_no) +
                       ": latent-scale expects exp-half-eps|exp-eps");
        }
        else if (key == "center-decay") cfg.run.center_decay = parse_float(value, key, line_no);
        else if (key == "use-encoder") cfg.run.use_encoder = parse_bool(value, key, line_no);
        else if (key == "ablate-img") cfg.run.ablation.img = !parse_bool(value, key, line_no);
        else if (key == "ablate-fd") cfg.run.ablation.fd = !parse_bool(value, key, line_no);
        else if (key == "ablate-fc") cfg.run.ablation.fc = !parse_bool(value, key, line_no);
        else if (key == "wgan-clamp") cfg.run.wgan_clamp = parse_float(value, key, line_no);
        else if (key == "dataset") {
            FMGAN_CHECK(value == "ring" || value == "synthetic" || value == "directory",
                        "config line " << line_no
                                       << ": dataset expects ring|synthetic|directory");
            cfg.data.kind = value;
        }
        else if (key == "ring-center-x") cfg.data.ring.cx = parse_float(value, key, line_no);
        else if (key == "ring-center-y") cfg.data.ring.cy = parse_float(value, key, line_no);
        else if (key == "ring-radius") cfg.data.ring.r = parse_float(value, key, line_no);
        else if (key == "ring-sigma") cfg.data.ring.sigma = parse_float(value, key, line_no);
        else if (key == "synthetic-per-class") cfg.data.synthetic_per_class = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "dataset-path") cfg.data.path = value;
        else if (key == "metrics-every") cfg.run.metrics_every = parse_int(value, key, line_no);
        else if (key == "checkpoint-every") cfg.run.checkpoint_every = parse_int(value, key, line_no);
        else if (key == "points-every") cfg.run.points_every = parse_int(value, key, line_no);
        else if (key == "eval-every") cfg.run.eval_every = parse_int(value, key, line_no);
        else if (key == "points-count") cfg.points_count = static_cast<int>(parse_int(value, key, line_no));
        else if (key == "log-walltime") cfg.log_walltime = parse_bool(value, key, line_no);
        else {
            raise("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    return parse(read_text_file(path));
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "# experiment\n";
    os << "name = " << name << "\n";
    os << "out = " << out_dir << "\n";
    os << "method = " << method_name(run.method) << "\n";
    os << "seed = " << run.seed << "\n";
    os << "iterations = " << run.max_iterations << "\n";
    os << "batch = " << run.batch << "\n";
    os << "\n# models\n";
    os << "scale = " << scale_name(model.scale) << "\n";
    os << "image-side = " << model.image_side << "\n";
    os << "image-channels = " << model.image_channels << "\n";
    os << "latent-dim = " << model.latent_dim << "\n";
    os << "classes = " << model.classes << "\n";
    os << "toy-hidden = " << fmt_int_list(model.toy_hidden) << "\n";
    os << "feature-width = " << model.feature_width << "\n";
    os << "gen-base-channels = " << model.gen_base_channels << "\n";
    os << "\n# optimization\n";
    os << "optimizer = " << opt_kind_name(run.opt.kind) << "\n";
    os << "learning-rate = " << fmt_float(run.opt.lr) << "\n";
    os << "rmsprop-rho = " << fmt_float(run.opt.rho) << "\n";
    os << "opt-eps = " << fmt_float(run.opt.eps) << "\n";
    os << "adam-beta1 = " << fmt_float(run.opt.beta1) << "\n";
    os << "adam-beta2 = " << fmt_float(run.opt.beta2) << "\n";
    os << "\n# objective\n";
    os << "lambda1 = " << fmt_float(run.weights.kl) << "\n";
    os << "lambda2 = " << fmt_float(run.weights.pairwise) << "\n";
    os << "lambda3 = " << fmt_float(run.weights.mean_d) << "\n";
    os << "lambda4 = " << fmt_float(run.weights.mean_c) << "\n";
    os << "latent-scale = "
       << (run.latent_scale == LatentScale::ExpHalfEps ? "exp-half-eps" : "exp-eps") << "\n";
    os << "center-decay = " << fmt_float(run.center_decay) << "\n";
    os << "use-encoder = " << (run.use_encoder ? "true" : "false") << "\n";
    os << "ablate-img = " << (run.ablation.img ? "false" : "true") << "\n";
    os << "ablate-fd = " << (run.ablation.fd ? "false" : "true") << "\n";
    os << "ablate-fc = " << (run.ablation.fc ? "false" : "true") << "\n";
    os << "wgan-clamp = " << fmt_float(run.wgan_clamp) << "\n";
    os << "\n# data\n";
    os << "dataset = " << data.kind << "\n";
    os << "ring-center-x = " << fmt_float(data.ring.cx) << "\n";
    os << "ring-center-y = " << fmt_float(data.ring.cy) << "\n";
    os << "ring-radius = " << fmt_float(data.ring.r) << "\n";
    os << "ring-sigma = " << fmt_float(data.ring.sigma) << "\n";
    os << "synthetic-per-class = " << data.synthetic_per_class << "\n";
    os << "dataset-path = " << data.path << "\n";
    os << "\n# cadence\n";
    os << "metrics-every = " << run.metrics_every << "\n";
    os << "checkpoint-every = " << run.checkpoint_every << "\n";
    os << "points-every = " << run.points_every << "\n";
    os << "eval-every = " << run.eval_every << "\n";
    os << "points-count = " << points_count << "\n";
    os << "log-walltime = " << (log_walltime ? "true" : "false") << "\n";
    return os.str();
}

std::string ExperimentConfig::digest() const {
    std::string s = serialize();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void ExperimentConfig::validate() const {
    FMGAN_CHECK(!name.empty(), "config: name must not be empty");
    FMGAN_CHECK(!out_dir.empty(), "config: out must not be empty");
    run.validate();
    model.validate();
    FMGAN_CHECK(points_count >= 1, "config: points-count must be >= 1");
    if (data.kind == "ring") {
        FMGAN_CHECK(model.scale == Scale::Toy2d, "config: the ring dataset requires scale = toy2d");
        FMGAN_CHECK(model.classes == 1, "config: the ring dataset is unconditional (classes = 1)");
        FMGAN_CHECK(data.ring.r > 0, "config: ring-radius must be positive");
        FMGAN_CHECK(data.ring.sigma >= 0, "config: ring-sigma must be >= 0");
    } else {
        FMGAN_CHECK(model.scale == Scale::Image,
                    "config: dataset '" << data.kind << "' requires scale = image");
        if (data.kind == "synthetic") {
            FMGAN_CHECK(data.synthetic_per_class >= 1,
                        "config: synthetic-per-class must be >= 1");
        } else if (data.kind == "directory") {
            FMGAN_CHECK(!data.path.empty(),
                        "config: dataset-path is required when dataset = directory");
        }
    }
}

std::shared_ptr<const Dataset> ExperimentConfig::make_dataset() const {
    if (data.kind == "ring") return std::make_shared<RingDataset>(data.ring);
    if (data.kind == "synthetic") {
        return make_synthetic_dataset(model.classes, data.synthetic_per_class, model.image_side,
                                      run.seed * 31 + 7);
    }
    if (data.kind == "directory") {
        auto ds = load_directory(data.path, data.path + "/manifest.tsv");
        FMGAN_CHECK(ds->classes() == model.classes,
                    "config: directory dataset has " << ds->classes() << " classes, config says "
                                                     << model.classes);
        return ds;
    }
    raise("config: unknown dataset kind '" + data.kind + "'");
}

bool config_equal(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.serialize() == b.serialize();
}

}  // namespace fmgan
