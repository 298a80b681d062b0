// Command line front end: training runs, sampling, morphing, inpainting,
// evaluation and dataset materialization. All outputs land under the
// directory given by --out (or the config's `out` key).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "fmgan/checkpoint.hpp"
#include "fmgan/config.hpp"
#include "fmgan/eval.hpp"
#include "fmgan/image_io.hpp"
#include "fmgan/procedures.hpp"

namespace fs = std::filesystem;
using namespace fmgan;

namespace {

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

constexpr const char* kMetricsHeader =
    "iteration,wall_ms,loss_D,loss_C,loss_KL,loss_G,loss_GD,loss_GC,extra_a,extra_b";

int run_train(const std::string& config_path, const std::optional<std::string>& out_override,
              const std::optional<uint64_t>& seed_override,
              const std::optional<int64_t>& iter_override, const std::string& resume_path) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::parse_file(config_path);
        if (out_override) cfg.out_dir = *out_override;
        if (seed_override) cfg.run.seed = *seed_override;
        if (iter_override) cfg.run.max_iterations = *iter_override;
        cfg.validate();
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    std::shared_ptr<const Dataset> dataset;
    try {
        dataset = cfg.make_dataset();
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    fs::create_directories(cfg.out_dir);
    const std::string config_text = cfg.serialize();
    write_text_file((fs::path(cfg.out_dir) / "config.resolved.toml").string(), config_text);

    Trainer trainer(cfg.run, cfg.model, dataset);
    bool resumed = false;
    if (!resume_path.empty()) {
        load_checkpoint_into(resume_path, trainer);
        resumed = true;
        std::cout << "resumed from " << resume_path << " at iteration " << trainer.iteration()
                  << "\n";
    }

    const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    std::unique_ptr<FileSink> metrics;
    std::string pending;
    if (resumed && fs::exists(metrics_path)) {
        pending = read_text_file(metrics_path);  // keep earlier rows on resume
    }
    metrics = std::make_unique<FileSink>(metrics_path);
    if (!pending.empty()) {
        // re-emit prior content minus its trailing newline
        if (pending.back() == '\n') pending.pop_back();
        metrics->write_line(pending);
    } else {
        metrics->write_line(kMetricsHeader);
    }

    std::unique_ptr<FileSink> eval_sink;
    auto eval_path = (fs::path(cfg.out_dir) / "eval.csv").string();

    auto start = std::chrono::steady_clock::now();
    Trainer::Sinks sinks;
    sinks.on_metrics = [&](const StepRecord& r) {
        int64_t wall = 0;
        if (cfg.log_walltime) {
            wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
        }
        std::ostringstream os;
        os << r.iteration << "," << wall << "," << csv_num(r.loss_d) << "," << csv_num(r.loss_c)
           << "," << csv_num(r.loss_kl) << "," << csv_num(r.loss_g) << "," << csv_num(r.loss_gd)
           << "," << csv_num(r.loss_gc) << "," << csv_num(r.extra_a) << "," << csv_num(r.extra_b);
        metrics->write_line(os.str());
    };
    sinks.on_points = [&](Trainer& t, int64_t iter) {
        if (cfg.model.scale != Scale::Toy2d) return;
        Rng prng(cfg.run.seed * 1000003ULL + static_cast<uint64_t>(iter));
        auto pts = generate_class_batch(t.generator(), 0, cfg.points_count, prng);
        auto name = "points_" + std::to_string(iter) + ".csv";
        write_points_csv((fs::path(cfg.out_dir) / name).string(), pts);
    };
    sinks.on_eval = [&](Trainer& t, int64_t iter) {
        if (cfg.model.scale == Scale::Toy2d && cfg.data.kind == "ring") {
            Rng prng(cfg.run.seed * 2000003ULL + static_cast<uint64_t>(iter));
            auto pts = generate_class_batch(t.generator(), 0, cfg.points_count, prng);
            auto cov = mode_coverage(pts, cfg.data.ring, 100);
            if (!eval_sink) {
                eval_sink = std::make_unique<FileSink>(eval_path);
                eval_sink->write_line("iteration,metric,value,samples");
            }
            std::ostringstream os;
            os << iter << ",mode_coverage," << csv_num(cov.coverage) << "," << cfg.points_count;
            eval_sink->write_line(os.str());
        } else if (cfg.model.scale == Scale::Image) {
            Rng prng(cfg.run.seed * 2000003ULL + static_cast<uint64_t>(iter));
            std::vector<Tensor> tiles;
            int show = std::min(10, cfg.model.classes);
            for (int c = 0; c < show; ++c) {
                auto batch = generate_class_batch(t.generator(), c, 8, prng);
                for (int64_t i = 0; i < 8; ++i) {
                    auto item = slice(batch, 0, i, 1);
                    Shape s(item.shape().begin() + 1, item.shape().end());
                    tiles.push_back(reshape(item, s));
                }
            }
            auto name = "samples_" + std::to_string(iter) + ".bmp";
            write_image_grid((fs::path(cfg.out_dir) / name).string(), tiles, 8);
        }
    };
    sinks.on_checkpoint = [&](Trainer& t, int64_t iter) {
        auto name = "checkpoint_" + std::to_string(iter) + ".fmck";
        save_checkpoint((fs::path(cfg.out_dir) / name).string(), t, config_text);
        save_checkpoint((fs::path(cfg.out_dir) / "checkpoint_latest.fmck").string(), t,
                        config_text);
    };

    trainer.run(cfg.run.max_iterations, sinks);
    save_checkpoint((fs::path(cfg.out_dir) / "checkpoint_final.fmck").string(), trainer,
                    config_text);
    metrics->close();
    if (eval_sink) eval_sink->close();
    std::cout << "trained " << method_name(cfg.run.method) << " to iteration "
              << trainer.iteration() << "; outputs in " << cfg.out_dir << "\n";
    return 0;
}

int run_generate(const std::string& ckpt, int cls, int64_t count, uint64_t seed,
                 const std::string& out_dir) {
    auto run = restore_run(ckpt);
    FMGAN_CHECK(cls >= 0 && cls < run.config.model.classes,
                "generate: class " << cls << " out of range [0, " << run.config.model.classes
                                   << ")");
    fs::create_directories(out_dir);
    if (count == 0) {
        if (run.config.model.scale == Scale::Toy2d) {
            FileSink sink((fs::path(out_dir) / "points.csv").string());
            sink.write_line("x,y");
            sink.close();
        }
        std::cout << "generated 0 samples\n";
        return 0;
    }
    Rng rng(seed);
    auto batch = generate_class_batch(run.trainer->generator(), cls, count, rng);
    if (run.config.model.scale == Scale::Toy2d) {
        write_points_csv((fs::path(out_dir) / "points.csv").string(), batch);
    } else {
        std::vector<Tensor> tiles;
        for (int64_t i = 0; i < count; ++i) {
            auto item = slice(batch, 0, i, 1);
            Shape s(item.shape().begin() + 1, item.shape().end());
            tiles.push_back(reshape(item, s));
        }
        int cols = static_cast<int>(std::min<int64_t>(count, 8));
        write_image_grid((fs::path(out_dir) / "grid.bmp").string(), tiles, cols);
        write_tensor_raw((fs::path(out_dir) / "samples.fmt").string(), batch);
    }
    std::cout << "generated " << count << " samples of class " << cls << " into " << out_dir
              << "\n";
    return 0;
}

int run_morph(const std::string& ckpt, const std::string& x1_path, const std::string& x2_path,
              int cls, int cls2, int steps, const std::string& out_dir) {
    auto run = restore_run(ckpt);
    FMGAN_CHECK(run.config.model.scale == Scale::Image,
                "morph: requires an image-scale checkpoint");
    FMGAN_CHECK(run.trainer->has_encoder(), "morph: this checkpoint has no encoder network");
    auto x1 = read_bmp(x1_path);
    auto x2 = read_bmp(x2_path);
    auto frames = morph_frames(run.trainer->encoder(), run.trainer->generator(), x1, cls, x2,
                               cls2 < 0 ? cls : cls2, steps);
    fs::create_directories(out_dir);
    for (size_t i = 0; i < frames.size(); ++i) {
        write_bmp((fs::path(out_dir) / ("frame_" + std::to_string(i) + ".bmp")).string(),
                  frames[i]);
    }
    write_image_grid((fs::path(out_dir) / "strip.bmp").string(), frames,
                     static_cast<int>(frames.size()));
    std::cout << "morphed " << steps << " frames into " << out_dir << "\n";
    return 0;
}

int run_inpaint(const std::string& ckpt, const std::string& image_path,
                const std::string& mask_path, std::optional<uint64_t> corrupt_seed, int cls,
                int iterations, const std::string& out_dir) {
    auto run = restore_run(ckpt);
    FMGAN_CHECK(run.config.model.scale == Scale::Image,
                "inpaint: requires an image-scale checkpoint");
    FMGAN_CHECK(run.trainer->has_encoder(), "inpaint: this checkpoint has no encoder network");
    auto img = read_bmp(image_path);
    fs::create_directories(out_dir);

    Tensor x, mask;
    if (corrupt_seed) {
        int64_t side = img.dim(1);
        int64_t patch = default_patch_side(side);
        PatchGeometry geom{(side - patch) / 2, (side - patch) / 2, patch, patch};
        auto [cx, m] = corrupt_patch(img, geom, *corrupt_seed);
        x = cx;
        mask = m;
        write_bmp((fs::path(out_dir) / "corrupted.bmp").string(), x);
        write_bmp((fs::path(out_dir) / "mask.bmp").string(), mask);
    } else {
        FMGAN_CHECK(!mask_path.empty(), "inpaint: either --mask or --corrupt-seed is required");
        auto mask_img = read_bmp(mask_path);
        // threshold the stored mask back to exact {0, 1}
        auto m = Tensor::zeros({1, mask_img.dim(1), mask_img.dim(2)});
        const float* src = mask_img.data();
        float* dst = m.data();
        for (int64_t i = 0; i < m.numel(); ++i) dst[i] = src[i] > 0.0f ? 1.0f : 0.0f;
        x = img;
        mask = m;
    }

    auto frames = inpaint_frames(run.trainer->encoder(), run.trainer->generator(), x, mask, cls,
                                 iterations);
    for (size_t i = 0; i < frames.size(); ++i) {
        auto stem = "iter_" + std::to_string(i + 1);
        write_bmp((fs::path(out_dir) / (stem + ".bmp")).string(), frames[i]);
        write_tensor_raw((fs::path(out_dir) / (stem + ".fmt")).string(), frames[i]);
    }
    std::cout << "inpainted " << iterations << " iterations into " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& ref_path, const std::string& metrics_csv,
             int64_t per_class, int64_t samples, uint64_t seed, const std::string& out_file) {
    FMGAN_CHECK(!metrics_csv.empty(), "eval: no metrics requested");
    auto run = restore_run(ckpt);
    auto ref = load_reference(ref_path);
    FMGAN_CHECK(ref.config().scale == run.config.model.scale &&
                    ref.config().image_side == run.config.model.image_side &&
                    ref.config().classes == run.config.model.classes,
                "eval: reference classifier scale/classes do not match the checkpoint");

    std::vector<std::string> metrics;
    {
        std::stringstream ss(metrics_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) metrics.push_back(item);
        }
    }
    FMGAN_CHECK(!metrics.empty(), "eval: no metrics requested");

    std::vector<EvalReport> reports;
    Rng rng(seed);
    for (const auto& metric : metrics) {
        EvalReport rep;
        rep.metric = metric;
        rep.config_digest = run.config.digest();
        rep.iteration = run.trainer->iteration();
        if (metric == "top1") {
            auto sampler = generator_sampler(run.trainer->generator(),
                                             run.config.model.latent_dim);
            rep.value = top1_discriminability(ref, sampler, per_class, rng);
            rep.samples = per_class * run.config.model.classes;
        } else if (metric == "realism") {
            auto sampler = generator_sampler(run.trainer->generator(),
                                             run.config.model.latent_dim);
            int k = run.config.model.classes;
            int64_t per = std::max<int64_t>(1, samples / k);
            std::vector<Tensor> parts;
            for (int c = 0; c < k; ++c) parts.push_back(sampler(c, per, rng));
            auto all = concat<float>(parts, 0);
            rep.value = realism_score(ref, all);
            rep.samples = all.dim(0);
        } else {
            raise("eval: unknown metric '" + metric + "' (expected top1|realism)");
        }
        reports.push_back(rep);
    }

    fs::create_directories(fs::path(out_file).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_file).parent_path());
    FileSink sink(out_file);
    sink.write_line("metric,value,samples,config_digest,iteration");
    for (const auto& r : reports) {
        std::ostringstream os;
        os << r.metric << "," << csv_num(r.value) << "," << r.samples << "," << r.config_digest
           << "," << r.iteration;
        sink.write_line(os.str());
        std::cout << r.metric << " = " << r.value << " (" << r.samples << " samples)\n";
    }
    sink.close();
    return 0;
}

int run_train_ref(int classes, int per_class, int side, int64_t steps, int64_t batch, float lr,
                  uint64_t seed, const std::string& out_file) {
    auto train = make_synthetic_dataset(classes, per_class, side, seed * 31 + 7);
    auto test = make_synthetic_dataset(classes, std::max(1, per_class / 5), side, seed * 31 + 8);
    ModelConfig cfg;
    cfg.scale = Scale::Image;
    cfg.image_side = side;
    cfg.classes = classes;
    auto ref = train_reference_classifier(*train, *test, cfg, steps, batch, lr, seed);
    auto parent = fs::path(out_file).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    save_reference(out_file, ref);
    std::cout << "reference classifier held-out accuracy " << ref.test_accuracy() << ", saved to "
              << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CVAE-GAN training laboratory"};
    app.require_subcommand(1);

    // train
    auto* t = app.add_subcommand("train", "Run a training experiment from a config file");
    std::string t_config, t_resume;
    std::string t_out;
    uint64_t t_seed = 0;
    int64_t t_iters = -1;
    bool t_seed_set = false;
    t->add_option("--config", t_config, "experiment config file")->required();
    t->add_option("--out", t_out, "override the output directory");
    t->add_option("--seed", t_seed, "override the seed")->each([&](const std::string&) {
        t_seed_set = true;
    });
    t->add_option("--iterations", t_iters, "override the iteration budget");
    t->add_option("--resume", t_resume, "checkpoint to resume from");

    // generate
    auto* g = app.add_subcommand("generate", "Sample a trained generator");
    std::string g_ckpt, g_out;
    int g_cls = 0;
    int64_t g_count = 64;
    uint64_t g_seed = 0;
    g->add_option("--checkpoint", g_ckpt)->required();
    g->add_option("--class", g_cls, "conditioning class");
    g->add_option("--count", g_count, "number of samples");
    g->add_option("--seed", g_seed);
    g->add_option("--out", g_out, "output directory")->required();

    // morph
    auto* mo = app.add_subcommand("morph", "Interpolate between two encoded images");
    std::string m_ckpt, m_x1, m_x2, m_out;
    int m_cls = 0, m_cls2 = -1, m_steps = 8;
    mo->add_option("--checkpoint", m_ckpt)->required();
    mo->add_option("--x1", m_x1, "first image (bmp)")->required();
    mo->add_option("--x2", m_x2, "second image (bmp)")->required();
    mo->add_option("--class", m_cls, "shared class of both images");
    mo->add_option("--class2", m_cls2, "class of the second image when it differs");
    mo->add_option("--steps", m_steps, "number of frames (>= 2)");
    mo->add_option("--out", m_out)->required();

    // inpaint
    auto* ip = app.add_subcommand("inpaint", "Iteratively restore a corrupted image");
    std::string i_ckpt, i_img, i_mask, i_out;
    int i_cls = 0, i_iters = 10;
    uint64_t i_corrupt_seed = 0;
    bool i_corrupt_set = false;
    ip->add_option("--checkpoint", i_ckpt)->required();
    ip->add_option("--image", i_img, "input image (bmp)")->required();
    ip->add_option("--mask", i_mask, "binary mask image (bmp)");
    ip->add_option("--corrupt-seed", i_corrupt_seed,
                   "corrupt the input with the default centered patch first")
        ->each([&](const std::string&) { i_corrupt_set = true; });
    ip->add_option("--class", i_cls);
    ip->add_option("--iterations", i_iters);
    ip->add_option("--out", i_out)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Score a generator with a frozen reference classifier");
    std::string e_ckpt, e_ref, e_metrics = "top1,realism", e_out;
    int64_t e_per_class = 100, e_samples = 1000;
    uint64_t e_seed = 0;
    ev->add_option("--checkpoint", e_ckpt)->required();
    ev->add_option("--ref", e_ref, "reference classifier file")->required();
    ev->add_option("--metrics", e_metrics, "comma list: top1,realism");
    ev->add_option("--per-class", e_per_class, "samples per class for top1");
    ev->add_option("--samples", e_samples, "total samples for realism");
    ev->add_option("--seed", e_seed);
    ev->add_option("--out", e_out, "report file")->required();

    // train-ref
    auto* tr = app.add_subcommand("train-ref", "Train and freeze a reference classifier");
    int r_classes = 10, r_per_class = 500, r_side = 32;
    int64_t r_steps = 1500, r_batch = 32;
    float r_lr = 2e-4f;
    uint64_t r_seed = 0;
    std::string r_out;
    tr->add_option("--classes", r_classes);
    tr->add_option("--per-class", r_per_class);
    tr->add_option("--side", r_side);
    tr->add_option("--steps", r_steps);
    tr->add_option("--batch", r_batch);
    tr->add_option("--lr", r_lr);
    tr->add_option("--seed", r_seed);
    tr->add_option("--out", r_out, "output file")->required();

    // make-dataset
    auto* md = app.add_subcommand("make-dataset", "Materialize the synthetic dataset to disk");
    std::string d_out;
    int d_classes = 10, d_per_class = 500, d_side = 32;
    uint64_t d_seed = 0;
    md->add_option("--out", d_out)->required();
    md->add_option("--classes", d_classes);
    md->add_option("--per-class", d_per_class);
    md->add_option("--side", d_side);
    md->add_option("--seed", d_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(t)) {
            return run_train(t_config, t_out.empty() ? std::nullopt : std::optional(t_out),
                             t_seed_set ? std::optional(t_seed) : std::nullopt,
                             t_iters >= 0 ? std::optional(t_iters) : std::nullopt, t_resume);
        }
        if (app.got_subcommand(g)) return run_generate(g_ckpt, g_cls, g_count, g_seed, g_out);
        if (app.got_subcommand(mo))
            return run_morph(m_ckpt, m_x1, m_x2, m_cls, m_cls2, m_steps, m_out);
        if (app.got_subcommand(ip))
            return run_inpaint(i_ckpt, i_img, i_mask,
                               i_corrupt_set ? std::optional(i_corrupt_seed) : std::nullopt, i_cls,
                               i_iters, i_out);
        if (app.got_subcommand(ev))
            return run_eval(e_ckpt, e_ref, e_metrics, e_per_class, e_samples, e_seed, e_out);
        if (app.got_subcommand(tr))
            return run_train_ref(r_classes, r_per_class, r_side, r_steps, r_batch, r_lr, r_seed,
                                 r_out);
        if (app.got_subcommand(md)) {
            materialize_synthetic(d_out, d_classes, d_per_class, d_side, d_seed);
            std::cout << "wrote " << d_classes * d_per_class << " images and manifest.tsv to "
                      << d_out << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
