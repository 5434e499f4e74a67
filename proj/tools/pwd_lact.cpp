#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "pwdlact/dataset.hpp"
#include "pwdlact/diffusion.hpp"
#include "pwdlact/eval.hpp"
#include "pwdlact/io.hpp"
#include "pwdlact/nn.hpp"
#include "pwdlact/runconfig.hpp"
#include "pwdlact/sampler.hpp"
#include "pwdlact/tomo.hpp"

namespace fs = std::filesystem;
using namespace pwdlact;

namespace {

constexpr const char* kVersion = "pwd-lact 1.0.0";

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

RunConfig config_or_default(const std::string& path) {
    if (path.empty()) {
        std::istringstream empty;
        return parse_config_stream(empty, "<defaults>");
    }
    return parse_config(path);
}

int effective_threads(const RunConfig& cfg) {
    int t = cfg.threads;
    if (const char* env = std::getenv("PWD_LACT_THREADS")) {
        try {
            t = std::min(t, std::max(1, std::stoi(env)));
        } catch (const std::logic_error&) {
            throw rejected_input(std::string("PWD_LACT_THREADS is not an integer: ") + env);
        }
    }
    return t;
}

std::string train_dir(const RunConfig& cfg) {
    return cfg.out_dir + (cfg.train.use_wavelet ? "/train_wt" : "/train_plain");
}

// One text manifest per command: enough to rerun the command and identify the
// artifacts it produced. The resolved config is embedded verbatim.
void write_manifest(const RunConfig& cfg, const std::string& command, double seconds,
                    const std::vector<std::string>& artifacts) {
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream f(cfg.out_dir + "/config_echo.ini");
        echo_config(cfg, f);
    }
    std::ofstream f(cfg.out_dir + "/" + command + "_manifest.txt");
    f << "command " << command << "\n";
    f << "version " << kVersion << "\n";
    f << "seed " << cfg.seed << "\n";
    f << "train_seed " << cfg.train.seed << "\n";
    f << "sample_seed " << cfg.sample.seed << "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", seconds);
    f << "wall_seconds " << buf << "\n";
    f << "config_echo config_echo.ini\n";
    for (const auto& a : artifacts) f << "artifact " << a << "\n";
    f << "config_begin\n";
    echo_config(cfg, f);
    f << "config_end\n";
}

std::string fmt_deg(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

std::string range_label(double lo, double hi) { return fmt_deg(lo) + "-" + fmt_deg(hi); }

// largest eigenvalue of the masked normal operator, for TV step sizing
double masked_lipschitz(const Geometry& g, const AngularMask& m) {
    Image v(g.image_size, g.image_size, 1.0f);
    apply_fov(v);
    double lam = 1.0;
    for (int it = 0; it < 12; ++it) {
        Image w = backproject(apply_mask(radon(v, g), m));
        apply_fov(w);
        double nw = 0.0, nv = 0.0;
        for (float x : w.v) nw += static_cast<double>(x) * x;
        for (float x : v.v) nv += static_cast<double>(x) * x;
        nw = std::sqrt(nw);
        nv = std::sqrt(nv);
        lam = nw / std::max(nv, 1e-30);
        for (auto& x : w.v) x = static_cast<float>(x / nw);
        v = std::move(w);
    }
    return lam;
}

int cmd_dataset(const RunConfig& cfg) {
    const double t0 = now_seconds();
    DatasetBuildOptions opt;
    opt.n_train = cfg.n_train;
    opt.n_test = cfg.n_test;
    opt.image_size = cfg.image_size;
    opt.n_angles = cfg.n_angles;
    opt.angle_ranges = cfg.parsed_angle_ranges();
    opt.noise_sigma = cfg.noise_sigma;
    opt.seed = cfg.seed;
    opt.kinds = cfg.kinds;
    const std::string dir = cfg.out_dir + "/dataset";
    build_dataset(opt, dir, std::cout);
    write_manifest(cfg, "dataset", now_seconds() - t0, {dir + "/train", dir + "/test"});
    std::cout << "dataset written to " << dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const double t0 = now_seconds();
    const std::string data_dir = cfg.out_dir + "/dataset/train";
    std::vector<PairedSample> ds = load_dataset(data_dir);
    const std::string dir = train_dir(cfg);
    fs::create_directories(dir);
    TrainResult res = train(ds, cfg.train, dir, &std::cout);
    {
        std::ofstream f(dir + "/loss.tsv");
        f << "step\tloss\n";
        for (size_t i = 0; i < res.loss_history.size(); ++i) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", res.loss_history[i]);
            f << (i + 1) << '\t' << buf << '\n';
        }
    }
    write_manifest(cfg, "train", now_seconds() - t0, {res.checkpoint_path, dir + "/loss.tsv"});
    std::cout << "checkpoint written to " << res.checkpoint_path << "\n";
    return 0;
}

struct ReconFlags {
    std::string checkpoint;
    std::string prior;
    std::string out;
};

int cmd_reconstruct(RunConfig cfg, const ReconFlags& fl) {
    const double t0 = now_seconds();
    cfg.sample.validate();
    Checkpoint ck = load_checkpoint(fl.checkpoint);
    Image prior = load_image(fl.prior);
    const double s0 = now_seconds();
    Image recon = sample(ck.model, prior, ck.schedule, cfg.sample);
    const double sampling = now_seconds() - s0;
    if (!fl.out.empty() && fl.out.find('/') != std::string::npos)
        fs::create_directories(fs::path(fl.out).parent_path());
    save_image(fl.out, recon);
    {
        std::ofstream f(fl.out + ".report.txt");
        f << "checkpoint " << fl.checkpoint << "\n";
        f << "prior " << fl.prior << "\n";
        f << "steps " << cfg.sample.n_steps << "\n";
        f << "guidance_weight " << cfg.sample.guidance_weight << "\n";
        f << "eta " << cfg.sample.eta << "\n";
        f << "seed " << cfg.sample.seed << "\n";
        f << "timesteps " << ck.schedule.T << "\n";
        f << "wtconv " << (ck.cfg.use_wavelet ? "on" : "off") << "\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", sampling);
        f << "sampling_seconds " << buf << "\n";
    }
    write_manifest(cfg, "reconstruct", now_seconds() - t0, {fl.out, fl.out + ".report.txt"});
    std::cout << "reconstruction written to " << fl.out << "\n";
    return 0;
}

// Reconstructs the test split with the guided sampler plus the two classical
// baselines and reports FOV metrics per angle range. The summary table holds
// no wall-clock columns, so reruns with one config+seed are byte-identical.
int cmd_evaluate(const RunConfig& cfg, std::string checkpoint) {
    const double t0 = now_seconds();
    if (checkpoint.empty()) checkpoint = train_dir(cfg) + "/checkpoint.bin";
    Checkpoint ck = load_checkpoint(checkpoint);
    std::vector<PairedSample> test = load_dataset(cfg.out_dir + "/dataset/test");
    if (cfg.eval_max_images > 0 && static_cast<int>(test.size()) > cfg.eval_max_images)
        test.resize(cfg.eval_max_images);
    if (test.empty()) throw rejected_input("evaluate: test set is empty");

    const std::string dir = cfg.out_dir + "/eval";
    fs::create_directories(dir);

    // first-seen order of the angle ranges
    std::vector<std::pair<double, double>> ranges;
    for (const auto& s : test) {
        const std::pair<double, double> r{s.angle_lo, s.angle_hi};
        if (std::find(ranges.begin(), ranges.end(), r) == ranges.end()) ranges.push_back(r);
    }

    std::map<std::pair<double, double>, double> lam_cache;
    std::vector<std::string> artifacts;
    std::vector<std::string> summary_rows;

    for (const auto& r : ranges) {
        const std::string rl = range_label(r.first, r.second);
        std::vector<const PairedSample*> group;
        for (const auto& s : test)
            if (s.angle_lo == r.first && s.angle_hi == r.second) group.push_back(&s);
        std::vector<Image> refs;
        refs.reserve(group.size());
        for (const auto* s : group) refs.push_back(s->target);
        std::cout << "range " << rl << ": " << group.size() << " image(s)\n";

        struct Method {
            std::string name;
            std::vector<Image> recons;
            std::vector<double> seconds;
        };
        std::vector<Method> methods(3);
        methods[0].name = "fbp";
        methods[1].name = "tv";
        methods[2].name = "pwd";

        for (size_t i = 0; i < group.size(); ++i) {
            const PairedSample& s = *group[i];
            methods[0].recons.push_back(s.prior);
            methods[0].seconds.push_back(0.0);

            const AngularMask mask = make_mask(s.sinogram.geom, s.angle_lo, s.angle_hi);
            auto it = lam_cache.find(r);
            if (it == lam_cache.end())
                it = lam_cache.emplace(r, masked_lipschitz(s.sinogram.geom, mask)).first;
            Image warm = s.prior;
            denormalize(warm, s.norm);
            TvReconOptions topt;
            topt.lambda = cfg.tv_lambda;
            topt.n_iters = cfg.tv_iters;
            topt.step = 0.9 / it->second;
            topt.init = &warm;
            double m0 = now_seconds();
            TvReconResult tv = tv_recon(apply_mask(s.sinogram, mask), mask, topt);
            normalize(tv.image, s.norm);
            methods[1].recons.push_back(std::move(tv.image));
            methods[1].seconds.push_back(now_seconds() - m0);

            SampleConfig sc = cfg.sample;
            sc.seed = cfg.sample.seed + i;
            m0 = now_seconds();
            methods[2].recons.push_back(sample(ck.model, s.prior, ck.schedule, sc));
            methods[2].seconds.push_back(now_seconds() - m0);
            if ((i + 1) % 8 == 0)
                std::cout << "  reconstructed " << (i + 1) << "/" << group.size() << "\n";
        }

        for (const auto& m : methods) {
            std::vector<Image> residuals;
            ReconReport rep = evaluate(m.recons, refs, m.name + "@" + rl, &m.seconds,
                                       cfg.save_residuals ? &residuals : nullptr);
            rep.config = "steps=" + std::to_string(cfg.sample.n_steps) +
                         " w=" + fmt_deg(cfg.sample.guidance_weight) +
                         " tv_iters=" + std::to_string(cfg.tv_iters);
            const std::string path = dir + "/report_" + m.name + "_" + rl + ".tsv";
            save_report(path, rep);
            artifacts.push_back(path);
            for (size_t i = 0; i < residuals.size(); ++i) {
                const std::string rp =
                    dir + "/residual_" + m.name + "_" + rl + "_" + std::to_string(i) + ".bin";
                save_image(rp, residuals[i]);
            }
            char row[256];
            std::snprintf(row, sizeof row, "%s\t%s\t%zu\t%.17g\t%.17g\t%.17g\t%.17g",
                          m.name.c_str(), rl.c_str(), m.recons.size(), rep.mean_psnr,
                          rep.std_psnr, rep.mean_ssim, rep.std_ssim);
            summary_rows.emplace_back(row);
            std::printf("  %-4s %-8s psnr %.3f  ssim %.4f\n", m.name.c_str(), rl.c_str(),
                        rep.mean_psnr, rep.mean_ssim);
        }
    }

    const std::string summary = dir + "/metrics_summary.tsv";
    {
        std::ofstream f(summary);
        f << "method\tangles\tn\tmean_psnr\tstd_psnr\tmean_ssim\tstd_ssim\n";
        for (const auto& row : summary_rows) f << row << '\n';
    }
    artifacts.push_back(summary);
    write_manifest(cfg, "evaluate", now_seconds() - t0, artifacts);
    std::cout << "metrics summary written to " << summary << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, std::string checkpoint, std::string checkpoint_off) {
    const double t0 = now_seconds();
    if (checkpoint.empty()) checkpoint = cfg.out_dir + "/train_wt/checkpoint.bin";
    if (checkpoint_off.empty()) checkpoint_off = cfg.out_dir + "/train_plain/checkpoint.bin";

    AblateContext ctx;
    ctx.checkpoint = checkpoint;
    ctx.checkpoint_off = checkpoint_off;
    ctx.test_set = load_dataset(cfg.out_dir + "/dataset/test");
    ctx.base = cfg.sample;
    ctx.max_images = cfg.ablate_max_images;
    ctx.out_dir = cfg.out_dir + "/ablate";
    fs::create_directories(ctx.out_dir);

    std::vector<std::string> artifacts;
    for (const std::string& kind_name : cfg.parsed_ablate_kinds()) {
        AblationKind kind;
        std::vector<double> grid;
        if (kind_name == "guidance-weight") {
            kind = AblationKind::guidance_weight;
            grid = cfg.parsed_guidance_grid();
        } else if (kind_name == "step-count") {
            kind = AblationKind::step_count;
            grid = cfg.parsed_step_grid();
        } else if (kind_name == "wtconv") {
            kind = AblationKind::wtconv;
            grid = {0.0, 1.0};
        } else {
            throw rejected_input("ablate: unknown kind '" + kind_name + "'");
        }
        ablate(kind, grid, ctx, &std::cout);
        artifacts.push_back(ctx.out_dir + "/ablate_" + ablation_name(kind) + ".tsv");
        artifacts.push_back(ctx.out_dir + "/ablate_" + ablation_name(kind) + ".svg");
    }
    write_manifest(cfg, "ablate", now_seconds() - t0, artifacts);
    std::cout << "ablation tables written to " << ctx.out_dir << "\n";
    return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
    const double t0 = now_seconds();
    std::cout << "== stage 1/4: dataset ==\n";
    if (int rc = cmd_dataset(cfg)) return rc;
    std::cout << "== stage 2/4: train ==\n";
    if (int rc = cmd_train(cfg)) return rc;

    std::cout << "== stage 3/4: demo reconstruction ==\n";
    std::vector<PairedSample> test = load_dataset(cfg.out_dir + "/dataset/test");
    if (test.empty()) throw rejected_input("pipeline: test set is empty");
    const std::string prior_path = cfg.out_dir + "/demo_prior.bin";
    save_image(prior_path, test[0].prior);
    save_image(cfg.out_dir + "/demo_target.bin", test[0].target);
    ReconFlags fl;
    fl.checkpoint = train_dir(cfg) + "/checkpoint.bin";
    fl.prior = prior_path;
    fl.out = cfg.out_dir + "/demo_recon.bin";
    if (int rc = cmd_reconstruct(cfg, fl)) return rc;

    std::cout << "== stage 4/4: evaluate ==\n";
    if (int rc = cmd_evaluate(cfg, "")) return rc;
    write_manifest(cfg, "pipeline", now_seconds() - t0,
                   {cfg.out_dir + "/demo_recon.bin", cfg.out_dir + "/eval/metrics_summary.tsv"});
    std::cout << "pipeline finished\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prior-guided wavelet-enhanced diffusion for limited-angle CT"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, wtconv_flag, checkpoint, checkpoint_off;
    ReconFlags recon;
    bool has_steps = false, has_w = false, has_seed = false, has_eta = false;
    int f_steps = 0;
    double f_w = 0.0, f_eta = 0.0;
    uint64_t f_seed = 0;

    auto add_config = [&](CLI::App* sc) {
        sc->add_option("--config", config_path, "INI run configuration (defaults when absent)");
    };

    CLI::App* sc_dataset = app.add_subcommand("dataset", "generate the phantom dataset");
    add_config(sc_dataset);

    CLI::App* sc_train = app.add_subcommand("train", "train the denoiser");
    add_config(sc_train);
    sc_train->add_option("--wtconv", wtconv_flag, "override [train] wtconv (on|off)");

    CLI::App* sc_recon = app.add_subcommand("reconstruct", "reconstruct one prior image");
    add_config(sc_recon);
    sc_recon->add_option("--checkpoint", recon.checkpoint, "trained checkpoint")->required();
    sc_recon->add_option("--prior", recon.prior, "prior image file")->required();
    sc_recon->add_option("--out", recon.out, "output image file")->required();
    sc_recon->add_option("--steps", f_steps, "sampling steps")->each([&](const std::string&) {
        has_steps = true;
    });
    sc_recon->add_option("--w", f_w, "guidance weight in [0, 1]")->each([&](const std::string&) {
        has_w = true;
    });
    sc_recon->add_option("--seed", f_seed, "sampling seed")->each([&](const std::string&) {
        has_seed = true;
    });
    sc_recon->add_option("--eta", f_eta, "stochasticity knob")->each([&](const std::string&) {
        has_eta = true;
    });

    CLI::App* sc_eval = app.add_subcommand("evaluate", "metrics on the test split");
    add_config(sc_eval);
    sc_eval->add_option("--checkpoint", checkpoint, "checkpoint (default from config)");

    CLI::App* sc_ablate = app.add_subcommand("ablate", "parameter sweeps on the test split");
    add_config(sc_ablate);
    sc_ablate->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/train_wt)");
    sc_ablate->add_option("--checkpoint-off", checkpoint_off,
                          "wavelet-free twin (default <out>/train_plain)");

    CLI::App* sc_pipe = app.add_subcommand("pipeline", "dataset, train, reconstruct, evaluate");
    add_config(sc_pipe);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_or_default(config_path);
        set_blas_threads(effective_threads(cfg));

        if (sc_train->parsed() && !wtconv_flag.empty()) {
            if (wtconv_flag != "on" && wtconv_flag != "off")
                throw rejected_input("--wtconv expects on or off, got '" + wtconv_flag + "'");
            cfg.train.use_wavelet = wtconv_flag == "on";
        }
        if (sc_recon->parsed()) {
            if (has_steps) cfg.sample.n_steps = f_steps;
            if (has_w) cfg.sample.guidance_weight = f_w;
            if (has_seed) cfg.sample.seed = f_seed;
            if (has_eta) cfg.sample.eta = f_eta;
        }

        if (sc_dataset->parsed()) return cmd_dataset(cfg);
        if (sc_train->parsed()) return cmd_train(cfg);
        if (sc_recon->parsed()) return cmd_reconstruct(cfg, recon);
        if (sc_eval->parsed()) return cmd_evaluate(cfg, checkpoint);
        if (sc_ablate->parsed()) return cmd_ablate(cfg, checkpoint, checkpoint_off);
        if (sc_pipe->parsed()) return cmd_pipeline(cfg);
    } catch (const std::exception& e) {
        std::cerr << "pwd-lact: error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "pwd-lact: no command\n";
    return 1;
}
