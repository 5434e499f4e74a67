#include "pwdlact/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "pwdlact/io.hpp"
#include "pwdlact/rng.hpp"

namespace pwdlact {

double NoiseSchedule::abar(int t) const {
    if (t < 0 || t > T) throw rejected_input("schedule: timestep out of range");
    return t == 0 ? 1.0 : alpha_bar[t - 1];
}

void NoiseSchedule::validate() const {
    if (T < 1 || static_cast<int>(beta.size()) != T || static_cast<int>(alpha.size()) != T ||
        static_cast<int>(alpha_bar.size()) != T)
        throw rejected_input("schedule: inconsistent sizes");
    double prev_ab = 1.0;
    for (int i = 0; i < T; ++i) {
        if (!(beta[i] > 0.0 && beta[i] < 1.0))
            throw rejected_input("schedule: beta outside (0, 1)");
        if (i > 0 && !(beta[i] > beta[i - 1]))
            throw rejected_input("schedule: beta must increase strictly");
        if (!(alpha_bar[i] < prev_ab))
            throw rejected_input("schedule: alpha_bar must decrease strictly");
        prev_ab = alpha_bar[i];
    }
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw rejected_input("make_schedule: T must be at least 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw rejected_input("make_schedule: need 0 < beta_min <= beta_max < 1");
    if (T >= 2 && !(beta_min < beta_max))
        throw rejected_input("make_schedule: beta_min must be below beta_max for T >= 2");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = T == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (T - 1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    s.validate();
    return s;
}

Image forward_diffuse(const Image& x0, int t, const Image& eps, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw rejected_input("forward_diffuse: timestep out of range");
    if (eps.h != x0.h || eps.w != x0.w)
        throw rejected_input("forward_diffuse: noise shape mismatch");
    const double c0 = std::sqrt(s.abar(t));
    const double c1 = std::sqrt(1.0 - s.abar(t));
    Image out = x0;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = static_cast<float>(c0 * x0.v[i] + c1 * eps.v[i]);
    return out;
}

NoisedBatch make_noised_batch(const std::vector<const PairedSample*>& batch,
                              const NoiseSchedule& s, uint64_t seed) {
    if (batch.empty()) throw rejected_input("make_noised_batch: empty batch");
    const int h = batch[0]->target.h, w = batch[0]->target.w;
    const int n = static_cast<int>(batch.size());
    NoisedBatch nb;
    nb.xt = Tensor({n, 1, h, w});
    nb.prior = Tensor({n, 1, h, w});
    nb.eps = Tensor({n, 1, h, w});
    nb.t.resize(n);

    auto rng = make_rng(mix_seed(seed, 0x64696666ULL));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        const PairedSample& ps = *batch[i];
        if (ps.target.h != h || ps.target.w != w || ps.prior.h != h || ps.prior.w != w)
            throw rejected_input("make_noised_batch: mixed sample shapes");
        const int t = 1 + static_cast<int>(rng() % static_cast<uint64_t>(s.T));
        nb.t[i] = static_cast<float>(t);
        Image noise(h, w);
        for (auto& z : noise.v) z = gauss(rng);
        Image xt = forward_diffuse(ps.target, t, noise, s);
        std::copy(xt.v.begin(), xt.v.end(), nb.xt.v.begin() + i * plane);
        std::copy(ps.prior.v.begin(), ps.prior.v.end(), nb.prior.v.begin() + i * plane);
        std::copy(noise.v.begin(), noise.v.end(), nb.eps.v.begin() + i * plane);
    }
    return nb;
}

DenoiseFn as_denoise_fn(DenoiserModel& model) {
    return [&model](const Tensor& xt, const Tensor& c, const std::vector<float>& t) {
        return model.forward(xt, c, t);
    };
}

double diffusion_loss(const DenoiseFn& model, const std::vector<const PairedSample*>& batch,
                      const NoiseSchedule& s, uint64_t seed) {
    NoisedBatch nb = make_noised_batch(batch, s, seed);
    Tensor pred = model(nb.xt, nb.prior, nb.t);
    if (!pred.same_shape(nb.eps)) throw rejected_input("diffusion_loss: prediction shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - nb.eps.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw rejected_input("train config: learning rate must be positive");
    if (batch_size < 1) throw rejected_input("train config: batch size must be positive");
    if (n_steps < 0) throw rejected_input("train config: step count must be nonnegative");
    if (checkpoint_every < 0) throw rejected_input("train config: checkpoint cadence must be nonnegative");
    make_schedule(T, beta_min, beta_max);  // validates T and the beta range
    if (base_width < 8 || base_width % 8 != 0)
        throw rejected_input("train config: base width must be a positive multiple of 8");
}

DenoiserModel make_model(const TrainConfig& cfg) {
    DenoiserModel m;
    m.init(mix_seed(cfg.seed, 0x696e6974ULL), cfg.use_wavelet, cfg.base_width);
    return m;
}

namespace {

constexpr const char* kCodeVersion = "pwd-lact-1";

std::map<std::string, std::string> read_meta(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("checkpoint: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        const size_t at = rest.find_first_not_of(" \t");
        kv[key] = at == std::string::npos ? std::string() : rest.substr(at);
    }
    return kv;
}

std::string meta_field(const std::map<std::string, std::string>& kv, const std::string& key,
                       const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw io_error("checkpoint: missing key '" + key + "' in " + path);
    return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, DenoiserModel& model, const TrainConfig& cfg) {
    std::vector<Param> ps;
    model.params(ps);
    std::vector<float> blob;
    blob.reserve(model.param_count());
    for (const auto& p : ps) blob.insert(blob.end(), p.w->v.begin(), p.w->v.end());
    write_f32(path, blob.data(), blob.size());

    const std::string meta_path = path + ".meta";
    std::ofstream f(meta_path);
    if (!f) throw io_error("checkpoint: cannot write " + meta_path);
    char buf[64];
    f << "type checkpoint\n";
    f << "version " << kCodeVersion << "\n";
    f << "n_params " << blob.size() << "\n";
    f << "base_width " << cfg.base_width << "\n";
    f << "use_wavelet " << (cfg.use_wavelet ? 1 : 0) << "\n";
    f << "T " << cfg.T << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.beta_min);
    f << "beta_min " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.beta_max);
    f << "beta_max " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.lr);
    f << "lr " << buf << "\n";
    f << "batch_size " << cfg.batch_size << "\n";
    f << "n_steps " << cfg.n_steps << "\n";
    f << "seed " << cfg.seed << "\n";
    f << "checkpoint_every " << cfg.checkpoint_every << "\n";
    if (!f) throw io_error("checkpoint: short write to " + meta_path);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string meta_path = path + ".meta";
    auto kv = read_meta(meta_path);
    if (meta_field(kv, "type", meta_path) != "checkpoint")
        throw io_error("checkpoint: wrong type tag in " + meta_path);

    Checkpoint out;
    try {
        out.cfg.base_width = std::stoi(meta_field(kv, "base_width", meta_path));
        out.cfg.use_wavelet = std::stoi(meta_field(kv, "use_wavelet", meta_path)) != 0;
        out.cfg.T = std::stoi(meta_field(kv, "T", meta_path));
        out.cfg.beta_min = std::stod(meta_field(kv, "beta_min", meta_path));
        out.cfg.beta_max = std::stod(meta_field(kv, "beta_max", meta_path));
        out.cfg.lr = std::stod(meta_field(kv, "lr", meta_path));
        out.cfg.batch_size = std::stoi(meta_field(kv, "batch_size", meta_path));
        out.cfg.n_steps = std::stoi(meta_field(kv, "n_steps", meta_path));
        out.cfg.seed = std::stoull(meta_field(kv, "seed", meta_path));
        out.cfg.checkpoint_every = std::stoi(meta_field(kv, "checkpoint_every", meta_path));
        out.cfg.validate();
    } catch (const rejected_input& e) {
        throw io_error("checkpoint: invalid metadata in " + meta_path + ": " + e.what());
    } catch (const std::logic_error&) {
        throw io_error("checkpoint: malformed number in " + meta_path);
    }

    out.model = make_model(out.cfg);
    out.schedule = make_schedule(out.cfg.T, out.cfg.beta_min, out.cfg.beta_max);

    std::vector<Param> ps;
    out.model.params(ps);
    const size_t expect = std::stoull(meta_field(kv, "n_params", meta_path));
    if (expect != out.model.param_count())
        throw io_error("checkpoint: parameter count mismatch in " + meta_path);
    std::vector<float> blob = read_f32(path, expect);
    size_t off = 0;
    for (auto& p : ps) {
        std::copy(blob.begin() + off, blob.begin() + off + p.w->size(), p.w->v.begin());
        off += p.w->size();
    }
    return out;
}

TrainResult train(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                  const std::string& out_dir, std::ostream* log) {
    cfg.validate();
    if (dataset.empty()) throw rejected_input("train: dataset is empty");
    const NoiseSchedule s = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    DenoiserModel model = make_model(cfg);
    std::vector<Param> ps;
    model.params(ps);
    Adam opt;
    opt.lr = static_cast<float>(cfg.lr);

    std::filesystem::create_directories(out_dir);
    auto batch_rng = make_rng(mix_seed(cfg.seed, 0x62617463ULL));

    TrainResult res;
    res.loss_history.reserve(cfg.n_steps);
    for (int step = 0; step < cfg.n_steps; ++step) {
        std::vector<const PairedSample*> batch(cfg.batch_size);
        for (auto& b : batch) b = &dataset[batch_rng() % dataset.size()];
        NoisedBatch nb = make_noised_batch(batch, s, mix_seed(cfg.seed, 0x10000000ULL + step));

        Tensor pred = model.forward(nb.xt, nb.prior, nb.t);
        double loss = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(pred.v[i]) - nb.eps.v[i];
            loss += d * d;
        }
        loss /= static_cast<double>(pred.size());
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        res.loss_history.push_back(loss);

        Tensor dy(pred.shape);
        const float inv = 2.0f / static_cast<float>(pred.size());
        for (size_t i = 0; i < pred.size(); ++i) dy.v[i] = inv * (pred.v[i] - nb.eps.v[i]);
        for (auto& p : ps) p.g->zero();
        model.backward(dy);
        opt.step(ps);

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
            step + 1 < cfg.n_steps) {
            char name[32];
            std::snprintf(name, sizeof name, "ckpt_%06d.bin", step + 1);
            save_checkpoint(out_dir + "/" + name, model, cfg);
        }
        if (log && (step % 25 == 0 || step + 1 == cfg.n_steps))
            (*log) << "train step " << step + 1 << "/" << cfg.n_steps << " loss " << loss << "\n";
    }

    res.checkpoint_path = out_dir + "/checkpoint.bin";
    save_checkpoint(res.checkpoint_path, model, cfg);
    return res;
}

}  // namespace pwdlact
