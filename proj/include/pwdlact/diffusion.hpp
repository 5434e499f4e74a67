#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pwdlact/dataset.hpp"
#include "pwdlact/unet.hpp"

namespace pwdlact {

/// Linear-beta noise schedule; index t-1 holds timestep t, abar(0) = 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;

    double abar(int t) const;  // valid for 0 <= t <= T
    void validate() const;
    bool operator==(const NoiseSchedule&) const = default;
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, 1 <= t <= T.
Image forward_diffuse(const Image& x0, int t, const Image& eps, const NoiseSchedule& s);

/// Denoiser seam: predicted noise from (x_t, c, t). Tests inject oracles here.
using DenoiseFn =
    std::function<Tensor(const Tensor& xt, const Tensor& c, const std::vector<float>& t)>;

DenoiseFn as_denoise_fn(DenoiserModel& model);

/// Materialized training micro-batch; reproducible from (samples, schedule, seed).
struct NoisedBatch {
    Tensor xt, prior, eps;  // [N,1,H,W]
    std::vector<float> t;
};
NoisedBatch make_noised_batch(const std::vector<const PairedSample*>& batch,
                              const NoiseSchedule& s, uint64_t seed);

/// Mean squared error between predicted and drawn noise; per-sample t uniform
/// in [1,T], eps standard normal, both derived from seed.
double diffusion_loss(const DenoiseFn& model, const std::vector<const PairedSample*>& batch,
                      const NoiseSchedule& s, uint64_t seed);

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 4;
    int n_steps = 1500;
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    uint64_t seed = 0;
    int checkpoint_every = 500;
    bool use_wavelet = true;
    int base_width = 32;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Seeded architecture + parameter initialization for this config.
DenoiserModel make_model(const TrainConfig& cfg);

// Checkpoint layout: raw little-endian f32 parameter blob at `path` in
// params() order, text sidecar at `path + ".meta"` holding schedule, config,
// and code version.
void save_checkpoint(const std::string& path, DenoiserModel& model, const TrainConfig& cfg);

struct Checkpoint {
    DenoiserModel model;
    NoiseSchedule schedule;
    TrainConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
    std::vector<double> loss_history;
    std::string checkpoint_path;  // final checkpoint written under out_dir
};

/// Adam on the noise-prediction objective; batches and noise draws are fully
/// seed-determined. Writes ckpt_<step>.bin at the configured cadence and
/// checkpoint.bin at the end (with zero steps that equals the initialization).
/// Aborts with a diagnostic naming the step if the loss goes non-finite.
TrainResult train(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                  const std::string& out_dir, std::ostream* log = nullptr);

}  // namespace pwdlact
