#pragma once

#include <random>
#include <vector>

#include "pwdlact/diffusion.hpp"

namespace pwdlact {

struct SampleConfig {
    int n_steps = 50;
    double guidance_weight = 0.05;
    uint64_t seed = 0;
    double eta = 0.0;  // 0 = deterministic

    bool operator==(const SampleConfig&) const = default;
    void validate() const;
};

/// Strictly decreasing timestep schedule t_K > ... > t_1 >= 1; the sampler
/// appends an implicit terminal hop to t = 0 where abar = 1.
struct Trajectory {
    std::vector<int> timesteps;
    void validate(int T) const;
};

/// n_steps timesteps uniformly spaced over (0, T], largest first.
Trajectory make_trajectory(int T, int n_steps);

/// x0* = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
Image predict_x0(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& s);

/// Convex pull toward the prior: (1 - w) x0_star + w c.
Image guide(const Image& x0_star, const Image& c, double w);

/// One guided DDIM hop t -> t_prev (t_prev = 0 emits the guided estimate
/// exactly). eta scales the stochastic term; rng is only consumed when the
/// resulting sigma is positive.
Image ddim_step(const Image& x_t, const Image& eps_hat, int t, int t_prev, const NoiseSchedule& s,
                const Image& c, double w, double eta, std::mt19937_64& rng);

/// Full reverse pass: seeded x_T ~ N(0, I), guided DDIM over a uniform
/// trajectory, final image clamped to [-1, 1]. Optional snapshots receive the
/// state after every hop.
Image sample(const DenoiseFn& model, const Image& c, const NoiseSchedule& s,
             const SampleConfig& cfg, std::vector<Image>* snapshots = nullptr);
Image sample(DenoiserModel& model, const Image& c, const NoiseSchedule& s,
             const SampleConfig& cfg, std::vector<Image>* snapshots = nullptr);

}  // namespace pwdlact
