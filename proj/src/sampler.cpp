#include "pwdlact/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "pwdlact/rng.hpp"

namespace pwdlact {

void SampleConfig::validate() const {
    if (n_steps < 1) throw rejected_input("sample config: need at least one step");
    if (!(guidance_weight >= 0.0 && guidance_weight <= 1.0))
        throw rejected_input("sample config: guidance weight outside [0, 1]");
    if (!(eta >= 0.0)) throw rejected_input("sample config: eta must be nonnegative");
}

void Trajectory::validate(int T) const {
    if (timesteps.empty()) throw rejected_input("trajectory: empty schedule");
    int prev = T + 1;
    for (int t : timesteps) {
        if (t < 1 || t > T) throw rejected_input("trajectory: timestep outside 1..T");
        if (t >= prev) throw rejected_input("trajectory: timesteps must decrease strictly");
        prev = t;
    }
}

Trajectory make_trajectory(int T, int n_steps) {
    if (T < 1 || n_steps < 1 || n_steps > T)
        throw rejected_input("trajectory: need 1 <= n_steps <= T");
    Trajectory tr;
    tr.timesteps.resize(n_steps);
    for (int i = 0; i < n_steps; ++i)
        tr.timesteps[i] = static_cast<int>(
            std::llround(static_cast<double>(T) * (n_steps - i) / n_steps));
    tr.validate(T);
    return tr;
}

Image predict_x0(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw rejected_input("predict_x0: timestep out of range");
    if (eps_hat.h != x_t.h || eps_hat.w != x_t.w)
        throw rejected_input("predict_x0: noise shape mismatch");
    const double root_ab = std::sqrt(s.abar(t));
    const double root_1m = std::sqrt(1.0 - s.abar(t));
    Image out = x_t;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = static_cast<float>((x_t.v[i] - root_1m * eps_hat.v[i]) / root_ab);
    return out;
}

Image guide(const Image& x0_star, const Image& c, double w) {
    if (c.h != x0_star.h || c.w != x0_star.w) throw rejected_input("guide: shape mismatch");
    if (!(w >= 0.0 && w <= 1.0)) throw rejected_input("guide: weight outside [0, 1]");
    Image out = x0_star;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = static_cast<float>((1.0 - w) * x0_star.v[i] + w * c.v[i]);
    return out;
}

Image ddim_step(const Image& x_t, const Image& eps_hat, int t, int t_prev, const NoiseSchedule& s,
                const Image& c, double w, double eta, std::mt19937_64& rng) {
    if (t_prev < 0 || t_prev >= t) throw rejected_input("ddim_step: timesteps must decrease");
    if (!(eta >= 0.0)) throw rejected_input("ddim_step: eta must be nonnegative");
    const Image x_g = guide(predict_x0(x_t, eps_hat, t, s), c, w);

    const double ab_t = s.abar(t);
    const double ab_p = s.abar(t_prev);
    const double sigma =
        eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
    const double root_ab_p = std::sqrt(ab_p);

    Image out = x_g;
    if (sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = static_cast<float>(root_ab_p * x_g.v[i] + dir * eps_hat.v[i] +
                                          sigma * gauss(rng));
    } else {
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = static_cast<float>(root_ab_p * x_g.v[i] + dir * eps_hat.v[i]);
    }
    return out;
}

namespace {

Tensor image_tensor(const Image& img) {
    Tensor t({1, 1, img.h, img.w});
    std::copy(img.v.begin(), img.v.end(), t.v.begin());
    return t;
}

}  // namespace

Image sample(const DenoiseFn& model, const Image& c, const NoiseSchedule& s,
             const SampleConfig& cfg, std::vector<Image>* snapshots) {
    cfg.validate();
    s.validate();
    if (cfg.n_steps > s.T)
        throw rejected_input("sample: schedule has fewer timesteps than requested steps");

    const Trajectory tr = make_trajectory(s.T, cfg.n_steps);
    auto rng = make_rng(mix_seed(cfg.seed, 0x73616d70ULL));
    std::normal_distribution<float> gauss(0.0f, 1.0f);

    Image x(c.h, c.w);
    for (auto& v : x.v) v = gauss(rng);

    const Tensor c_t = image_tensor(c);
    for (size_t k = 0; k < tr.timesteps.size(); ++k) {
        const int t = tr.timesteps[k];
        const int t_prev = k + 1 < tr.timesteps.size() ? tr.timesteps[k + 1] : 0;
        Tensor pred = model(image_tensor(x), c_t, {static_cast<float>(t)});
        if (pred.size() != x.v.size())
            throw rejected_input("sample: model output does not match the image shape");
        Image eps_hat(c.h, c.w);
        std::copy(pred.v.begin(), pred.v.end(), eps_hat.v.begin());
        x = ddim_step(x, eps_hat, t, t_prev, s, c, cfg.guidance_weight, cfg.eta, rng);
        if (snapshots) snapshots->push_back(x);
    }

    for (auto& v : x.v) v = std::clamp(v, -1.0f, 1.0f);
    x.value_min = -1.0f;
    x.value_max = 1.0f;
    return x;
}

Image sample(DenoiserModel& model, const Image& c, const NoiseSchedule& s,
             const SampleConfig& cfg, std::vector<Image>* snapshots) {
    return sample(as_denoise_fn(model), c, s, cfg, snapshots);
}

}  // namespace pwdlact
