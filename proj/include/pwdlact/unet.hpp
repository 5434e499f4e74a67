#pragma once

#include <string>
#include <vector>

#include "pwdlact/nn.hpp"
#include "pwdlact/wtconv.hpp"

namespace pwdlact {

// Residual block: norm -> silu -> conv, add timestep features, norm -> silu ->
// conv (or wavelet conv), plus a skip path (1x1 when the width changes).
struct ResBlock {
    int cin = 0, cout = 0;
    bool use_wavelet = false;

    GroupNorm gn1, gn2;
    Conv2d conv1, conv2, skip;
    WTConv wt;
    Linear temb_proj;
    SiLU act1, act2;

    void init(int cin_, int cout_, int temb_dim, bool wavelet, std::mt19937_64& rng);
    Tensor forward(const Tensor& x, const Tensor& temb);
    // dtemb accumulates the gradient w.r.t. the shared embedding rows
    Tensor backward(const Tensor& dy, Tensor& dtemb);
    void params(std::vector<Param>& out, const std::string& prefix);
};

// Conditional denoiser: predicts the injected noise from the noisy image and
// the prior, concatenated along channels. Three resolution levels, one
// residual block each, widths base/base/2*base; wavelet convs sit in the
// second conv of every block when enabled.
struct DenoiserModel {
    int base = 32;
    int temb_dim = 64;
    int temb_hidden = 128;
    bool use_wavelet = true;

    Conv2d stem;
    Linear temb_fc1, temb_fc2;
    SiLU temb_act;
    ResBlock enc1, enc2, enc3, dec2, dec1;
    Conv2d down1, down2;
    Upsample2x up1, up2;
    GroupNorm out_gn;
    SiLU out_act;
    Conv2d out_conv;

    int n_cache = 0;

    void init(unsigned long long seed, bool wavelet, int base_width = 32);
    // x, prior: [N,1,H,W] with H and W divisible by 8; t: one timestep per sample
    Tensor forward(const Tensor& x, const Tensor& prior, const std::vector<float>& t);
    void backward(const Tensor& dy);
    void params(std::vector<Param>& out);
    size_t param_count();
};

}  // namespace pwdlact
