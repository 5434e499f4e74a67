#pragma once

#include <random>
#include <vector>

#include "pwdlact/nn.hpp"
#include "pwdlact/tensor.hpp"

namespace pwdlact {

/// Weights of one wavelet-convolution block:
///   x1 = Conv(x);  s = dwt2(x);  y_i = DWConv3x3(s_i);  xt = idwt2(y);
///   out = Conv(x1 + xt)
struct WTConvParams {
    Tensor spatial_w;  // [C, C, k, k], k odd
    Tensor spatial_b;  // [C]
    Tensor sub_w;      // [4, C, 3, 3], one depthwise kernel per subband per channel
    Tensor sub_b;      // [4, C]
    Tensor fuse_w;     // [Co, C, kf, kf], kf odd
    Tensor fuse_b;     // [Co]

    void validate() const;
};

/// The functional form of the block; differentiable via the WTConv module.
Tensor wtconv_forward(const Tensor& x, const WTConvParams& p);

/// Trainable module form (caches activations, accumulates gradients).
struct WTConv {
    int c = 0;
    Conv2d spatial, fuse;
    DwConv3x3 sub[4];

    void init(int c_, int k, std::mt19937_64& rng);
    void load(const WTConvParams& p);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void params(std::vector<Param>& out, const std::string& prefix);
};

/// Analysis/synthesis over every (sample, channel) plane of an NCHW tensor.
void dwt2_batch(const Tensor& x, Tensor out[4]);
Tensor idwt2_batch(const Tensor in[4]);

}  // namespace pwdlact
