#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pwdlact/tensor.hpp"

namespace pwdlact {

/// Pins the BLAS backend to a fixed thread count (results must be bitwise
/// reproducible; reductions change with threading). Call before any GEMM.
void set_blas_threads(int n);

// All modules follow one contract: forward(x) caches what backward needs;
// backward(dy) accumulates parameter gradients (+=) and returns dx.
// Shapes are NCHW. Gradients are never cleared implicitly.

struct Conv2d {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    Tensor w, b, gw, gb;
    Tensor x_cache;

    void init(int cin_, int cout_, int k_, int stride_, int pad_, std::mt19937_64& rng,
              bool zero_init = false);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void params(std::vector<Param>& out, const std::string& prefix);
    int out_hw(int hw) const { return (hw + 2 * pad - k) / stride + 1; }
};

/// Depthwise 3x3 convolution with reflect padding (shape preserving).
struct DwConv3x3 {
    int c = 0;
    Tensor w, b, gw, gb;  // w: [C,3,3], b: [C]
    Tensor x_cache;

    void init(int c_, std::mt19937_64& rng, bool delta_init = false);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void params(std::vector<Param>& out, const std::string& prefix);
};

struct GroupNorm {
    int c = 0, groups = 8;
    float eps = 1e-5f;
    Tensor gamma, beta, ggamma, gbeta;
    Tensor xhat_cache;
    std::vector<float> rstd_cache;  // per (n, group)

    void init(int c_, int groups_);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void params(std::vector<Param>& out, const std::string& prefix);
};

struct SiLU {
    Tensor x_cache;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

/// y = x W^T + b on [N, Din] -> [N, Dout].
struct Linear {
    int din = 0, dout = 0;
    Tensor w, b, gw, gb;
    Tensor x_cache;

    void init(int din_, int dout_, std::mt19937_64& rng, bool zero_init = false);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void params(std::vector<Param>& out, const std::string& prefix);
};

/// Nearest-neighbour 2x upsampling.
struct Upsample2x {
    std::vector<int> in_shape;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

/// Sinusoidal timestep features of width dim (sin half then cos half).
Tensor timestep_embedding(const std::vector<float>& t, int dim);

struct Adam {
    float lr = 1e-4f, beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    int64_t t = 0;
    std::vector<Tensor> m, v;

    void step(const std::vector<Param>& params);
    void zero_grads(const std::vector<Param>& params);
};

// elementwise helpers used across the network code
void add_inplace(Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db);

}  // namespace pwdlact
