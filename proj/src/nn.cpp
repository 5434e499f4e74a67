#include "pwdlact/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pwdlact {

void set_blas_threads(int n) { openblas_set_num_threads(n); }

namespace {

struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
} blas_init;

void check_nchw(const Tensor& x, const char* who) {
    if (x.shape.size() != 4) throw rejected_input(std::string(who) + ": expected NCHW input");
}

float normal_sample(std::mt19937_64& rng, float stddev) {
    std::normal_distribution<float> d(0.0f, stddev);
    return d(rng);
}

// out[m x n] = a[m x k] * b[k x n] (+ out if acc)
void gemm(bool ta, bool tb, int m, int n, int k, const float* a, const float* b, float* out,
          bool acc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, 1.0f, a, ta ? m : k, b, tb ? k : n, acc ? 1.0f : 0.0f, out, n);
}

}  // namespace

void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw rejected_input("add: shape mismatch");
    for (size_t i = 0; i < a.size(); ++i) a.v[i] += b.v[i];
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_nchw(a, "concat");
    check_nchw(b, "concat");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw rejected_input("concat: incompatible shapes");
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::memcpy(out.data() + static_cast<size_t>(i) * (ca + cb) * hw,
                    a.data() + static_cast<size_t>(i) * ca * hw, sizeof(float) * ca * hw);
        std::memcpy(out.data() + (static_cast<size_t>(i) * (ca + cb) + ca) * hw,
                    b.data() + static_cast<size_t>(i) * cb * hw, sizeof(float) * cb * hw);
    }
    return out;
}

void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db) {
    check_nchw(dy, "split");
    const int n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
    const int cb = c - ca;
    da = Tensor({n, ca, dy.dim(2), dy.dim(3)});
    db = Tensor({n, cb, dy.dim(2), dy.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::memcpy(da.data() + static_cast<size_t>(i) * ca * hw,
                    dy.data() + static_cast<size_t>(i) * c * hw, sizeof(float) * ca * hw);
        std::memcpy(db.data() + static_cast<size_t>(i) * cb * hw,
                    dy.data() + (static_cast<size_t>(i) * c + ca) * hw, sizeof(float) * cb * hw);
    }
}

// ---------------------------------------------------------------- Conv2d

void Conv2d::init(int cin_, int cout_, int k_, int stride_, int pad_, std::mt19937_64& rng,
                  bool zero_init) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    pad = pad_;
    w = Tensor({cout, cin, k, k});
    b = Tensor({cout});
    gw = Tensor({cout, cin, k, k});
    gb = Tensor({cout});
    if (!zero_init) {
        const float stddev = std::sqrt(2.0f / (static_cast<float>(cin) * k * k));
        for (auto& x : w.v) x = normal_sample(rng, stddev);
    }
}

namespace {

void im2col(const float* x, int c, int h, int wd, int k, int stride, int pad, int ho, int wo,
            float* col) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) *
                                       (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + static_cast<size_t>(oy) * wo, 0, sizeof(float) * wo);
                        continue;
                    }
                    const float* src = x + (static_cast<size_t>(ci) * h + iy) * wd;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[static_cast<size_t>(oy) * wo + ox] =
                            (ix >= 0 && ix < wd) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, int c, int h, int wd, int k, int stride, int pad, int ho, int wo,
            float* x) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* src = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) *
                                             (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = x + (static_cast<size_t>(ci) * h + iy) * wd;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < wd) dst[ix] += src[static_cast<size_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x) {
    check_nchw(x, "conv2d");
    if (x.dim(1) != cin) throw rejected_input("conv2d: channel mismatch");
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const int ho = out_hw(h), wo = out_hw(wd);
    if (ho <= 0 || wo <= 0) throw rejected_input("conv2d: output would be empty");
    x_cache = x;

    Tensor out({n, cout, ho, wo});
    const size_t chw = static_cast<size_t>(cin) * h * wd;
    const size_t ohw = static_cast<size_t>(ho) * wo;
    std::vector<float> col(static_cast<size_t>(cin) * k * k * ohw);

    for (int i = 0; i < n; ++i) {
        im2col(x.data() + i * chw, cin, h, wd, k, stride, pad, ho, wo, col.data());
        float* o = out.data() + static_cast<size_t>(i) * cout * ohw;
        gemm(false, false, cout, static_cast<int>(ohw), cin * k * k, w.data(), col.data(), o,
             false);
        for (int co = 0; co < cout; ++co) {
            const float bias = b.v[co];
            float* row = o + static_cast<size_t>(co) * ohw;
            for (size_t j = 0; j < ohw; ++j) row[j] += bias;
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = x_cache;
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const size_t chw = static_cast<size_t>(cin) * h * wd;
    const size_t ohw = static_cast<size_t>(ho) * wo;

    Tensor dx(x.shape);
    std::vector<float> col(static_cast<size_t>(cin) * k * k * ohw);
    std::vector<float> colg(col.size());

    for (int i = 0; i < n; ++i) {
        const float* dyn = dy.data() + static_cast<size_t>(i) * cout * ohw;
        im2col(x.data() + i * chw, cin, h, wd, k, stride, pad, ho, wo, col.data());
        // dW += dY * col^T
        gemm(false, true, cout, cin * k * k, static_cast<int>(ohw), dyn, col.data(), gw.data(),
             true);
        // db += row sums of dY
        for (int co = 0; co < cout; ++co) {
            double s = 0.0;
            const float* row = dyn + static_cast<size_t>(co) * ohw;
            for (size_t j = 0; j < ohw; ++j) s += row[j];
            gb.v[co] += static_cast<float>(s);
        }
        // dX = col2im(W^T * dY)
        gemm(true, false, cin * k * k, static_cast<int>(ohw), cout, w.data(), dyn, colg.data(),
             false);
        col2im(colg.data(), cin, h, wd, k, stride, pad, ho, wo, dx.data() + i * chw);
    }
    return dx;
}

void Conv2d::params(std::vector<Param>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
}

// ------------------------------------------------------------- DwConv3x3

void DwConv3x3::init(int c_, std::mt19937_64& rng, bool delta_init) {
    c = c_;
    w = Tensor({c, 3, 3});
    b = Tensor({c});
    gw = Tensor({c, 3, 3});
    gb = Tensor({c});
    if (delta_init) {
        for (int ci = 0; ci < c; ++ci) w.v[static_cast<size_t>(ci) * 9 + 4] = 1.0f;
    } else {
        const float stddev = std::sqrt(2.0f / 9.0f);
        for (auto& x : w.v) x = normal_sample(rng, stddev);
    }
}

namespace {
inline int refl(int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); }
}  // namespace

Tensor DwConv3x3::forward(const Tensor& x) {
    check_nchw(x, "dwconv");
    if (x.dim(1) != c) throw rejected_input("dwconv: channel mismatch");
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    if (h < 2 || wd < 2) throw rejected_input("dwconv: plane too small for reflect padding");
    x_cache = x;

    Tensor out(x.shape);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const float* xp = x.data() + (static_cast<size_t>(i) * c + ci) * h * wd;
            float* op = out.data() + (static_cast<size_t>(i) * c + ci) * h * wd;
            const float* ker = w.data() + static_cast<size_t>(ci) * 9;
            const float bias = b.v[ci];
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < wd; ++xx) {
                    float s = bias;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = refl(y + ky - 1, h);
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = refl(xx + kx - 1, wd);
                            s += ker[ky * 3 + kx] * xp[static_cast<size_t>(iy) * wd + ix];
                        }
                    }
                    op[static_cast<size_t>(y) * wd + xx] = s;
                }
            }
        }
    }
    return out;
}

Tensor DwConv3x3::backward(const Tensor& dy) {
    const Tensor& x = x_cache;
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);

    Tensor dx(x.shape);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const float* xp = x.data() + (static_cast<size_t>(i) * c + ci) * h * wd;
            const float* dyp = dy.data() + (static_cast<size_t>(i) * c + ci) * h * wd;
            float* dxp = dx.data() + (static_cast<size_t>(i) * c + ci) * h * wd;
            const float* ker = w.data() + static_cast<size_t>(ci) * 9;
            float* gk = gw.data() + static_cast<size_t>(ci) * 9;
            double gb_acc = 0.0;
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < wd; ++xx) {
                    const float g = dyp[static_cast<size_t>(y) * wd + xx];
                    gb_acc += g;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = refl(y + ky - 1, h);
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = refl(xx + kx - 1, wd);
                            gk[ky * 3 + kx] += g * xp[static_cast<size_t>(iy) * wd + ix];
                            dxp[static_cast<size_t>(iy) * wd + ix] += g * ker[ky * 3 + kx];
                        }
                    }
                }
            }
            gb.v[ci] += static_cast<float>(gb_acc);
        }
    }
    return dx;
}

void DwConv3x3::params(std::vector<Param>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
}

// -------------------------------------------------------------- GroupNorm

void GroupNorm::init(int c_, int groups_) {
    c = c_;
    groups = groups_;
    if (c % groups != 0) throw rejected_input("groupnorm: channels not divisible by groups");
    gamma = Tensor({c});
    beta = Tensor({c});
    ggamma = Tensor({c});
    gbeta = Tensor({c});
    std::fill(gamma.v.begin(), gamma.v.end(), 1.0f);
}

Tensor GroupNorm::forward(const Tensor& x) {
    check_nchw(x, "groupnorm");
    if (x.dim(1) != c) throw rejected_input("groupnorm: channel mismatch");
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const int cg = c / groups;
    const size_t m = static_cast<size_t>(cg) * h * wd;

    Tensor out(x.shape);
    xhat_cache = Tensor(x.shape);
    rstd_cache.assign(static_cast<size_t>(n) * groups, 0.0f);

    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const float* xp = x.data() + (static_cast<size_t>(i) * c + g * cg) * h * wd;
            double mean = 0.0;
            for (size_t j = 0; j < m; ++j) mean += xp[j];
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (size_t j = 0; j < m; ++j) {
                const double d = xp[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            const float rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
            rstd_cache[static_cast<size_t>(i) * groups + g] = rstd;

            float* xh = xhat_cache.data() + (static_cast<size_t>(i) * c + g * cg) * h * wd;
            float* op = out.data() + (static_cast<size_t>(i) * c + g * cg) * h * wd;
            for (int cc = 0; cc < cg; ++cc) {
                const float ga = gamma.v[g * cg + cc], be = beta.v[g * cg + cc];
                for (size_t j = 0; j < static_cast<size_t>(h) * wd; ++j) {
                    const size_t idx = static_cast<size_t>(cc) * h * wd + j;
                    const float v = (xp[idx] - static_cast<float>(mean)) * rstd;
                    xh[idx] = v;
                    op[idx] = ga * v + be;
                }
            }
        }
    }
    return out;
}

Tensor GroupNorm::backward(const Tensor& dy) {
    const int n = dy.dim(0), h = dy.dim(2), wd = dy.dim(3);
    const int cg = c / groups;
    const size_t m = static_cast<size_t>(cg) * h * wd;
    const size_t hw = static_cast<size_t>(h) * wd;

    Tensor dx(dy.shape);
    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const size_t base = (static_cast<size_t>(i) * c + g * cg) * hw;
            const float* dyp = dy.data() + base;
            const float* xh = xhat_cache.data() + base;
            const float rstd = rstd_cache[static_cast<size_t>(i) * groups + g];

            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int cc = 0; cc < cg; ++cc) {
                const float ga = gamma.v[g * cg + cc];
                for (size_t j = 0; j < hw; ++j) {
                    const size_t idx = static_cast<size_t>(cc) * hw + j;
                    const double dxh = static_cast<double>(dyp[idx]) * ga;
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xh[idx];
                }
            }
            const double mean_dxhat = sum_dxhat / static_cast<double>(m);
            const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(m);

            float* dxp = dx.data() + base;
            for (int cc = 0; cc < cg; ++cc) {
                const float ga = gamma.v[g * cg + cc];
                for (size_t j = 0; j < hw; ++j) {
                    const size_t idx = static_cast<size_t>(cc) * hw + j;
                    const double dxh = static_cast<double>(dyp[idx]) * ga;
                    dxp[idx] = static_cast<float>(
                        rstd * (dxh - mean_dxhat - xh[idx] * mean_dxhat_xhat));
                }
            }
        }
    }
    // dgamma/dbeta summed over batch and space
    for (int i = 0; i < n; ++i) {
        for (int cc = 0; cc < c; ++cc) {
            const size_t base = (static_cast<size_t>(i) * c + cc) * hw;
            double sg = 0.0, sb = 0.0;
            for (size_t j = 0; j < hw; ++j) {
                sg += static_cast<double>(dy.v[base + j]) * xhat_cache.v[base + j];
                sb += dy.v[base + j];
            }
            ggamma.v[cc] += static_cast<float>(sg);
            gbeta.v[cc] += static_cast<float>(sb);
        }
    }
    return dx;
}

void GroupNorm::params(std::vector<Param>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma});
    out.push_back({prefix + ".beta", &beta, &gbeta});
}

// ------------------------------------------------------------------ SiLU

Tensor SiLU::forward(const Tensor& x) {
    x_cache = x;
    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x.v[i]));
        out.v[i] = x.v[i] * s;
    }
    return out;
}

Tensor SiLU::backward(const Tensor& dy) {
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.size(); ++i) {
        const float x = x_cache.v[i];
        const float s = 1.0f / (1.0f + std::exp(-x));
        dx.v[i] = dy.v[i] * (s + x * s * (1.0f - s));
    }
    return dx;
}

// ---------------------------------------------------------------- Linear

void Linear::init(int din_, int dout_, std::mt19937_64& rng, bool zero_init) {
    din = din_;
    dout = dout_;
    w = Tensor({dout, din});
    b = Tensor({dout});
    gw = Tensor({dout, din});
    gb = Tensor({dout});
    if (!zero_init) {
        const float stddev = std::sqrt(2.0f / static_cast<float>(din));
        for (auto& x : w.v) x = normal_sample(rng, stddev);
    }
}

Tensor Linear::forward(const Tensor& x) {
    if (x.shape.size() != 2 || x.dim(1) != din) throw rejected_input("linear: shape mismatch");
    x_cache = x;
    const int n = x.dim(0);
    Tensor out({n, dout});
    gemm(false, true, n, dout, din, x.data(), w.data(), out.data(), false);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dout; ++j) out.v[static_cast<size_t>(i) * dout + j] += b.v[j];
    return out;
}

Tensor Linear::backward(const Tensor& dy) {
    const int n = x_cache.dim(0);
    // dW += dY^T X ; db += column sums ; dX = dY W
    gemm(true, false, dout, din, n, dy.data(), x_cache.data(), gw.data(), true);
    for (int j = 0; j < dout; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += dy.v[static_cast<size_t>(i) * dout + j];
        gb.v[j] += static_cast<float>(s);
    }
    Tensor dx({n, din});
    gemm(false, false, n, din, dout, dy.data(), w.data(), dx.data(), false);
    return dx;
}

void Linear::params(std::vector<Param>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
}

// ------------------------------------------------------------ Upsample2x

Tensor Upsample2x::forward(const Tensor& x) {
    check_nchw(x, "upsample");
    in_shape = x.shape;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    Tensor out({n, c, 2 * h, 2 * wd});
    for (int i = 0; i < n * c; ++i) {
        const float* xp = x.data() + static_cast<size_t>(i) * h * wd;
        float* op = out.data() + static_cast<size_t>(i) * 4 * h * wd;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < wd; ++xx) {
                const float v = xp[static_cast<size_t>(y) * wd + xx];
                float* o0 = op + static_cast<size_t>(2 * y) * 2 * wd + 2 * xx;
                o0[0] = v;
                o0[1] = v;
                o0[2 * wd] = v;
                o0[2 * wd + 1] = v;
            }
        }
    }
    return out;
}

Tensor Upsample2x::backward(const Tensor& dy) {
    const int n = in_shape[0], c = in_shape[1], h = in_shape[2], wd = in_shape[3];
    Tensor dx({n, c, h, wd});
    for (int i = 0; i < n * c; ++i) {
        const float* dp = dy.data() + static_cast<size_t>(i) * 4 * h * wd;
        float* xp = dx.data() + static_cast<size_t>(i) * h * wd;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < wd; ++xx) {
                const float* d0 = dp + static_cast<size_t>(2 * y) * 2 * wd + 2 * xx;
                xp[static_cast<size_t>(y) * wd + xx] =
                    (d0[0] + d0[1]) + (d0[2 * wd] + d0[2 * wd + 1]);
            }
        }
    }
    return dx;
}

// --------------------------------------------------- timestep embedding

Tensor timestep_embedding(const std::vector<float>& t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw rejected_input("timestep embedding dim must be even >= 2");
    const int half = dim / 2;
    Tensor out({static_cast<int>(t.size()), dim});
    for (size_t i = 0; i < t.size(); ++i) {
        for (int k = 0; k < half; ++k) {
            const double f =
                std::exp(-std::log(10000.0) * static_cast<double>(k) / (half - 1.0));
            const double a = t[i] * f;
            out.v[i * dim + k] = static_cast<float>(std::sin(a));
            out.v[i * dim + half + k] = static_cast<float>(std::cos(a));
        }
    }
    return out;
}

// ------------------------------------------------------------------ Adam

void Adam::step(const std::vector<Param>& params) {
    if (m.empty()) {
        for (const Param& p : params) {
            m.emplace_back(p.w->shape);
            v.emplace_back(p.w->shape);
        }
    }
    if (m.size() != params.size()) throw rejected_input("adam: parameter set changed");
    ++t;
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        float* w = params[pi].w->data();
        const float* g = params[pi].g->data();
        float* mm = m[pi].data();
        float* vv = v[pi].data();
        const size_t n = params[pi].w->size();
        for (size_t i = 0; i < n; ++i) {
            mm[i] = beta1 * mm[i] + (1.0f - beta1) * g[i];
            vv[i] = beta2 * vv[i] + (1.0f - beta2) * g[i] * g[i];
            const float mhat = mm[i] / bc1;
            const float vhat = vv[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Adam::zero_grads(const std::vector<Param>& params) {
    for (const Param& p : params) p.g->zero();
}

}  // namespace pwdlact
