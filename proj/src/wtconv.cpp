#include "pwdlact/wtconv.hpp"

#include <cmath>

#include "pwdlact/wavelet.hpp"

namespace pwdlact {

void WTConvParams::validate() const {
    auto finite = [](const Tensor& t) {
        for (float x : t.v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    if (spatial_w.shape.size() != 4 || spatial_w.dim(0) != spatial_w.dim(1))
        throw rejected_input("wtconv: spatial kernel must be [C,C,k,k]");
    const int c = spatial_w.dim(0);
    const int k = spatial_w.dim(2);
    if (k != spatial_w.dim(3) || k % 2 == 0)
        throw rejected_input("wtconv: spatial kernel must be square with odd size");
    if (spatial_b.shape != std::vector<int>{c})
        throw rejected_input("wtconv: spatial bias must be [C]");
    if (sub_w.shape != std::vector<int>{4, c, 3, 3})
        throw rejected_input("wtconv: subband kernels must be [4,C,3,3]");
    if (sub_b.shape != std::vector<int>{4, c})
        throw rejected_input("wtconv: subband biases must be [4,C]");
    if (fuse_w.shape.size() != 4 || fuse_w.dim(1) != c)
        throw rejected_input("wtconv: fuse kernel must be [Co,C,kf,kf]");
    const int kf = fuse_w.dim(2);
    if (kf != fuse_w.dim(3) || kf % 2 == 0)
        throw rejected_input("wtconv: fuse kernel must be square with odd size");
    if (fuse_b.shape != std::vector<int>{fuse_w.dim(0)})
        throw rejected_input("wtconv: fuse bias must be [Co]");
    for (const Tensor* t : {&spatial_w, &spatial_b, &sub_w, &sub_b, &fuse_w, &fuse_b})
        if (!finite(*t)) throw rejected_input("wtconv: non-finite weights");
}

void dwt2_batch(const Tensor& x, Tensor out[4]) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw rejected_input("wtconv: spatial dimensions must be even, got " + shape_str(x));
    for (int i = 0; i < 4; ++i) out[i] = Tensor({n, c, h / 2, w / 2});
    const size_t in_plane = static_cast<size_t>(h) * w;
    const size_t out_plane = in_plane / 4;
    for (int p = 0; p < n * c; ++p)
        dwt2_plane(x.data() + p * in_plane, h, w, out[0].data() + p * out_plane,
                   out[1].data() + p * out_plane, out[2].data() + p * out_plane,
                   out[3].data() + p * out_plane);
}

Tensor idwt2_batch(const Tensor in[4]) {
    const int n = in[0].dim(0), c = in[0].dim(1), h = in[0].dim(2), w = in[0].dim(3);
    for (int i = 1; i < 4; ++i)
        if (!in[i].same_shape(in[0])) throw rejected_input("wtconv: subband shape mismatch");
    Tensor out({n, c, 2 * h, 2 * w});
    const size_t in_plane = static_cast<size_t>(h) * w;
    const size_t out_plane = in_plane * 4;
    for (int p = 0; p < n * c; ++p)
        idwt2_plane(in[0].data() + p * in_plane, in[1].data() + p * in_plane,
                    in[2].data() + p * in_plane, in[3].data() + p * in_plane, h, w,
                    out.data() + p * out_plane);
    return out;
}

void WTConv::init(int c_, int k, std::mt19937_64& rng) {
    c = c_;
    spatial.init(c, c, k, 1, (k - 1) / 2, rng);
    fuse.init(c, c, 3, 1, 1, rng);
    for (auto& s : sub) s.init(c, rng);
}

void WTConv::load(const WTConvParams& p) {
    p.validate();
    c = p.spatial_w.dim(0);
    const int k = p.spatial_w.dim(2);
    std::mt19937_64 dummy(0);
    spatial.init(c, c, k, 1, (k - 1) / 2, dummy, true);
    spatial.w = p.spatial_w;
    spatial.b = p.spatial_b;
    const int kf = p.fuse_w.dim(2);
    fuse.init(c, p.fuse_w.dim(0), kf, 1, (kf - 1) / 2, dummy, true);
    fuse.w = p.fuse_w;
    fuse.b = p.fuse_b;
    for (int i = 0; i < 4; ++i) {
        sub[i].init(c, dummy, false);
        std::copy(p.sub_w.v.begin() + static_cast<size_t>(i) * c * 9,
                  p.sub_w.v.begin() + static_cast<size_t>(i + 1) * c * 9, sub[i].w.v.begin());
        std::copy(p.sub_b.v.begin() + static_cast<size_t>(i) * c,
                  p.sub_b.v.begin() + static_cast<size_t>(i + 1) * c, sub[i].b.v.begin());
    }
}

Tensor WTConv::forward(const Tensor& x) {
    if (x.shape.size() != 4 || x.dim(1) != c)
        throw rejected_input("wtconv: expected NCHW input with " + std::to_string(c) +
                             " channels, got " + shape_str(x));

    Tensor x1 = spatial.forward(x);

    Tensor bands[4];
    dwt2_batch(x, bands);
    Tensor filt[4];
    for (int i = 0; i < 4; ++i) filt[i] = sub[i].forward(bands[i]);
    Tensor xt = idwt2_batch(filt);

    add_inplace(x1, xt);
    return fuse.forward(x1);
}

Tensor WTConv::backward(const Tensor& dy) {
    Tensor dsum = fuse.backward(dy);

    // wavelet branch: transpose of synthesis is analysis and vice versa
    Tensor dfilt[4];
    dwt2_batch(dsum, dfilt);
    Tensor dbands[4];
    for (int i = 0; i < 4; ++i) dbands[i] = sub[i].backward(dfilt[i]);
    Tensor dx = idwt2_batch(dbands);

    add_inplace(dx, spatial.backward(dsum));
    return dx;
}

void WTConv::params(std::vector<Param>& out, const std::string& prefix) {
    spatial.params(out, prefix + ".spatial");
    static const char* names[4] = {".sub_ll", ".sub_lh", ".sub_hl", ".sub_hh"};
    for (int i = 0; i < 4; ++i) sub[i].params(out, prefix + names[i]);
    fuse.params(out, prefix + ".fuse");
}

Tensor wtconv_forward(const Tensor& x, const WTConvParams& p) {
    WTConv block;
    block.load(p);
    return block.forward(x);
}

}  // namespace pwdlact
