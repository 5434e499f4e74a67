#include "pwdlact/wavelet.hpp"

#include <string>

namespace pwdlact {

void Subbands::validate() const {
    if (h <= 0 || w <= 0) throw rejected_input("subbands: empty shape");
    const size_t n = static_cast<size_t>(h) * w;
    if (ll.size() != n || lh.size() != n || hl.size() != n || hh.size() != n)
        throw rejected_input("subbands: planes disagree about their shape");
}

void dwt2_plane(const float* x, int H, int W, float* ll, float* lh, float* hl, float* hh) {
    const int h = H / 2, w = W / 2;
    for (int i = 0; i < h; ++i) {
        const float* r0 = x + static_cast<size_t>(2 * i) * W;
        const float* r1 = r0 + W;
        for (int j = 0; j < w; ++j) {
            const float a = r0[2 * j], b = r0[2 * j + 1];
            const float c = r1[2 * j], d = r1[2 * j + 1];
            // grouped sums keep the constant case exact in float
            const float ab = a + b, cd = c + d;
            const float ab_ = a - b, cd_ = c - d;
            const size_t k = static_cast<size_t>(i) * w + j;
            ll[k] = (ab + cd) * 0.5f;
            lh[k] = (ab - cd) * 0.5f;
            hl[k] = (ab_ + cd_) * 0.5f;
            hh[k] = (ab_ - cd_) * 0.5f;
        }
    }
}

void idwt2_plane(const float* ll, const float* lh, const float* hl, const float* hh, int h, int w,
                 float* out) {
    const int W = 2 * w;
    for (int i = 0; i < h; ++i) {
        float* r0 = out + static_cast<size_t>(2 * i) * W;
        float* r1 = r0 + W;
        for (int j = 0; j < w; ++j) {
            const size_t k = static_cast<size_t>(i) * w + j;
            const float pl = ll[k] + lh[k], ml = ll[k] - lh[k];
            const float ph = hl[k] + hh[k], mh = hl[k] - hh[k];
            r0[2 * j] = (pl + ph) * 0.5f;
            r0[2 * j + 1] = (pl - ph) * 0.5f;
            r1[2 * j] = (ml + mh) * 0.5f;
            r1[2 * j + 1] = (ml - mh) * 0.5f;
        }
    }
}

Subbands dwt2(const Image& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw rejected_input("dwt2: dimensions must be even, got " + std::to_string(x.h) + "x" +
                             std::to_string(x.w));
    if (x.h == 0 || x.w == 0) throw rejected_input("dwt2: empty image");
    Subbands s(x.h / 2, x.w / 2);
    dwt2_plane(x.v.data(), x.h, x.w, s.ll.data(), s.lh.data(), s.hl.data(), s.hh.data());
    return s;
}

Image idwt2(const Subbands& s) {
    s.validate();
    Image out(2 * s.h, 2 * s.w);
    idwt2_plane(s.ll.data(), s.lh.data(), s.hl.data(), s.hh.data(), s.h, s.w, out.v.data());
    return out;
}

}  // namespace pwdlact
