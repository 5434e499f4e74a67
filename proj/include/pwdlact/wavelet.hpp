#pragma once

#include <vector>

#include "pwdlact/grid.hpp"

namespace pwdlact {

// Single-level orthonormal Haar transform. For each 2x2 block
//   a = x[2i, 2j]    b = x[2i, 2j+1]
//   c = x[2i+1, 2j]  d = x[2i+1, 2j+1]
// the subbands are
//   ll = (a+b+c+d)/2   lh = (a+b-c-d)/2   hl = (a-b+c-d)/2   hh = (a-b-c+d)/2
// so lh carries vertical-frequency content (rows alternating +1/-1 land
// entirely in lh), hl carries horizontal-frequency content, and a constant
// image of value v gives ll = 2v. The analysis is orthonormal: energy is
// preserved and idwt2 is the exact inverse.

struct Subbands {
    int h = 0, w = 0;  // each subband is h x w (= H/2 x W/2 of the source)
    std::vector<float> ll, lh, hl, hh;

    Subbands() = default;
    Subbands(int h_, int w_)
        : h(h_), w(w_),
          ll(static_cast<size_t>(h_) * w_, 0.0f), lh(ll.size(), 0.0f),
          hl(ll.size(), 0.0f), hh(ll.size(), 0.0f) {}

    size_t plane_size() const { return ll.size(); }
    void validate() const;
};

Subbands dwt2(const Image& x);
Image idwt2(const Subbands& s);

// Raw-plane forms used inside network layers (same math, no copies).
void dwt2_plane(const float* x, int H, int W, float* ll, float* lh, float* hl, float* hh);
void idwt2_plane(const float* ll, const float* lh, const float* hl, const float* hh, int h, int w,
                 float* out);

}  // namespace pwdlact
