#pragma once

#include "pwdlact/grid.hpp"

namespace pwdlact {

// Ray convention, in array coordinates (x = column, y = row), grid center
// c = ((W-1)/2, (H-1)/2): the view at angle theta integrates along
//   p(t) = c + s*u + t*v,   u = (cos t, sin t),  v = (-sin t, cos t),
// where s is the detector offset in pixels. Samples are taken every
// 0.5 px by bilinear interpolation (zero outside the grid) over the full
// image diagonal, so the operator is linear and every ray has a fixed
// sample count.

enum class FbpFilter { ram_lak, hann };

FbpFilter fbp_filter_from_name(const std::string& name);

/// Discrete parallel-beam forward projection.
Sinogram radon(const Image& image, const Geometry& geometry);

/// Exact transpose of radon (unfiltered backprojection); used as the
/// gradient operator inside tv_recon.
Image backproject(const Sinogram& sino);

/// Mask keeping exactly the angles inside the closed interval [lo_deg, hi_deg].
AngularMask make_mask(const Geometry& geometry, double lo_deg, double hi_deg);

/// Zeroes the views at masked-out angles; kept views are copied unchanged.
Sinogram apply_mask(const Sinogram& sino, const AngularMask& mask);

/// Filtered back-projection. Output is zeroed outside the inscribed circular
/// field of view.
Image fbp(const Sinogram& sino, FbpFilter filter = FbpFilter::ram_lak);

struct TvReconOptions {
    double lambda = 0.0;    // TV weight
    int n_iters = 1;
    double step = 1e-3;     // gradient step size
    const Image* init = nullptr;  // start iterate; zero image when null
};

struct TvReconResult {
    Image image;
    std::vector<double> objective;  // 0.5*||M(Ax)-y||^2 + lambda*TV(x), per iterate
};

/// Projected gradient descent on 0.5*||M(Ax) - y||^2 + lambda*TV_eps(x),
/// projecting each iterate onto the circular field-of-view support.
/// Diverging objectives (non-finite) raise a runtime_error naming the step.
TvReconResult tv_recon(const Sinogram& sino, const AngularMask& mask, const TvReconOptions& opt);

/// Smoothed isotropic total variation of an image (test and objective hook).
double tv_value(const Image& img);

}  // namespace pwdlact
