#include "pwdlact/tomo.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace pwdlact {

namespace {

constexpr double kRayStep = 0.5;  // pixels between ray samples

void require_finite_sino(const Sinogram& s, const char* what) {
    for (float x : s.v)
        if (!std::isfinite(x)) throw rejected_input(std::string(what) + ": non-finite sinogram");
}

struct RayGrid {
    int n_samples;     // samples per ray, identical for every ray
    double t_begin;    // first sample position along the ray
};

RayGrid ray_grid(const Geometry& g) {
    const double half_diag = g.image_size * std::numbers::sqrt2 / 2.0;
    const int n = static_cast<int>(std::floor(2.0 * half_diag / kRayStep)) + 1;
    return {n, -half_diag};
}

inline double bilinear(const Image& img, double x, double y) {
    if (x < 0.0 || y < 0.0 || x > img.w - 1 || y > img.h - 1) return 0.0;
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = x0 < img.w - 1 ? x0 + 1 : x0;
    const int y1 = y0 < img.h - 1 ? y0 + 1 : y0;
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
    const double bot = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

}  // namespace

FbpFilter fbp_filter_from_name(const std::string& name) {
    if (name == "ram-lak") return FbpFilter::ram_lak;
    if (name == "hann") return FbpFilter::hann;
    throw rejected_input("fbp: unknown filter '" + name + "' (expected ram-lak or hann)");
}

Sinogram radon(const Image& image, const Geometry& geometry) {
    geometry.validate();
    if (image.h != geometry.image_size || image.w != geometry.image_size)
        throw rejected_input("radon: image shape does not match geometry");
    image.require_finite("radon");

    Sinogram sino(geometry);
    const RayGrid rg = ray_grid(geometry);
    const double cx = (image.w - 1) / 2.0;
    const double cy = (image.h - 1) / 2.0;
    const double det_c = (geometry.n_detectors - 1) / 2.0;
    const int na = geometry.n_angles();

    for (int a = 0; a < na; ++a) {
        const double th = geometry.angles_deg[a] * std::numbers::pi / 180.0;
        const double ux = std::cos(th), uy = std::sin(th);
        const double vx = -uy, vy = ux;
        for (int d = 0; d < geometry.n_detectors; ++d) {
            const double s = (d - det_c) * geometry.detector_spacing;
            double x = cx + s * ux + rg.t_begin * vx;
            double y = cy + s * uy + rg.t_begin * vy;
            double sum = 0.0;
            for (int k = 0; k < rg.n_samples; ++k) {
                sum += bilinear(image, x, y);
                x += kRayStep * vx;
                y += kRayStep * vy;
            }
            sino.at(d, a) = static_cast<float>(sum * kRayStep);
        }
    }
    return sino;
}

Image backproject(const Sinogram& sino) {
    const Geometry& g = sino.geom;
    g.validate();

    Image out(g.image_size, g.image_size);
    std::vector<double> acc(out.size(), 0.0);
    const RayGrid rg = ray_grid(g);
    const double cx = (out.w - 1) / 2.0;
    const double cy = (out.h - 1) / 2.0;
    const double det_c = (g.n_detectors - 1) / 2.0;

    // Scatter the transpose of the forward bilinear sampling.
    for (int a = 0; a < g.n_angles(); ++a) {
        const double th = g.angles_deg[a] * std::numbers::pi / 180.0;
        const double ux = std::cos(th), uy = std::sin(th);
        const double vx = -uy, vy = ux;
        for (int d = 0; d < g.n_detectors; ++d) {
            const double w = sino.at(d, a) * kRayStep;
            if (w == 0.0) continue;
            const double s = (d - det_c) * g.detector_spacing;
            double x = cx + s * ux + rg.t_begin * vx;
            double y = cy + s * uy + rg.t_begin * vy;
            for (int k = 0; k < rg.n_samples; ++k) {
                if (x >= 0.0 && y >= 0.0 && x <= out.w - 1 && y <= out.h - 1) {
                    const int x0 = static_cast<int>(x);
                    const int y0 = static_cast<int>(y);
                    const int x1 = x0 < out.w - 1 ? x0 + 1 : x0;
                    const int y1 = y0 < out.h - 1 ? y0 + 1 : y0;
                    const double fx = x - x0;
                    const double fy = y - y0;
                    acc[static_cast<size_t>(y0) * out.w + x0] += w * (1.0 - fx) * (1.0 - fy);
                    acc[static_cast<size_t>(y0) * out.w + x1] += w * fx * (1.0 - fy);
                    acc[static_cast<size_t>(y1) * out.w + x0] += w * (1.0 - fx) * fy;
                    acc[static_cast<size_t>(y1) * out.w + x1] += w * fx * fy;
                }
                x += kRayStep * vx;
                y += kRayStep * vy;
            }
        }
    }
    for (size_t i = 0; i < acc.size(); ++i) out.v[i] = static_cast<float>(acc[i]);
    return out;
}

AngularMask make_mask(const Geometry& geometry, double lo_deg, double hi_deg) {
    geometry.validate();
    if (lo_deg < 0.0 || hi_deg > 360.0)
        throw rejected_input("make_mask: interval must lie within [0, 360]");
    if (hi_deg < lo_deg) throw rejected_input("make_mask: empty angle interval");

    AngularMask m;
    m.flags.resize(geometry.n_angles());
    for (int a = 0; a < geometry.n_angles(); ++a) {
        const double ang = geometry.angles_deg[a];
        m.flags[a] = (ang >= lo_deg && ang <= hi_deg) ? 1 : 0;
    }
    m.validate();
    return m;
}

Sinogram apply_mask(const Sinogram& sino, const AngularMask& mask) {
    mask.validate();
    if (static_cast<int>(mask.flags.size()) != sino.geom.n_angles())
        throw rejected_input("apply_mask: mask length does not match angle count");

    Sinogram out = sino;
    const int na = sino.geom.n_angles();
    for (int a = 0; a < na; ++a) {
        if (mask.flags[a]) continue;
        for (int d = 0; d < sino.geom.n_detectors; ++d) out.at(d, a) = 0.0f;
    }
    return out;
}

namespace {

// Band-limited ramp kernel h[n] (Kak & Slaney eq. 61): h[0] = 1/(4 d^2),
// h[n] = 0 for even n, -1/(pi n d)^2 for odd n.
std::vector<double> ramp_kernel(int n_det, double d) {
    std::vector<double> h(2 * n_det - 1, 0.0);
    const int c = n_det - 1;
    h[c] = 1.0 / (4.0 * d * d);
    for (int n = 1; n < n_det; ++n) {
        if (n % 2 == 0) continue;
        const double val = -1.0 / (std::numbers::pi * std::numbers::pi * n * n * d * d);
        h[c + n] = val;
        h[c - n] = val;
    }
    return h;
}

// Hann apodization applied in the frequency domain of the discrete ramp,
// via a direct DFT on a zero-padded copy (one-time cost per geometry).
std::vector<double> hann_kernel(int n_det, double d) {
    const std::vector<double> ramp = ramp_kernel(n_det, d);
    int L = 1;
    while (L < 4 * n_det) L *= 2;

    // circularly place h[n], n in [-(n_det-1), n_det-1], onto length-L grid
    std::vector<double> pad(L, 0.0);
    const int c = n_det - 1;
    for (int n = -(n_det - 1); n <= n_det - 1; ++n)
        pad[(n + L) % L] = ramp[c + n];

    std::vector<double> re(L, 0.0), im(L, 0.0);
    for (int k = 0; k < L; ++k) {
        double sr = 0.0, si = 0.0;
        for (int n = 0; n < L; ++n) {
            const double ph = -2.0 * std::numbers::pi * k * n / L;
            sr += pad[n] * std::cos(ph);
            si += pad[n] * std::sin(ph);
        }
        // window over signed frequency index
        const int f = k <= L / 2 ? k : k - L;
        const double w = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * f / L));
        re[k] = sr * w;
        im[k] = si * w;
    }
    std::vector<double> out(2 * n_det - 1, 0.0);
    for (int n = -(n_det - 1); n <= n_det - 1; ++n) {
        double s = 0.0;
        for (int k = 0; k < L; ++k) {
            const double ph = 2.0 * std::numbers::pi * k * ((n + L) % L) / L;
            s += re[k] * std::cos(ph) - im[k] * std::sin(ph);
        }
        out[c + n] = s / L;
    }
    return out;
}

}  // namespace

Image fbp(const Sinogram& sino, FbpFilter filter) {
    const Geometry& g = sino.geom;
    g.validate();
    require_finite_sino(sino, "fbp");

    const int nd = g.n_detectors;
    const int na = g.n_angles();
    const std::vector<double> h =
        filter == FbpFilter::ram_lak ? ramp_kernel(nd, g.detector_spacing)
                                     : hann_kernel(nd, g.detector_spacing);
    const int c = nd - 1;

    // filter each view along the detector axis
    std::vector<double> q(static_cast<size_t>(nd) * na);
    for (int a = 0; a < na; ++a) {
        for (int d = 0; d < nd; ++d) {
            double s = 0.0;
            for (int dp = 0; dp < nd; ++dp) s += sino.at(dp, a) * h[c + d - dp];
            q[static_cast<size_t>(d) * na + a] = s * g.detector_spacing;
        }
    }

    Image out(g.image_size, g.image_size);
    const double cx = (out.w - 1) / 2.0;
    const double cy = (out.h - 1) / 2.0;
    const double det_c = (nd - 1) / 2.0;
    const double scale = std::numbers::pi / na;

    std::vector<double> cs(na), sn(na);
    for (int a = 0; a < na; ++a) {
        const double th = g.angles_deg[a] * std::numbers::pi / 180.0;
        cs[a] = std::cos(th);
        sn[a] = std::sin(th);
    }

    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            if (!in_fov(y, x, g.image_size)) continue;
            double sum = 0.0;
            for (int a = 0; a < na; ++a) {
                const double s = (x - cx) * cs[a] + (y - cy) * sn[a];
                const double dpos = s / g.detector_spacing + det_c;
                if (dpos < 0.0 || dpos > nd - 1) continue;
                const int d0 = static_cast<int>(dpos);
                const int d1 = d0 < nd - 1 ? d0 + 1 : d0;
                const double f = dpos - d0;
                sum += q[static_cast<size_t>(d0) * na + a] * (1.0 - f) +
                       q[static_cast<size_t>(d1) * na + a] * f;
            }
            out.at(y, x) = static_cast<float>(sum * scale);
        }
    }
    return out;
}

double tv_value(const Image& img) {
    constexpr double eps2 = 1e-8;
    double tv = 0.0;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double dx = x + 1 < img.w ? img.at(y, x + 1) - img.at(y, x) : 0.0;
            const double dy = y + 1 < img.h ? img.at(y + 1, x) - img.at(y, x) : 0.0;
            tv += std::sqrt(dx * dx + dy * dy + eps2);
        }
    }
    return tv;
}

namespace {

// d/dx of the smoothed isotropic TV, accumulated into grad.
void tv_gradient(const Image& img, double lambda, std::vector<double>& grad) {
    constexpr double eps2 = 1e-8;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double dx = x + 1 < img.w ? img.at(y, x + 1) - img.at(y, x) : 0.0;
            const double dy = y + 1 < img.h ? img.at(y + 1, x) - img.at(y, x) : 0.0;
            const double den = std::sqrt(dx * dx + dy * dy + eps2);
            const size_t i = static_cast<size_t>(y) * img.w + x;
            grad[i] += lambda * (-dx - dy) / den;
            if (x + 1 < img.w) grad[i + 1] += lambda * dx / den;
            if (y + 1 < img.h) grad[i + img.w] += lambda * dy / den;
        }
    }
}

}  // namespace

TvReconResult tv_recon(const Sinogram& sino, const AngularMask& mask, const TvReconOptions& opt) {
    const Geometry& g = sino.geom;
    g.validate();
    mask.validate();
    if (static_cast<int>(mask.flags.size()) != g.n_angles())
        throw rejected_input("tv_recon: mask length does not match angle count");
    if (opt.n_iters < 1) throw rejected_input("tv_recon: n_iters must be >= 1");
    if (opt.step <= 0.0) throw rejected_input("tv_recon: step must be positive");
    if (opt.lambda < 0.0) throw rejected_input("tv_recon: lambda must be non-negative");

    Image x(g.image_size, g.image_size);
    if (opt.init) {
        if (opt.init->h != g.image_size || opt.init->w != g.image_size)
            throw rejected_input("tv_recon: init shape mismatch");
        x = *opt.init;
    }
    apply_fov(x);

    TvReconResult res;
    res.objective.reserve(opt.n_iters);

    for (int it = 0; it < opt.n_iters; ++it) {
        // residual r = M(Ax) - y, kept views only contribute to the gradient
        Sinogram ax = radon(x, g);
        Sinogram r = ax;
        double fidelity = 0.0;
        for (int a = 0; a < g.n_angles(); ++a) {
            for (int d = 0; d < g.n_detectors; ++d) {
                const float masked = mask.flags[a] ? ax.at(d, a) : 0.0f;
                const float diff = masked - sino.at(d, a);
                fidelity += 0.5 * diff * diff;
                r.at(d, a) = mask.flags[a] ? diff : 0.0f;
            }
        }
        const double obj = fidelity + opt.lambda * tv_value(x);
        if (!std::isfinite(obj))
            throw std::runtime_error("tv_recon: objective diverged at iteration " +
                                     std::to_string(it) + " (step " + std::to_string(opt.step) +
                                     " too large)");
        res.objective.push_back(obj);

        Image atr = backproject(r);
        std::vector<double> grad(x.size());
        for (size_t i = 0; i < grad.size(); ++i) grad[i] = atr.v[i];
        if (opt.lambda > 0.0) tv_gradient(x, opt.lambda, grad);

        bool finite = true;
        for (size_t i = 0; i < x.size(); ++i) {
            const float nv = static_cast<float>(x.v[i] - opt.step * grad[i]);
            finite = finite && std::isfinite(nv);
            x.v[i] = nv;
        }
        if (!finite)
            throw std::runtime_error("tv_recon: iterate diverged at iteration " +
                                     std::to_string(it) + " (step " + std::to_string(opt.step) +
                                     " too large)");
        apply_fov(x);
    }
    res.image = std::move(x);
    return res;
}

}  // namespace pwdlact
