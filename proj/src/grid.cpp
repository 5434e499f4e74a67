#include "pwdlact/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pwdlact {

void Geometry::validate() const {
    if (image_size < 2) throw rejected_input("Geometry: image_size must be >= 2");
    const double min_det = image_size * std::sqrt(2.0);
    if (n_detectors < min_det)
        throw rejected_input("Geometry: n_detectors " + std::to_string(n_detectors) +
                             " does not cover the image diagonal (need >= " +
                             std::to_string(static_cast<int>(std::ceil(min_det))) + ")");
    if (detector_spacing <= 0.0) throw rejected_input("Geometry: detector_spacing must be positive");
    if (angles_deg.empty()) throw rejected_input("Geometry: no projection angles");
    for (size_t i = 0; i < angles_deg.size(); ++i) {
        const double a = angles_deg[i];
        if (a < 0.0 || a >= 360.0) throw rejected_input("Geometry: angle out of [0, 360)");
        if (i > 0 && angles_deg[i - 1] >= a)
            throw rejected_input("Geometry: angles must be strictly increasing");
    }
}

Geometry Geometry::uniform(int image_size, int n_angles, double detector_spacing) {
    Geometry g;
    g.image_size = image_size;
    int nd = static_cast<int>(std::ceil(image_size * std::sqrt(2.0) / detector_spacing));
    if (nd % 2 != 0) ++nd;
    g.n_detectors = nd;
    g.detector_spacing = detector_spacing;
    g.angles_deg.resize(n_angles);
    for (int i = 0; i < n_angles; ++i) g.angles_deg[i] = 360.0 * i / n_angles;
    g.validate();
    return g;
}

void Image::require_finite(const char* what) const {
    for (float x : v)
        if (!std::isfinite(x)) throw rejected_input(std::string(what) + ": non-finite value");
}

int AngularMask::n_kept() const {
    int n = 0;
    for (uint8_t f : flags) n += (f != 0);
    return n;
}

void AngularMask::validate() const {
    if (flags.empty()) throw rejected_input("AngularMask: empty");
    bool any = false;
    for (uint8_t f : flags) {
        if (f > 1) throw rejected_input("AngularMask: flags must be 0 or 1");
        any = any || f;
    }
    if (!any) throw rejected_input("AngularMask: all angles masked out");
}

void apply_fov(Image& img) {
    const int size = std::min(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            if (!in_fov(y, x, size)) img.at(y, x) = 0.0f;
}

std::pair<float, float> min_max(const std::vector<float>& v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {lo, hi};
}

}  // namespace pwdlact
