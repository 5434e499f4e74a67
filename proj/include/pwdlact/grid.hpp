#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pwdlact {

/// Parallel-beam acquisition geometry. Angles are in degrees, strictly
/// increasing, all within [0, 360). Detector offsets are measured in pixel
/// units from the detector-array center.
struct Geometry {
    int image_size = 0;                 // square grid, pixels per side
    int n_detectors = 0;                // detector bins per view
    std::vector<double> angles_deg;     // projection angles
    double detector_spacing = 1.0;      // pixels per bin

    int n_angles() const { return static_cast<int>(angles_deg.size()); }
    void validate() const;

    /// n_angles views uniformly covering [0, 360), detector count chosen to
    /// cover the image diagonal (rounded up to even).
    static Geometry uniform(int image_size, int n_angles, double detector_spacing = 1.0);

    bool operator==(const Geometry& o) const = default;
};

/// 2-D scalar field in normalized intensity units, row-major.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> v;
    float value_min = 0.0f;   // declared range, not necessarily attained
    float value_max = 1.0f;

    Image() = default;
    Image(int h_, int w_, float fill = 0.0f)
        : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }
    void require_finite(const char* what) const;
};

/// Detector-major stack of line integrals: element (d, a) is detector bin d
/// of the view at angles_deg[a]. Carries the geometry it was produced under.
struct Sinogram {
    Geometry geom;
    std::vector<float> v;   // n_detectors x n_angles, row-major

    Sinogram() = default;
    explicit Sinogram(const Geometry& g, float fill = 0.0f)
        : geom(g), v(static_cast<size_t>(g.n_detectors) * g.n_angles(), fill) {}

    float& at(int det, int angle) { return v[static_cast<size_t>(det) * geom.n_angles() + angle]; }
    float at(int det, int angle) const { return v[static_cast<size_t>(det) * geom.n_angles() + angle]; }
    size_t size() const { return v.size(); }
};

/// Per-angle availability flags; at least one view must be kept.
struct AngularMask {
    std::vector<uint8_t> flags;

    int n_kept() const;
    void validate() const;
};

/// Thrown when an operation rejects its input (shape/range violations).
class rejected_input : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// True if pixel (y, x) lies inside the inscribed circular field of view of a
/// size x size grid. Reconstructions and metrics are restricted to this disk.
inline bool in_fov(int y, int x, int size) {
    const double c = (size - 1) / 2.0;
    const double r = size / 2.0;
    const double dy = y - c;
    const double dx = x - c;
    return dy * dy + dx * dx <= r * r;
}

/// Zeroes everything outside the inscribed circular field of view, in place.
void apply_fov(Image& img);

std::pair<float, float> min_max(const std::vector<float>& v);

}  // namespace pwdlact
