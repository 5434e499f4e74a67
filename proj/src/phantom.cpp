#include "pwdlact/phantom.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "pwdlact/rng.hpp"

namespace pwdlact {

PhantomKind phantom_kind_from_name(const std::string& name) {
    if (name == "shepp-logan") return PhantomKind::shepp_logan;
    if (name == "random-ellipses") return PhantomKind::random_ellipses;
    if (name == "dental-like") return PhantomKind::dental_like;
    throw rejected_input("unknown phantom kind '" + name + "'");
}

std::string phantom_kind_name(PhantomKind kind) {
    switch (kind) {
        case PhantomKind::shepp_logan: return "shepp-logan";
        case PhantomKind::random_ellipses: return "random-ellipses";
        case PhantomKind::dental_like: return "dental-like";
    }
    throw rejected_input("bad phantom kind value");
}

namespace {

struct Ellipse {
    double value;    // additive intensity, or level for max-composition
    double a, b;     // semi-axes in unit coordinates ([-1, 1] square)
    double x0, y0;   // center
    double phi_deg;  // rotation, counter-clockwise
};

enum class Compose { add, max };

// unit coordinates: u right, w up, both in [-1, 1] across the grid
void render(Image& img, const Ellipse& e, Compose mode) {
    const double c = (img.w - 1) / 2.0;
    const double half = img.w / 2.0;
    const double phi = e.phi_deg * std::numbers::pi / 180.0;
    const double cp = std::cos(phi), sp = std::sin(phi);
    for (int y = 0; y < img.h; ++y) {
        const double w = (c - y) / half;
        for (int x = 0; x < img.w; ++x) {
            const double u = (x - c) / half;
            const double du = u - e.x0, dw = w - e.y0;
            const double xi = du * cp + dw * sp;
            const double eta = -du * sp + dw * cp;
            if ((xi / e.a) * (xi / e.a) + (eta / e.b) * (eta / e.b) > 1.0) continue;
            float& p = img.at(y, x);
            p = mode == Compose::add ? p + static_cast<float>(e.value)
                                     : std::max(p, static_cast<float>(e.value));
        }
    }
}

// the standard ten-ellipse head table with contrast-enhanced intensities
// (extrema land exactly on 0 and 1)
Image shepp_logan(int n) {
    static const Ellipse table[] = {
        {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
        {-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
        {-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
        {-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
        {0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
        {0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
        {0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
        {0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
    };
    Image img(n, n, 0.0f);
    for (const Ellipse& e : table) render(img, e, Compose::add);
    // stacked float adds can land a hair outside [0, 1] in overlap regions
    for (auto& p : img.v) p = std::clamp(p, 0.0f, 1.0f);
    return img;
}

Image random_ellipses(int n, uint64_t seed) {
    std::mt19937_64 rng = make_rng(mix_seed(seed, 0x72616e64));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Image img(n, n, 0.0f);
    render(img, {0.3, 0.85, 0.85, 0.0, 0.0, 0.0}, Compose::add);

    const int count = 4 + static_cast<int>(rng() % 6);  // 4..9
    for (int i = 0; i < count; ++i) {
        Ellipse e;
        const double r = 0.55 * std::sqrt(unit(rng));
        const double th = 2.0 * std::numbers::pi * unit(rng);
        e.x0 = r * std::cos(th);
        e.y0 = r * std::sin(th);
        e.a = 0.06 + 0.24 * unit(rng);
        e.b = 0.06 + 0.24 * unit(rng);
        e.phi_deg = 180.0 * unit(rng);
        e.value = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.1 + 0.3 * unit(rng));
        render(img, e, Compose::add);
    }
    for (auto& p : img.v) p = std::clamp(p, 0.0f, 1.0f);
    return img;
}

Image dental_like(int n, uint64_t seed) {
    std::mt19937_64 rng = make_rng(mix_seed(seed, 0x64656e74));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Image img(n, n, 0.0f);
    render(img, {0.35, 0.80, 0.78, 0.0, -0.02, 0.0}, Compose::add);   // soft tissue
    render(img, {0.15, 0.30, 0.22, 0.0, 0.08, 0.0}, Compose::add);    // palate/tongue

    // teeth on a lower arc, max-composited so their level is guaranteed
    const int n_teeth = 9 + static_cast<int>(rng() % 3);  // 9..11
    const double arc_r = 0.50 + 0.04 * unit(rng);
    const double a0 = 195.0, a1 = 345.0;
    for (int i = 0; i < n_teeth; ++i) {
        const double ang = (a0 + (a1 - a0) * i / (n_teeth - 1.0)) * std::numbers::pi / 180.0;
        Ellipse t;
        t.x0 = arc_r * std::cos(ang);
        t.y0 = arc_r * std::sin(ang) + 0.12;
        t.a = 0.045 + 0.015 * unit(rng);
        t.b = 0.070 + 0.020 * unit(rng);
        t.phi_deg = ang * 180.0 / std::numbers::pi - 90.0;  // long axis radial
        t.value = 0.85 + 0.10 * unit(rng);
        render(img, t, Compose::max);
    }
    for (auto& p : img.v) p = std::clamp(p, 0.0f, 1.0f);
    return img;
}

}  // namespace

Image generate_phantom(const PhantomSpec& spec) {
    if (spec.image_size < 32)
        throw rejected_input("phantom image_size must be at least 32, got " +
                             std::to_string(spec.image_size));
    if (spec.image_size % 2 != 0)
        throw rejected_input("phantom image_size must be even, got " +
                             std::to_string(spec.image_size));

    switch (spec.kind) {
        case PhantomKind::shepp_logan: return shepp_logan(spec.image_size);
        case PhantomKind::random_ellipses: return random_ellipses(spec.image_size, spec.seed);
        case PhantomKind::dental_like: return dental_like(spec.image_size, spec.seed);
    }
    throw rejected_input("bad phantom kind value");
}

}  // namespace pwdlact
