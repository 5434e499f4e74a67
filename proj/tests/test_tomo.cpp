#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pwdlact/grid.hpp"
#include "pwdlact/tomo.hpp"

using namespace pwdlact;

namespace {

// Independent ray-sum oracle: recomputes one detector reading from scratch
// (absolute sample positions, own interpolation code) under the documented
// convention: samples every 0.5 px over the full diagonal, zero off-grid.
double oracle_ray(const Image& img, const Geometry& g, int angle_idx, int det) {
    const double th = g.angles_deg[angle_idx] * std::numbers::pi / 180.0;
    const double s = (det - (g.n_detectors - 1) / 2.0) * g.detector_spacing;
    const double half_diag = g.image_size * std::numbers::sqrt2 / 2.0;
    const int n = static_cast<int>(std::floor(4.0 * half_diag)) + 1;  // 0.5 px steps
    const double cx = (img.w - 1) / 2.0;
    const double cy = (img.h - 1) / 2.0;

    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const double t = -half_diag + 0.5 * k;
        const double x = cx + s * std::cos(th) - t * std::sin(th);
        const double y = cy + s * std::sin(th) + t * std::cos(th);
        if (x < 0.0 || x > img.w - 1 || y < 0.0 || y > img.h - 1) continue;
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const int x1 = std::min(x0 + 1, img.w - 1);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double fx = x - x0, fy = y - y0;
        acc += (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
               fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
    }
    return acc * 0.5;
}

Image random_image(int n, unsigned seed, float lo = 0.0f, float hi = 1.0f) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    Image img(n, n);
    for (auto& x : img.v) x = dist(rng);
    return img;
}

Sinogram random_sino(const Geometry& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Sinogram s(g);
    for (auto& x : s.v) x = dist(rng);
    return s;
}

// Centered circularly symmetric disk with a smooth cubic edge roll-off.
Image smooth_disk(int n, double radius, double edge) {
    Image img(n, n);
    const double c = (n - 1) / 2.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double rho = std::hypot(y - c, x - c);
            double u = (radius - rho) / edge + 0.5;
            u = std::clamp(u, 0.0, 1.0);
            img.at(y, x) = static_cast<float>(u * u * (3.0 - 2.0 * u));
        }
    }
    return img;
}

// Smooth bump phantom: a few Gaussians well inside the field of view.
Image gaussian_phantom(int n) {
    Image img(n, n);
    const double c = (n - 1) / 2.0;
    const struct { double dy, dx, sig, amp; } blobs[] = {
        {0.0, 0.0, n / 4.5, 0.8},
        {-n / 8.0, n / 10.0, n / 12.0, 0.5},
        {n / 7.0, -n / 9.0, n / 14.0, 0.4},
    };
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double v = 0.0;
            for (const auto& b : blobs) {
                const double dy = y - c - b.dy, dx = x - c - b.dx;
                v += b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sig * b.sig));
            }
            img.at(y, x) = static_cast<float>(v);
        }
    }
    return img;
}

double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

double l2(const std::vector<float>& a) { return std::sqrt(dot(a, a)); }

double max_abs(const std::vector<float>& a) {
    double m = 0.0;
    for (float x : a) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

AngularMask complement(const AngularMask& m) {
    AngularMask out = m;
    for (auto& f : out.flags) f = f ? 0 : 1;
    return out;
}

}  // namespace

TEST_CASE("radon rejects shape mismatch and non-finite pixels") {
    Geometry g = Geometry::uniform(64, 32);
    CHECK_THROWS_AS(radon(Image(32, 32), g), rejected_input);
    Image img(64, 64, 0.0f);
    img.at(1, 1) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(radon(img, g), rejected_input);
}

TEST_CASE("radon of the zero image is the zero sinogram") {
    Geometry g = Geometry::uniform(64, 48);
    Sinogram s = radon(Image(64, 64, 0.0f), g);
    CHECK(max_abs(s.v) == 0.0);
}

TEST_CASE("radon is linear") {
    Geometry g = Geometry::uniform(64, 48);
    Image x1 = random_image(64, 11);
    Image x2 = random_image(64, 22);
    const float a = 1.7f, b = -0.6f;

    Image comb(64, 64);
    for (size_t i = 0; i < comb.size(); ++i) comb.v[i] = a * x1.v[i] + b * x2.v[i];

    Sinogram lhs = radon(comb, g);
    Sinogram s1 = radon(x1, g), s2 = radon(x2, g);
    std::vector<float> rhs(lhs.size());
    for (size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * s1.v[i] + b * s2.v[i];

    CHECK(max_abs_diff(lhs.v, rhs) <= 1e-6 * std::max(1.0, max_abs(lhs.v)));
}

TEST_CASE("radon matches the independent ray-sum oracle") {
    Geometry g = Geometry::uniform(64, 90);
    Image img = random_image(64, 33);
    Sinogram s = radon(img, g);

    for (int angle_idx : {0, 37}) {
        for (int det = 0; det < g.n_detectors; det += 3) {
            const double want = oracle_ray(img, g, angle_idx, det);
            CHECK(std::abs(s.at(det, angle_idx) - want) <= 1e-5 * std::max(1.0, std::abs(want)));
        }
    }
}

TEST_CASE("projections of a centered disk are angle-invariant") {
    const int n = 128;
    Geometry g = Geometry::uniform(n, 180);
    Image disk = smooth_disk(n, n * 0.31, 16.0);
    Sinogram s = radon(disk, g);

    const double peak = max_abs(s.v);
    REQUIRE(peak > 1.0);
    double dev = 0.0;
    for (int d = 0; d < g.n_detectors; ++d) {
        float lo = s.at(d, 0), hi = s.at(d, 0);
        for (int a = 1; a < g.n_angles(); ++a) {
            lo = std::min(lo, s.at(d, a));
            hi = std::max(hi, s.at(d, a));
        }
        dev = std::max(dev, static_cast<double>(hi - lo));
    }
    CHECK(dev < 1e-3 * peak);
}

TEST_CASE("make_mask keeps the closed interval") {
    Geometry g = Geometry::uniform(64, 360);  // 1 degree apart

    SUBCASE("full range is all ones") {
        AngularMask m = make_mask(g, 0.0, 360.0);
        CHECK(m.n_kept() == 360);
    }
    SUBCASE("[0, 90] keeps 91 angles") {
        AngularMask m = make_mask(g, 0.0, 90.0);
        CHECK(m.n_kept() == 91);
        CHECK(m.flags[90] == 1);
        CHECK(m.flags[91] == 0);
    }
    SUBCASE("[0, 120] keeps 121 angles") {
        CHECK(make_mask(g, 0.0, 120.0).n_kept() == 121);
    }
    SUBCASE("bad intervals are rejected") {
        CHECK_THROWS_AS(make_mask(g, 120.0, 90.0), rejected_input);
        CHECK_THROWS_AS(make_mask(g, -5.0, 90.0), rejected_input);
        CHECK_THROWS_AS(make_mask(g, 0.0, 400.0), rejected_input);
    }
}

TEST_CASE("apply_mask zeroes dropped views and nothing else") {
    Geometry g = Geometry::uniform(32, 16);
    Sinogram y = random_sino(g, 5);

    SUBCASE("all-ones mask is the identity") {
        AngularMask ones = make_mask(g, 0.0, 360.0);
        CHECK(apply_mask(y, ones).v == y.v);
    }
    SUBCASE("single kept view leaves one nonzero column") {
        AngularMask m;
        m.flags.assign(16, 0);
        m.flags[7] = 1;
        Sinogram z = apply_mask(y, m);
        for (int a = 0; a < 16; ++a) {
            for (int d = 0; d < g.n_detectors; ++d) {
                if (a == 7)
                    CHECK(z.at(d, a) == y.at(d, a));
                else
                    CHECK(z.at(d, a) == 0.0f);
            }
        }
    }
    SUBCASE("complementary masks partition the sinogram exactly") {
        AngularMask m = make_mask(g, 0.0, 90.0);
        Sinogram za = apply_mask(y, m);
        Sinogram zb = apply_mask(y, complement(m));
        for (size_t i = 0; i < y.size(); ++i) CHECK(za.v[i] + zb.v[i] == y.v[i]);
    }
    SUBCASE("idempotent") {
        AngularMask m = make_mask(g, 0.0, 120.0);
        Sinogram once = apply_mask(y, m);
        CHECK(apply_mask(once, m).v == once.v);
    }
    SUBCASE("length mismatch rejected") {
        AngularMask m;
        m.flags.assign(15, 1);
        CHECK_THROWS_AS(apply_mask(y, m), rejected_input);
    }
}

TEST_CASE("fbp basics") {
    Geometry g = Geometry::uniform(64, 90);

    SUBCASE("unknown filter name rejected") {
        CHECK(fbp_filter_from_name("ram-lak") == FbpFilter::ram_lak);
        CHECK(fbp_filter_from_name("hann") == FbpFilter::hann);
        CHECK_THROWS_AS(fbp_filter_from_name("shepp"), rejected_input);
    }
    SUBCASE("zero sinogram gives the zero image") {
        Image out = fbp(Sinogram(g));
        CHECK(max_abs(out.v) == 0.0);
    }
    SUBCASE("linear in the sinogram") {
        Sinogram y1 = random_sino(g, 1), y2 = random_sino(g, 2);
        Sinogram ysum(g);
        for (size_t i = 0; i < ysum.size(); ++i) ysum.v[i] = y1.v[i] + y2.v[i];

        Image lhs = fbp(ysum);
        Image f1 = fbp(y1), f2 = fbp(y2);
        std::vector<float> rhs(lhs.size());
        for (size_t i = 0; i < rhs.size(); ++i) rhs[i] = f1.v[i] + f2.v[i];
        CHECK(max_abs_diff(lhs.v, rhs) <= 1e-6 * std::max(1.0, max_abs(lhs.v)));
    }
    SUBCASE("output is zero outside the field of view") {
        Image out = fbp(random_sino(g, 9));
        CHECK(out.at(0, 0) == 0.0f);
        CHECK(out.at(0, 63) == 0.0f);
        CHECK(out.at(63, 0) == 0.0f);
        CHECK(out.at(63, 63) == 0.0f);
    }
}

TEST_CASE("fbp round trip recovers a smooth phantom inside the field of view") {
    const int n = 128;
    Geometry g = Geometry::uniform(n, 360);
    Image ph = gaussian_phantom(n);
    Image rec = fbp(radon(ph, g));

    double mse = 0.0;
    int count = 0;
    float lo = ph.v[0], hi = ph.v[0];
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (!in_fov(y, x, n)) continue;
            const double d = rec.at(y, x) - ph.at(y, x);
            mse += d * d;
            ++count;
            lo = std::min(lo, ph.at(y, x));
            hi = std::max(hi, ph.at(y, x));
        }
    }
    mse /= count;
    const double range = hi - lo;
    const double psnr = 10.0 * std::log10(range * range / mse);
    INFO("full-view round-trip psnr = ", psnr);
    CHECK(psnr >= 30.0);

    SUBCASE("hann variant also reconstructs, slightly smoother") {
        Image rec_h = fbp(radon(ph, g), FbpFilter::hann);
        double mse_h = 0.0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (in_fov(y, x, n)) {
                    const double d = rec_h.at(y, x) - ph.at(y, x);
                    mse_h += d * d;
                }
        mse_h /= count;
        const double psnr_h = 10.0 * std::log10(range * range / mse_h);
        INFO("hann round-trip psnr = ", psnr_h);
        CHECK(psnr_h >= 25.0);
        CHECK(max_abs_diff(rec.v, rec_h.v) > 0.0);  // genuinely different filters
    }
}

TEST_CASE("masked fbp splits additively over complementary masks") {
    Geometry g = Geometry::uniform(64, 180);
    Sinogram y = radon(random_image(64, 77), g);
    AngularMask m = make_mask(g, 0.0, 90.0);

    Image fa = fbp(apply_mask(y, m));
    Image fb = fbp(apply_mask(y, complement(m)));
    Image full = fbp(y);

    std::vector<float> sum(full.size());
    for (size_t i = 0; i < sum.size(); ++i) sum[i] = fa.v[i] + fb.v[i];
    CHECK(max_abs_diff(sum, full.v) <= 1e-6 * std::max(1.0, max_abs(full.v)));
}

TEST_CASE("backproject is the exact adjoint of radon") {
    Geometry g = Geometry::uniform(64, 90);
    Image x = random_image(64, 101, -1.0f, 1.0f);
    Sinogram y = random_sino(g, 202);

    const double lhs = dot(radon(x, g).v, y.v);
    const double rhs = dot(x.v, backproject(y).v);
    CHECK(std::abs(lhs - rhs) <= 1e-4 * std::max(std::abs(lhs), std::abs(rhs)));
}

namespace {

// largest eigenvalue of P A^T M A P by power iteration (for step sizing)
double lipschitz_estimate(const Geometry& g, const AngularMask& m) {
    Image v = random_image(g.image_size, 999, -1.0f, 1.0f);
    apply_fov(v);
    double lam = 1.0;
    for (int it = 0; it < 12; ++it) {
        Image w = backproject(apply_mask(radon(v, g), m));
        apply_fov(w);
        lam = l2(w.v) / std::max(l2(v.v), 1e-30);
        double nw = l2(w.v);
        for (auto& t : w.v) t = static_cast<float>(t / nw);
        v = std::move(w);
    }
    return lam;
}

}  // namespace

TEST_CASE("tv_recon first step from zero is the scaled masked backprojection") {
    Geometry g = Geometry::uniform(48, 60);
    Sinogram y = radon(gaussian_phantom(48), g);
    AngularMask m = make_mask(g, 0.0, 90.0);

    TvReconOptions opt;
    opt.lambda = 0.05;  // TV gradient vanishes at the zero image
    opt.n_iters = 1;
    opt.step = 2.5e-4;
    Image got = tv_recon(y, m, opt).image;

    Image want = backproject(apply_mask(y, m));
    for (auto& t : want.v) t = static_cast<float>(opt.step * static_cast<double>(t));
    apply_fov(want);

    CHECK(max_abs_diff(got.v, want.v) == 0.0);
}

TEST_CASE("tv_recon objective is non-increasing for a stable step") {
    Geometry g = Geometry::uniform(48, 60);
    Image ph = gaussian_phantom(48);
    Sinogram y = radon(ph, g);
    AngularMask m = make_mask(g, 0.0, 120.0);
    const double lam_max = lipschitz_estimate(g, m);

    TvReconOptions opt;
    opt.lambda = 1e-3;
    opt.n_iters = 20;
    opt.step = 0.9 / lam_max;
    TvReconResult res = tv_recon(apply_mask(y, m), m, opt);

    REQUIRE(res.objective.size() == 20);
    for (size_t i = 1; i < res.objective.size(); ++i)
        CHECK(res.objective[i] <= res.objective[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("tv_recon beats the fbp residual on consistent full-mask data") {
    Geometry g = Geometry::uniform(48, 60);
    Image ph = gaussian_phantom(48);
    apply_fov(ph);
    Sinogram y = radon(ph, g);
    AngularMask full = make_mask(g, 0.0, 360.0);
    const double lam_max = lipschitz_estimate(g, full);

    TvReconOptions opt;
    opt.lambda = 0.0;
    opt.n_iters = 120;
    opt.step = 1.6 / lam_max;
    Image x_tv = tv_recon(y, full, opt).image;

    auto residual = [&](const Image& x) {
        Sinogram ax = radon(x, g);
        double s = 0.0;
        for (size_t i = 0; i < ax.size(); ++i) {
            const double d = ax.v[i] - y.v[i];
            s += d * d;
        }
        return std::sqrt(s);
    };

    const double r_tv = residual(x_tv);
    const double r_fbp = residual(fbp(y));
    INFO("tv residual = ", r_tv, ", fbp residual = ", r_fbp);
    CHECK(r_tv < r_fbp);
}

TEST_CASE("tv_recon shrinks toward zero on a zero sinogram") {
    Geometry g = Geometry::uniform(32, 24);
    Sinogram zero(g);
    AngularMask full = make_mask(g, 0.0, 360.0);
    const double lam_max = lipschitz_estimate(g, full);

    Image init = gaussian_phantom(32);
    double prev = l2(init.v);
    for (int iters : {3, 9, 27}) {
        TvReconOptions opt;
        opt.lambda = 1e-2;
        opt.n_iters = iters;
        opt.step = 0.9 / lam_max;
        opt.init = &init;
        const double nrm = l2(tv_recon(zero, full, opt).image.v);
        CHECK(nrm < prev);
        prev = nrm;
    }
}

TEST_CASE("tv_recon reports divergence naming the step size") {
    Geometry g = Geometry::uniform(32, 24);
    Sinogram y = radon(gaussian_phantom(32), g);
    AngularMask full = make_mask(g, 0.0, 360.0);

    TvReconOptions opt;
    opt.n_iters = 200;
    opt.step = 50.0;  // far beyond stable
    try {
        tv_recon(y, full, opt);
        FAIL("expected divergence");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("tv_recon validates its options") {
    Geometry g = Geometry::uniform(32, 24);
    Sinogram y(g);
    AngularMask full = make_mask(g, 0.0, 360.0);
    TvReconOptions opt;

    opt.n_iters = 0;
    CHECK_THROWS_AS(tv_recon(y, full, opt), rejected_input);
    opt.n_iters = 1;
    opt.step = -1.0;
    CHECK_THROWS_AS(tv_recon(y, full, opt), rejected_input);
    opt.step = 1e-3;
    opt.lambda = -0.1;
    CHECK_THROWS_AS(tv_recon(y, full, opt), rejected_input);
}
