#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "pwdlact/dataset.hpp"
#include "pwdlact/io.hpp"
#include "pwdlact/phantom.hpp"
#include "pwdlact/tomo.hpp"

using namespace pwdlact;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path p;
    TempDir() {
        p = fs::temp_directory_path() / ("pwdlact_data_" + std::to_string(std::random_device{}()));
        fs::create_directories(p);
    }
    ~TempDir() { fs::remove_all(p); }
    std::string str() const { return p.string(); }
};

double psnr2(const Image& a, const Image& b) {  // range-2 convention used downstream
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    return 10.0 * std::log10(4.0 / mse);
}

// connected components of pixels >= thresh (4-neighborhood); returns centroids
std::vector<std::pair<double, double>> bright_blobs(const Image& img, float thresh) {
    std::vector<int> label(img.size(), 0);
    std::vector<std::pair<double, double>> centroids;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const size_t i = static_cast<size_t>(y) * img.w + x;
            if (img.v[i] < thresh || label[i]) continue;
            double sy = 0, sx = 0;
            int cnt = 0;
            std::vector<std::pair<int, int>> stack{{y, x}};
            label[i] = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                sy += cy;
                sx += cx;
                ++cnt;
                const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || nx < 0 || ny >= img.h || nx >= img.w) continue;
                    const size_t j = static_cast<size_t>(ny) * img.w + nx;
                    if (img.v[j] >= thresh && !label[j]) {
                        label[j] = 1;
                        stack.emplace_back(ny, nx);
                    }
                }
            }
            if (cnt >= 4) centroids.emplace_back(sy / cnt, sx / cnt);
        }
    }
    return centroids;
}

}  // namespace

TEST_CASE("phantoms are deterministic for a fixed spec") {
    for (PhantomKind k :
         {PhantomKind::shepp_logan, PhantomKind::random_ellipses, PhantomKind::dental_like}) {
        PhantomSpec spec{k, 64, 42};
        Image a = generate_phantom(spec);
        Image b = generate_phantom(spec);
        CHECK(a.v == b.v);
    }
}

TEST_CASE("phantom values stay in [0, 1]") {
    for (PhantomKind k :
         {PhantomKind::shepp_logan, PhantomKind::random_ellipses, PhantomKind::dental_like}) {
        for (uint64_t seed : {0ULL, 7ULL, 99ULL}) {
            Image img = generate_phantom({k, 64, seed});
            auto [lo, hi] = min_max(img.v);
            CHECK(lo >= 0.0f);
            CHECK(hi <= 1.0f);
        }
    }
}

TEST_CASE("shepp-logan at 128 attains the full range") {
    Image img = generate_phantom({PhantomKind::shepp_logan, 128, 0});
    auto [lo, hi] = min_max(img.v);
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
}

TEST_CASE("random-ellipses differ across seeds") {
    Image a = generate_phantom({PhantomKind::random_ellipses, 64, 1});
    Image b = generate_phantom({PhantomKind::random_ellipses, 64, 2});
    double l2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        l2 += d * d;
    }
    CHECK(l2 > 0.0);
}

TEST_CASE("bad phantom sizes are rejected") {
    CHECK_THROWS_AS(generate_phantom({PhantomKind::shepp_logan, 127, 0}), rejected_input);
    CHECK_THROWS_AS(generate_phantom({PhantomKind::shepp_logan, 16, 0}), rejected_input);
    CHECK_THROWS_AS(phantom_kind_from_name("squares"), rejected_input);
}

TEST_CASE("dental-like has at least 8 bright teeth arranged on an arc") {
    for (uint64_t seed : {0ULL, 5ULL}) {
        Image img = generate_phantom({PhantomKind::dental_like, 128, seed});
        auto blobs = bright_blobs(img, 0.8f);
        REQUIRE(blobs.size() >= 8);

        // circle fit (least squares); all centroids must sit near one radius
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, sxz = 0, syz = 0, sz = 0;
        for (auto [y, x] : blobs) {
            const double z = x * x + y * y;
            sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
            sxz += x * z; syz += y * z; sz += z;
        }
        const double n = static_cast<double>(blobs.size());
        // solve [2sxx 2sxy sx; 2sxy 2syy sy; 2sx 2sy n] [a b c] = [sxz syz sz]
        double A[3][4] = {{2 * sxx, 2 * sxy, sx, sxz},
                          {2 * sxy, 2 * syy, sy, syz},
                          {2 * sx, 2 * sy, n, sz}};
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int r = col + 1; r < 3; ++r)
                if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
            std::swap(A[col], A[piv]);
            for (int r = 0; r < 3; ++r) {
                if (r == col) continue;
                const double f = A[r][col] / A[col][col];
                for (int cc = col; cc < 4; ++cc) A[r][cc] -= f * A[col][cc];
            }
        }
        const double ca = A[0][3] / A[0][0], cb = A[1][3] / A[1][1], cc = A[2][3] / A[2][2];
        const double radius = std::sqrt(cc + ca * ca + cb * cb);
        REQUIRE(radius > 4.0);
        for (auto [y, x] : blobs) {
            const double r = std::hypot(x - ca, y - cb);
            CHECK(std::abs(r - radius) < 0.15 * radius);
        }
    }
}

TEST_CASE("build_pair with the full range reproduces the target as prior") {
    Geometry g = Geometry::uniform(48, 96);
    Image ph = generate_phantom({PhantomKind::random_ellipses, 48, 3});
    PairedSample s = build_pair(ph, g, 0.0, 360.0, 0.0, 1);
    CHECK(s.prior.v == s.target.v);
    auto [lo, hi] = min_max(s.target.v);
    CHECK(lo == doctest::Approx(-1.0f));
    CHECK(hi == doctest::Approx(1.0f));
}

TEST_CASE("limited-angle prior is degraded but finite") {
    Geometry g = Geometry::uniform(128, 360);
    Image ph = generate_phantom({PhantomKind::dental_like, 128, 11});
    PairedSample s = build_pair(ph, g, 0.0, 90.0, 0.0, 1);

    double diff = 0.0;
    for (size_t i = 0; i < s.prior.size(); ++i) diff += std::abs(s.prior.v[i] - s.target.v[i]);
    CHECK(diff > 0.0);

    const double p = psnr2(s.prior, s.target);
    INFO("prior-vs-target psnr = ", p);
    CHECK(std::isfinite(p));
    CHECK(p < 30.0);
    CHECK(p > 5.0);
}

TEST_CASE("wedge prior doubles the view weight when the opposite view is missing") {
    // every view in [0, 90] has its opposite in [180, 270], outside the mask,
    // so the prior must equal the masked fbp with twice the angular measure
    Geometry g = Geometry::uniform(64, 120);
    Image ph = generate_phantom({PhantomKind::dental_like, 64, 9});
    PairedSample s = build_pair(ph, g, 0.0, 90.0, 0.0, 1);

    Sinogram sino = radon(ph, g);
    Image expect = fbp(apply_mask(sino, make_mask(g, 0.0, 90.0)));
    for (auto& v : expect.v) v *= 2.0f;
    auto [lo, hi] = min_max(fbp(sino).v);
    normalize(expect, norm_from_range(lo, hi));
    CHECK(s.prior.v == expect.v);
}

TEST_CASE("build_pair is deterministic, including the noise draw") {
    Geometry g = Geometry::uniform(48, 96);
    Image ph = generate_phantom({PhantomKind::dental_like, 48, 4});
    PairedSample a = build_pair(ph, g, 0.0, 120.0, 0.02, 77);
    PairedSample b = build_pair(ph, g, 0.0, 120.0, 0.02, 77);
    CHECK(a.target.v == b.target.v);
    CHECK(a.prior.v == b.prior.v);
    CHECK(a.sinogram.v == b.sinogram.v);

    PairedSample c = build_pair(ph, g, 0.0, 120.0, 0.02, 78);
    CHECK(a.sinogram.v != c.sinogram.v);
}

TEST_CASE("normalization round trips") {
    NormParams n = norm_from_range(-0.37f, 2.21f);
    Image img(8, 8);
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> d(-0.37f, 2.21f);
    for (auto& x : img.v) x = d(rng);
    Image orig = img;
    normalize(img, n);
    auto [lo, hi] = min_max(img.v);
    CHECK(lo >= -1.0f - 1e-6f);
    CHECK(hi <= 1.0f + 1e-6f);
    denormalize(img, n);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(img.v[i] == doctest::Approx(orig.v[i]).epsilon(1e-6));

    CHECK_THROWS_AS(norm_from_range(1.0f, 1.0f), rejected_input);
}

TEST_CASE("dataset persistence round trips bitwise") {
    TempDir td;
    Geometry g = Geometry::uniform(48, 96);
    std::vector<PairedSample> samples;
    NormParams shared = norm_from_range(0.0f, 1.5f);
    for (int i = 0; i < 4; ++i) {
        Image ph = generate_phantom(
            {i % 2 ? PhantomKind::dental_like : PhantomKind::random_ellipses, 48, 100ULL + i});
        samples.push_back(build_pair(ph, g, 0.0, i < 2 ? 90.0 : 120.0, 0.01, 50 + i, &shared));
    }

    DatasetManifest m = persist_dataset(samples, g, td.str());
    CHECK(m.n_samples == 4);
    CHECK(m.angle_ranges.size() == 2);

    DatasetManifest m2;
    std::vector<PairedSample> back = load_dataset(td.str(), &m2);
    REQUIRE(back.size() == 4);
    CHECK(m2.geom == g);
    CHECK(m2.norm == shared);
    for (int i = 0; i < 4; ++i) {
        CHECK(back[i].target.v == samples[i].target.v);
        CHECK(back[i].prior.v == samples[i].prior.v);
        CHECK(back[i].sinogram.v == samples[i].sinogram.v);
        CHECK(back[i].angle_lo == samples[i].angle_lo);
        CHECK(back[i].angle_hi == samples[i].angle_hi);
        CHECK(back[i].norm == samples[i].norm);
    }
}

TEST_CASE("empty dataset persists and loads") {
    TempDir td;
    Geometry g = Geometry::uniform(48, 96);
    DatasetManifest m = persist_dataset({}, g, td.str());
    CHECK(m.n_samples == 0);
    CHECK(load_dataset(td.str()).empty());
}

TEST_CASE("corrupt datasets are rejected with the file named") {
    TempDir td;
    Geometry g = Geometry::uniform(48, 96);
    Image ph = generate_phantom({PhantomKind::random_ellipses, 48, 8});
    NormParams shared = norm_from_range(0.0f, 1.0f);
    persist_dataset({build_pair(ph, g, 0.0, 90.0, 0.0, 1, &shared)}, g, td.str());

    SUBCASE("missing manifest") {
        fs::remove(td.p / "manifest.txt");
        CHECK_THROWS_AS(load_dataset(td.str()), io_error);
    }
    SUBCASE("truncated pair file names the file") {
        fs::resize_file(td.p / "pair_00000.bin", 100);
        try {
            load_dataset(td.str());
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(std::string(e.what()).find("pair_00000.bin") != std::string::npos);
        }
    }
    SUBCASE("unknown manifest key") {
        std::ofstream f(td.p / "manifest.txt", std::ios::app);
        f << "surprise 1\n";
        f.close();
        CHECK_THROWS_AS(load_dataset(td.str()), io_error);
    }
    SUBCASE("missing pair file") {
        fs::remove(td.p / "pair_00000.bin");
        CHECK_THROWS_AS(load_dataset(td.str()), io_error);
    }
}

TEST_CASE("built dataset satisfies pairing consistency bitwise") {
    TempDir td;
    DatasetBuildOptions opt;
    opt.n_train = 6;
    opt.n_test = 4;
    opt.image_size = 48;
    opt.n_angles = 96;
    opt.noise_sigma = 0.01;
    opt.seed = 9;
    std::ostringstream log;
    build_dataset(opt, td.str(), log);

    for (const char* split : {"train", "test"}) {
        DatasetManifest m;
        std::vector<PairedSample> samples = load_dataset((td.p / split).string(), &m);
        REQUIRE(!samples.empty());
        for (const PairedSample& s : samples) {
            const AngularMask mask = make_mask(m.geom, s.angle_lo, s.angle_hi);
            Sinogram masked = apply_mask(s.sinogram, mask);
            for (int a = 0; a < m.geom.n_angles(); ++a) {
                if (!mask.flags[a]) continue;
                const double conj = std::fmod(m.geom.angles_deg[a] + 180.0, 360.0);
                if (conj >= s.angle_lo && conj <= s.angle_hi) continue;
                for (int d = 0; d < m.geom.n_detectors; ++d) masked.at(d, a) *= 2.0f;
            }
            Image rederived = fbp(masked);
            normalize(rederived, s.norm);
            CHECK(rederived.v == s.prior.v);

            Image retarget = fbp(s.sinogram);
            normalize(retarget, s.norm);
            CHECK(retarget.v == s.target.v);
        }
    }

    SUBCASE("train and test share one normalization and both angle ranges") {
        DatasetManifest mt = load_manifest((td.p / "train").string());
        DatasetManifest me = load_manifest((td.p / "test").string());
        CHECK(mt.norm == me.norm);
        CHECK(mt.angle_ranges.size() == 2);
        CHECK(me.angle_ranges.size() == 2);
    }
}
