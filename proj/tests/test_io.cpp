#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "pwdlact/grid.hpp"
#include "pwdlact/io.hpp"

using namespace pwdlact;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path p;
    TempDir() {
        p = fs::temp_directory_path() / ("pwdlact_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(p);
    }
    ~TempDir() { fs::remove_all(p); }
    std::string file(const std::string& name) const { return (p / name).string(); }
};

}  // namespace

TEST_CASE("image round trip is bitwise") {
    TempDir td;
    Image img(6, 4);
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> d(-3.0f, 3.0f);
    for (auto& x : img.v) x = d(rng);
    img.value_min = -1.25f;
    img.value_max = 2.5f;

    const std::string path = td.file("img.f32");
    save_image(path, img);
    Image back = load_image(path);

    CHECK(back.h == img.h);
    CHECK(back.w == img.w);
    CHECK(back.v == img.v);
    CHECK(back.value_min == img.value_min);
    CHECK(back.value_max == img.value_max);
}

TEST_CASE("payload bytes are raw little-endian f32 row-major") {
    TempDir td;
    Image img(2, 2);
    img.v = {1.0f, 2.0f, -3.5f, 0.25f};
    const std::string path = td.file("img.f32");
    save_image(path, img);

    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    unsigned char bytes[16];
    f.read(reinterpret_cast<char*>(bytes), 16);
    REQUIRE(bool(f));
    // 1.0f = 00 00 80 3f little-endian
    CHECK(bytes[0] == 0x00);
    CHECK(bytes[1] == 0x00);
    CHECK(bytes[2] == 0x80);
    CHECK(bytes[3] == 0x3f);
    // 2.0f = 00 00 00 40
    CHECK(bytes[7] == 0x40);
}

TEST_CASE("sinogram round trip preserves geometry and mask") {
    TempDir td;
    Geometry g = Geometry::uniform(32, 24);
    Sinogram s(g);
    std::mt19937 rng(9);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (auto& x : s.v) x = d(rng);
    AngularMask m;
    m.flags.assign(24, 0);
    for (int a = 0; a < 9; ++a) m.flags[a] = 1;

    const std::string path = td.file("sino.f32");
    save_sinogram(path, s, &m);
    LoadedSinogram back = load_sinogram(path);

    CHECK(back.sino.geom == g);
    CHECK(back.sino.v == s.v);
    REQUIRE(back.mask.has_value());
    CHECK(back.mask->flags == m.flags);

    SUBCASE("mask line is optional") {
        save_sinogram(path, s);
        CHECK_FALSE(load_sinogram(path).mask.has_value());
    }
}

TEST_CASE("loaders reject corrupt inputs with the file named") {
    TempDir td;
    Image img(4, 4, 0.5f);
    const std::string path = td.file("img.f32");
    save_image(path, img);

    SUBCASE("missing payload") {
        fs::remove(path);
        CHECK_THROWS_AS(load_image(path), io_error);
    }
    SUBCASE("missing sidecar") {
        fs::remove(path + ".meta");
        CHECK_THROWS_AS(load_image(path), io_error);
    }
    SUBCASE("payload size mismatch names the file") {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write("\0\0\0\0", 4);
        f.close();
        try {
            load_image(path);
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(std::string(e.what()).find("img.f32") != std::string::npos);
        }
    }
    SUBCASE("wrong type tag") {
        std::ofstream m(path + ".meta", std::ios::trunc);
        m << "type sinogram\nshape 4 4\n";
        m.close();
        CHECK_THROWS_AS(load_image(path), io_error);
    }
    SUBCASE("malformed shape") {
        std::ofstream m(path + ".meta", std::ios::trunc);
        m << "type image\nshape 4\nvalue_range 0 1\n";
        m.close();
        CHECK_THROWS_AS(load_image(path), io_error);
    }
}

TEST_CASE("sinogram loader validates the recorded geometry") {
    TempDir td;
    Geometry g = Geometry::uniform(32, 8);
    Sinogram s(g, 1.0f);
    const std::string path = td.file("sino.f32");
    save_sinogram(path, s);

    // tamper: drop one angle from the list
    std::ifstream in(path + ".meta");
    std::string meta((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = meta.rfind(' ');
    meta.erase(pos);
    std::ofstream out(path + ".meta", std::ios::trunc);
    out << meta << '\n';
    out.close();

    CHECK_THROWS_AS(load_sinogram(path), io_error);
}
