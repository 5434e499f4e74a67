#include "pwdlact/io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace pwdlact {

void write_f32(const std::string& path, const float* data, size_t count) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    if (!f) throw io_error("short write: " + path);
}

std::vector<float> read_f32(const std::string& path, size_t expect_count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != expect_count * 4)
        throw io_error("payload size mismatch in " + path + ": expected " +
                       std::to_string(expect_count * 4) + " bytes, found " +
                       std::to_string(bytes));
    f.seekg(0);
    std::vector<float> out(expect_count);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw io_error("short read: " + path);
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_float(float v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// sidecar = ordered list of (key, rest-of-line) pairs
using Meta = std::vector<std::pair<std::string, std::string>>;

Meta read_meta(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open sidecar: " + path);
    Meta meta;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        std::string rest;
        std::getline(ss, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        meta.emplace_back(key, rest);
    }
    return meta;
}

const std::string* find_key(const Meta& meta, const std::string& key) {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

const std::string& need_key(const Meta& meta, const std::string& key, const std::string& path) {
    const std::string* v = find_key(meta, key);
    if (!v) throw io_error("sidecar " + path + " is missing key '" + key + "'");
    return *v;
}

}  // namespace

void save_image(const std::string& path, const Image& img) {
    write_f32(path, img.v.data(), img.size());
    std::ofstream m(path + ".meta");
    if (!m) throw io_error("cannot open for writing: " + path + ".meta");
    m << "type image\n";
    m << "shape " << img.h << ' ' << img.w << '\n';
    m << "value_range " << fmt_float(img.value_min) << ' ' << fmt_float(img.value_max) << '\n';
    if (!m) throw io_error("short write: " + path + ".meta");
}

Image load_image(const std::string& path) {
    const std::string mp = path + ".meta";
    Meta meta = read_meta(mp);
    if (need_key(meta, "type", mp) != "image")
        throw io_error("sidecar " + mp + " is not an image (type '" +
                       need_key(meta, "type", mp) + "')");

    std::istringstream sh(need_key(meta, "shape", mp));
    int h = 0, w = 0;
    if (!(sh >> h >> w) || h <= 0 || w <= 0)
        throw io_error("sidecar " + mp + " has a malformed shape line");

    Image img(h, w);
    std::istringstream vr(need_key(meta, "value_range", mp));
    if (!(vr >> img.value_min >> img.value_max))
        throw io_error("sidecar " + mp + " has a malformed value_range line");

    img.v = read_f32(path, static_cast<size_t>(h) * w);
    return img;
}

void save_sinogram(const std::string& path, const Sinogram& sino, const AngularMask* mask) {
    sino.geom.validate();
    write_f32(path, sino.v.data(), sino.size());

    std::ofstream m(path + ".meta");
    if (!m) throw io_error("cannot open for writing: " + path + ".meta");
    m << "type sinogram\n";
    m << "shape " << sino.geom.n_detectors << ' ' << sino.geom.n_angles() << '\n';
    m << "image_size " << sino.geom.image_size << '\n';
    m << "detector_spacing " << fmt_double(sino.geom.detector_spacing) << '\n';
    m << "angles_deg";
    for (double a : sino.geom.angles_deg) m << ' ' << fmt_double(a);
    m << '\n';
    if (mask) {
        if (static_cast<int>(mask->flags.size()) != sino.geom.n_angles())
            throw io_error("mask length does not match sinogram angles: " + path);
        m << "mask ";
        for (uint8_t f : mask->flags) m << (f ? '1' : '0');
        m << '\n';
    }
    if (!m) throw io_error("short write: " + path + ".meta");
}

LoadedSinogram load_sinogram(const std::string& path) {
    const std::string mp = path + ".meta";
    Meta meta = read_meta(mp);
    if (need_key(meta, "type", mp) != "sinogram")
        throw io_error("sidecar " + mp + " is not a sinogram (type '" +
                       need_key(meta, "type", mp) + "')");

    LoadedSinogram out;
    Geometry g;
    std::istringstream sh(need_key(meta, "shape", mp));
    int na = 0;
    if (!(sh >> g.n_detectors >> na) || g.n_detectors <= 0 || na <= 0)
        throw io_error("sidecar " + mp + " has a malformed shape line");
    {
        std::istringstream ss(need_key(meta, "image_size", mp));
        if (!(ss >> g.image_size)) throw io_error("sidecar " + mp + " has a malformed image_size");
    }
    {
        std::istringstream ss(need_key(meta, "detector_spacing", mp));
        if (!(ss >> g.detector_spacing))
            throw io_error("sidecar " + mp + " has a malformed detector_spacing");
    }
    {
        std::istringstream ss(need_key(meta, "angles_deg", mp));
        double a;
        while (ss >> a) g.angles_deg.push_back(a);
        if (g.n_angles() != na)
            throw io_error("sidecar " + mp + " angle list length " +
                           std::to_string(g.n_angles()) + " does not match shape " +
                           std::to_string(na));
    }
    try {
        g.validate();
    } catch (const rejected_input& e) {
        throw io_error("sidecar " + mp + " holds an invalid geometry: " + e.what());
    }

    out.sino = Sinogram(g);
    out.sino.v = read_f32(path, out.sino.size());

    if (const std::string* ms = find_key(meta, "mask")) {
        AngularMask mask;
        for (char c : *ms) {
            if (c == '0' || c == '1') mask.flags.push_back(c == '1');
            else if (!std::isspace(static_cast<unsigned char>(c)))
                throw io_error("sidecar " + mp + " has a malformed mask line");
        }
        if (static_cast<int>(mask.flags.size()) != na)
            throw io_error("sidecar " + mp + " mask length does not match angle count");
        out.mask = std::move(mask);
    }
    return out;
}

}  // namespace pwdlact
