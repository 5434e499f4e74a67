#include "pwdlact/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pwdlact/io.hpp"
#include "pwdlact/rng.hpp"
#include "pwdlact/tomo.hpp"

namespace fs = std::filesystem;

namespace pwdlact {

NormParams norm_from_range(float lo, float hi) {
    if (!(hi > lo)) throw rejected_input("norm_from_range: degenerate value range");
    NormParams n;
    n.shift = 0.5f * (lo + hi);
    n.scale = 2.0f / (hi - lo);
    return n;
}

void normalize(Image& img, const NormParams& n) {
    for (auto& x : img.v) x = (x - n.shift) * n.scale;
    img.value_min = (img.value_min - n.shift) * n.scale;
    img.value_max = (img.value_max - n.shift) * n.scale;
}

void denormalize(Image& img, const NormParams& n) {
    for (auto& x : img.v) x = x / n.scale + n.shift;
    img.value_min = img.value_min / n.scale + n.shift;
    img.value_max = img.value_max / n.scale + n.shift;
}

PairedSample build_pair(const Image& phantom, const Geometry& geom, double angle_lo,
                        double angle_hi, double noise_sigma, uint64_t seed,
                        const NormParams* norm_override) {
    if (noise_sigma < 0.0) throw rejected_input("build_pair: noise_sigma must be non-negative");

    PairedSample s;
    s.angle_lo = angle_lo;
    s.angle_hi = angle_hi;
    s.sinogram = radon(phantom, geom);
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng = make_rng(mix_seed(seed, 0x6e6f6973));
        std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_sigma));
        for (auto& v : s.sinogram.v) v += noise(rng);
    }

    const AngularMask mask = make_mask(geom, angle_lo, angle_hi);
    s.target = fbp(s.sinogram);

    // fbp weighs every view by pi/n_angles, the full-ring convention in which
    // each line shows up twice. A kept view whose opposite view is masked out
    // carries its angular measure alone, so it gets double weight; otherwise
    // the wedge reconstruction comes out uniformly dim.
    Sinogram masked = apply_mask(s.sinogram, mask);
    for (int a = 0; a < geom.n_angles(); ++a) {
        if (!mask.flags[a]) continue;
        const double conj = std::fmod(geom.angles_deg[a] + 180.0, 360.0);
        if (conj >= angle_lo && conj <= angle_hi) continue;
        for (int d = 0; d < geom.n_detectors; ++d) masked.at(d, a) *= 2.0f;
    }
    s.prior = fbp(masked);

    if (norm_override) {
        s.norm = *norm_override;
    } else {
        auto [lo, hi] = min_max(s.target.v);
        s.norm = norm_from_range(lo, hi);
    }
    normalize(s.target, s.norm);
    normalize(s.prior, s.norm);
    s.target.value_min = s.prior.value_min = -1.0f;
    s.target.value_max = s.prior.value_max = 1.0f;
    return s;
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

std::string pair_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pair_%05d.bin", i);
    return buf;
}

size_t pair_bytes(const Geometry& g) {
    const size_t n2 = static_cast<size_t>(g.image_size) * g.image_size;
    const size_t ns = static_cast<size_t>(g.n_detectors) * g.n_angles();
    return 2 * 8 + 2 * 4 + 4 * (2 * n2 + ns);
}

void write_pair(const std::string& path, const PairedSample& s) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for writing: " + path);
    auto put = [&](const void* p, size_t n) { f.write(static_cast<const char*>(p), n); };
    put(&s.angle_lo, 8);
    put(&s.angle_hi, 8);
    put(&s.norm.shift, 4);
    put(&s.norm.scale, 4);
    put(s.target.v.data(), s.target.size() * 4);
    put(s.prior.v.data(), s.prior.size() * 4);
    put(s.sinogram.v.data(), s.sinogram.size() * 4);
    if (!f) throw io_error("short write: " + path);
}

PairedSample read_pair(const std::string& path, const Geometry& g) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != pair_bytes(g))
        throw io_error("pair file size mismatch in " + path + ": expected " +
                       std::to_string(pair_bytes(g)) + " bytes, found " + std::to_string(bytes));
    f.seekg(0);

    PairedSample s;
    s.target = Image(g.image_size, g.image_size);
    s.prior = Image(g.image_size, g.image_size);
    s.sinogram = Sinogram(g);
    auto get = [&](void* p, size_t n) { f.read(static_cast<char*>(p), n); };
    get(&s.angle_lo, 8);
    get(&s.angle_hi, 8);
    get(&s.norm.shift, 4);
    get(&s.norm.scale, 4);
    get(s.target.v.data(), s.target.size() * 4);
    get(s.prior.v.data(), s.prior.size() * 4);
    get(s.sinogram.v.data(), s.sinogram.size() * 4);
    if (!f) throw io_error("short read: " + path);
    s.target.value_min = s.prior.value_min = -1.0f;
    s.target.value_max = s.prior.value_max = 1.0f;
    return s;
}

}  // namespace

DatasetManifest persist_dataset(const std::vector<PairedSample>& samples, const Geometry& geom,
                                const std::string& dir) {
    geom.validate();
    DatasetManifest m;
    m.n_samples = static_cast<int>(samples.size());
    m.geom = geom;
    if (!samples.empty()) m.norm = samples.front().norm;

    for (const PairedSample& s : samples) {
        if (s.sinogram.geom != geom)
            throw rejected_input("persist_dataset: sample geometry differs from dataset geometry");
        if (!(s.norm == m.norm))
            throw rejected_input("persist_dataset: samples must share one normalization");
        const std::pair<double, double> r{s.angle_lo, s.angle_hi};
        bool seen = false;
        for (const auto& q : m.angle_ranges) seen = seen || q == r;
        if (!seen) m.angle_ranges.push_back(r);
    }

    fs::create_directories(dir);
    for (size_t i = 0; i < samples.size(); ++i)
        write_pair((fs::path(dir) / pair_name(static_cast<int>(i))).string(), samples[i]);

    const std::string mp = (fs::path(dir) / "manifest.txt").string();
    std::ofstream f(mp);
    if (!f) throw io_error("cannot open for writing: " + mp);
    f << "format pwdlact-dataset-1\n";
    f << "n_samples " << m.n_samples << '\n';
    f << "image_size " << geom.image_size << '\n';
    f << "n_detectors " << geom.n_detectors << '\n';
    f << "detector_spacing " << fmt_double(geom.detector_spacing) << '\n';
    f << "angles_deg";
    for (double a : geom.angles_deg) f << ' ' << fmt_double(a);
    f << '\n';
    f << "angle_ranges";
    for (const auto& [lo, hi] : m.angle_ranges) f << ' ' << fmt_double(lo) << ':' << fmt_double(hi);
    f << '\n';
    f << "norm_shift " << fmt_float(m.norm.shift) << '\n';
    f << "norm_scale " << fmt_float(m.norm.scale) << '\n';
    if (!f) throw io_error("short write: " + mp);
    return m;
}

DatasetManifest load_manifest(const std::string& dir) {
    const std::string mp = (fs::path(dir) / "manifest.txt").string();
    std::ifstream f(mp);
    if (!f) throw io_error("cannot open manifest: " + mp);

    DatasetManifest m;
    bool have_format = false, have_n = false;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "format") {
            std::string v;
            ss >> v;
            if (v != "pwdlact-dataset-1")
                throw io_error("manifest " + mp + " has unsupported format '" + v + "'");
            have_format = true;
        } else if (key == "n_samples") {
            if (!(ss >> m.n_samples) || m.n_samples < 0)
                throw io_error("manifest " + mp + " has a malformed n_samples line");
            have_n = true;
        } else if (key == "image_size") {
            ss >> m.geom.image_size;
        } else if (key == "n_detectors") {
            ss >> m.geom.n_detectors;
        } else if (key == "detector_spacing") {
            ss >> m.geom.detector_spacing;
        } else if (key == "angles_deg") {
            double a;
            while (ss >> a) m.geom.angles_deg.push_back(a);
        } else if (key == "angle_ranges") {
            std::string tok;
            while (ss >> tok) {
                const auto colon = tok.find(':');
                if (colon == std::string::npos)
                    throw io_error("manifest " + mp + " has a malformed angle_ranges line");
                m.angle_ranges.emplace_back(std::stod(tok.substr(0, colon)),
                                            std::stod(tok.substr(colon + 1)));
            }
        } else if (key == "norm_shift") {
            ss >> m.norm.shift;
        } else if (key == "norm_scale") {
            ss >> m.norm.scale;
        } else {
            throw io_error("manifest " + mp + " has unknown key '" + key + "'");
        }
        if (ss.fail() && key != "format" && key != "angles_deg" && key != "angle_ranges")
            throw io_error("manifest " + mp + " has a malformed '" + key + "' line");
    }
    if (!have_format || !have_n)
        throw io_error("manifest " + mp + " is missing format or n_samples");
    if (m.n_samples > 0) {
        try {
            m.geom.validate();
        } catch (const rejected_input& e) {
            throw io_error("manifest " + mp + " holds an invalid geometry: " + e.what());
        }
    }
    return m;
}

std::vector<PairedSample> load_dataset(const std::string& dir, DatasetManifest* manifest_out) {
    DatasetManifest m = load_manifest(dir);
    std::vector<PairedSample> out;
    out.reserve(m.n_samples);
    for (int i = 0; i < m.n_samples; ++i)
        out.push_back(read_pair((fs::path(dir) / pair_name(i)).string(), m.geom));
    if (manifest_out) *manifest_out = std::move(m);
    return out;
}

void build_dataset(const DatasetBuildOptions& opt, const std::string& out_dir, std::ostream& log) {
    if (opt.n_train < 0 || opt.n_test < 0)
        throw rejected_input("build_dataset: sample counts must be non-negative");
    if (opt.angle_ranges.empty())
        throw rejected_input("build_dataset: need at least one angle range");
    if (opt.kinds != "mixed" && opt.kinds != "dental-like" && opt.kinds != "random-ellipses" &&
        opt.kinds != "shepp-logan")
        throw rejected_input("build_dataset: unknown kinds '" + opt.kinds + "'");

    const Geometry geom = Geometry::uniform(opt.image_size, opt.n_angles);
    const int nr = static_cast<int>(opt.angle_ranges.size());

    auto kind_of = [&](int i) {
        if (opt.kinds == "mixed")
            return i % 2 == 0 ? PhantomKind::dental_like : PhantomKind::random_ellipses;
        return phantom_kind_from_name(opt.kinds);
    };
    auto make_split = [&](int count, uint64_t index_base, const NormParams* norm) {
        std::vector<PairedSample> v;
        v.reserve(count);
        for (int i = 0; i < count; ++i) {
            PhantomSpec spec;
            spec.kind = kind_of(i);
            spec.image_size = opt.image_size;
            spec.seed = mix_seed(opt.seed, index_base + i);
            const auto [lo, hi] = opt.angle_ranges[(i / 2) % nr];
            v.push_back(build_pair(generate_phantom(spec), geom, lo, hi, opt.noise_sigma,
                                   mix_seed(opt.seed, 0x900000 + index_base + i), norm));
            if ((i + 1) % 64 == 0) log << "  built " << (i + 1) << "/" << count << " pairs\n";
        }
        return v;
    };

    // raw pass with an identity map, then one global affine from train targets
    const NormParams identity;
    log << "building " << opt.n_train << " train pairs\n";
    std::vector<PairedSample> train = make_split(opt.n_train, 0, &identity);
    log << "building " << opt.n_test << " test pairs\n";
    std::vector<PairedSample> test = make_split(opt.n_test, 0x100000, &identity);

    float lo = 0.0f, hi = 1.0f;
    if (!train.empty()) {
        lo = train[0].target.v[0];
        hi = lo;
        for (const auto& s : train) {
            auto [a, b] = min_max(s.target.v);
            lo = std::min(lo, a);
            hi = std::max(hi, b);
        }
    }
    const NormParams norm = norm_from_range(lo, hi);
    log << "normalization: shift " << norm.shift << ", scale " << norm.scale << '\n';

    auto apply = [&](std::vector<PairedSample>& v) {
        for (auto& s : v) {
            normalize(s.target, norm);
            normalize(s.prior, norm);
            s.target.value_min = s.prior.value_min = -1.0f;
            s.target.value_max = s.prior.value_max = 1.0f;
            s.norm = norm;
        }
    };
    apply(train);
    apply(test);

    persist_dataset(train, geom, (fs::path(out_dir) / "train").string());
    persist_dataset(test, geom, (fs::path(out_dir) / "test").string());
    log << "wrote " << out_dir << "/train and " << out_dir << "/test\n";
}

}  // namespace pwdlact
