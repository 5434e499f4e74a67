#include "pwdlact/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pwdlact/io.hpp"

namespace pwdlact {

namespace {

constexpr int kWin = 7;
constexpr int kHalf = kWin / 2;

void check_pair(const Image& a, const Image& b, double data_range, const char* who) {
    if (a.h != b.h || a.w != b.w)
        throw rejected_input(std::string(who) + ": shape mismatch");
    if (!(data_range > 0.0)) throw rejected_input(std::string(who) + ": data_range must be positive");
}

template <typename Pred>
double psnr_impl(const Image& a, const Image& b, double data_range, Pred keep) {
    double acc = 0.0;
    long n = 0;
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            if (!keep(y, x)) continue;
            const double d = static_cast<double>(a.at(y, x)) - b.at(y, x);
            acc += d * d;
            ++n;
        }
    if (n == 0) throw rejected_input("psnr: empty comparison domain");
    const double mse = acc / n;
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

const double* gauss_window() {
    static double w[kWin * kWin];
    static bool ready = false;
    if (!ready) {
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const double dy = i - kHalf, dx = j - kHalf;
                w[i * kWin + j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                sum += w[i * kWin + j];
            }
        for (double& x : w) x /= sum;
        ready = true;
    }
    return w;
}

template <typename Pred>
double ssim_impl(const Image& a, const Image& b, double data_range, Pred keep) {
    if (a.h < kWin || a.w < kWin)
        throw rejected_input("ssim: image smaller than the 7x7 window");
    const double* w = gauss_window();
    const double c1 = 0.01 * data_range * 0.01 * data_range;
    const double c2 = 0.03 * data_range * 0.03 * data_range;

    double acc = 0.0;
    long n = 0;
    for (int cy = kHalf; cy < a.h - kHalf; ++cy)
        for (int cx = kHalf; cx < a.w - kHalf; ++cx) {
            if (!keep(cy, cx)) continue;
            double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wij = w[i * kWin + j];
                    const double va = a.at(cy + i - kHalf, cx + j - kHalf);
                    const double vb = b.at(cy + i - kHalf, cx + j - kHalf);
                    ma += wij * va;
                    mb += wij * vb;
                    saa += wij * va * va;
                    sbb += wij * vb * vb;
                    sab += wij * va * vb;
                }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cov = sab - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++n;
        }
    if (n == 0) throw rejected_input("ssim: no windows inside the comparison domain");
    return acc / n;
}

constexpr auto kEverywhere = [](int, int) { return true; };

}  // namespace

double psnr(const Image& a, const Image& b, double data_range) {
    check_pair(a, b, data_range, "psnr");
    return psnr_impl(a, b, data_range, kEverywhere);
}

double ssim(const Image& a, const Image& b, double data_range) {
    check_pair(a, b, data_range, "ssim");
    return ssim_impl(a, b, data_range, kEverywhere);
}

namespace {

void aggregate(const std::vector<double>& xs, double& mean, double& sd) {
    std::vector<double> finite;
    for (double x : xs)
        if (std::isfinite(x)) finite.push_back(x);
    if (finite.empty()) {  // all sentinels
        mean = xs.empty() ? 0.0 : xs.front();
        sd = 0.0;
        return;
    }
    double m = 0.0;
    for (double x : finite) m += x;
    m /= static_cast<double>(finite.size());
    double v = 0.0;
    for (double x : finite) v += (x - m) * (x - m);
    mean = m;
    sd = std::sqrt(v / static_cast<double>(finite.size()));
}

}  // namespace

void ReconReport::finalize() {
    std::vector<double> ps, ss, ts;
    for (const auto& m : per_image) {
        ps.push_back(m.psnr);
        ss.push_back(m.ssim);
        ts.push_back(m.seconds);
    }
    aggregate(ps, mean_psnr, std_psnr);
    aggregate(ss, mean_ssim, std_ssim);
    double dummy = 0.0;
    aggregate(ts, mean_seconds, dummy);
}

ReconReport evaluate(const std::vector<Image>& recons, const std::vector<Image>& refs,
                     const std::string& label, const std::vector<double>* seconds,
                     std::vector<Image>* residuals) {
    if (recons.size() != refs.size()) throw rejected_input("evaluate: list length mismatch");
    if (seconds && seconds->size() != recons.size())
        throw rejected_input("evaluate: timing list length mismatch");

    ReconReport rep;
    rep.label = label;
    for (size_t i = 0; i < recons.size(); ++i) {
        const Image& a = recons[i];
        const Image& b = refs[i];
        check_pair(a, b, rep.data_range, "evaluate");
        if (a.h != a.w) throw rejected_input("evaluate: images must be square");
        const int size = a.h;
        auto fov = [size](int y, int x) { return in_fov(y, x, size); };
        ImageMetrics m;
        m.psnr = psnr_impl(a, b, rep.data_range, fov);
        m.ssim = ssim_impl(a, b, rep.data_range, fov);
        m.seconds = seconds ? (*seconds)[i] : 0.0;
        rep.per_image.push_back(m);
        if (residuals) {
            Image r = a;
            for (size_t j = 0; j < r.v.size(); ++j)
                r.v[j] = std::abs(a.v[j] - b.v[j]);
            r.value_min = 0.0f;
            r.value_max = static_cast<float>(rep.data_range);
            residuals->push_back(std::move(r));
        }
    }
    rep.finalize();
    return rep;
}

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void save_report(const std::string& path, const ReconReport& report) {
    std::ofstream f(path);
    if (!f) throw io_error("report: cannot write " + path);
    f << "# pwd-lact recon report\n";
    f << "label " << report.label << "\n";
    f << "config " << report.config << "\n";
    f << "data_range " << fmt(report.data_range) << "\n";
    f << "columns index psnr_db ssim seconds\n";
    for (size_t i = 0; i < report.per_image.size(); ++i) {
        const auto& m = report.per_image[i];
        f << i << "\t" << fmt(m.psnr) << "\t" << fmt(m.ssim) << "\t" << fmt(m.seconds) << "\n";
    }
    if (!f) throw io_error("report: short write to " + path);
}

ReconReport load_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("report: cannot open " + path);
    ReconReport rep;
    std::string line;
    bool saw_columns = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        auto rest_of = [&]() {
            std::string rest;
            std::getline(ls, rest);
            const size_t at = rest.find_first_not_of(" \t");
            return at == std::string::npos ? std::string() : rest.substr(at);
        };
        if (head == "label") {
            rep.label = rest_of();
        } else if (head == "config") {
            rep.config = rest_of();
        } else if (head == "data_range") {
            ls >> rep.data_range;
        } else if (head == "columns") {
            saw_columns = true;
        } else {
            if (!saw_columns) throw io_error("report: malformed header in " + path);
            // stod instead of stream extraction: the sentinel prints as "inf"
            std::string ps, ss, ts;
            if (!(ls >> ps >> ss >> ts)) throw io_error("report: malformed row in " + path);
            ImageMetrics m;
            try {
                m.psnr = std::stod(ps);
                m.ssim = std::stod(ss);
                m.seconds = std::stod(ts);
            } catch (const std::logic_error&) {
                throw io_error("report: malformed row in " + path);
            }
            rep.per_image.push_back(m);
        }
    }
    rep.finalize();
    return rep;
}

const char* ablation_name(AblationKind kind) {
    switch (kind) {
        case AblationKind::guidance_weight: return "guidance-weight";
        case AblationKind::step_count: return "step-count";
        case AblationKind::wtconv: return "wtconv";
    }
    return "unknown";
}

std::vector<AblationRow> ablate(AblationKind kind, const std::vector<double>& grid,
                                const AblateContext& ctx, std::ostream* log) {
    if (grid.empty()) throw rejected_input("ablate: empty grid");
    if (ctx.test_set.empty()) throw rejected_input("ablate: empty test set");
    if (kind == AblationKind::wtconv && ctx.checkpoint_off.empty())
        throw io_error("ablate: the wtconv ablation needs a second checkpoint "
                       "(checkpoint_off) trained with the wavelet branch disabled");

    const size_t n_img = ctx.max_images > 0
                             ? std::min<size_t>(ctx.max_images, ctx.test_set.size())
                             : ctx.test_set.size();

    std::vector<AblationRow> rows;
    for (double value : grid) {
        SampleConfig cfg = ctx.base;
        std::string ckpt_path = ctx.checkpoint;
        switch (kind) {
            case AblationKind::guidance_weight: cfg.guidance_weight = value; break;
            case AblationKind::step_count: cfg.n_steps = static_cast<int>(std::llround(value)); break;
            case AblationKind::wtconv: ckpt_path = value != 0.0 ? ctx.checkpoint : ctx.checkpoint_off; break;
        }
        cfg.validate();
        Checkpoint ck = load_checkpoint(ckpt_path);

        std::vector<Image> recons, refs;
        std::vector<double> secs;
        for (size_t i = 0; i < n_img; ++i) {
            const PairedSample& s = ctx.test_set[i];
            SampleConfig per = cfg;
            per.seed = cfg.seed + i;
            const auto t0 = std::chrono::steady_clock::now();
            recons.push_back(sample(ck.model, s.prior, ck.schedule, per));
            const auto t1 = std::chrono::steady_clock::now();
            secs.push_back(std::chrono::duration<double>(t1 - t0).count());
            refs.push_back(s.target);
        }
        std::ostringstream label;
        label << ablation_name(kind) << "=" << value;
        ReconReport rep = evaluate(recons, refs, label.str(), &secs);
        std::ostringstream snap;
        snap << "steps=" << cfg.n_steps << " w=" << cfg.guidance_weight << " eta=" << cfg.eta
             << " seed=" << cfg.seed << " checkpoint=" << ckpt_path << " images=" << n_img;
        rep.config = snap.str();
        rows.push_back({value, rep});
        if (log)
            (*log) << "ablate " << label.str() << " psnr " << rep.mean_psnr << " ssim "
                   << rep.mean_ssim << " sec/img " << rep.mean_seconds << "\n";
    }

    if (!ctx.out_dir.empty()) {
        std::filesystem::create_directories(ctx.out_dir);
        const std::string stem = ctx.out_dir + "/ablate_" + ablation_name(kind);
        save_ablation_table(stem + ".tsv", kind, rows);
        save_ablation_plot(stem + ".svg", kind, rows);
    }
    return rows;
}

void save_ablation_table(const std::string& path, AblationKind kind,
                         const std::vector<AblationRow>& rows) {
    std::ofstream f(path);
    if (!f) throw io_error("ablate: cannot write " + path);
    f << "# pwd-lact ablation: " << ablation_name(kind) << "\n";
    f << "value\tmean_psnr\tstd_psnr\tmean_ssim\tstd_ssim\tsec_per_image\tn_images\n";
    for (const auto& r : rows)
        f << fmt(r.value) << "\t" << fmt(r.report.mean_psnr) << "\t" << fmt(r.report.std_psnr)
          << "\t" << fmt(r.report.mean_ssim) << "\t" << fmt(r.report.std_ssim) << "\t"
          << fmt(r.report.mean_seconds) << "\t" << r.report.per_image.size() << "\n";
    if (!f) throw io_error("ablate: short write to " + path);
}

void save_ablation_plot(const std::string& path, AblationKind kind,
                        const std::vector<AblationRow>& rows) {
    const int W = 640, H = 400, ml = 70, mr = 30, mt = 40, mb = 60;
    double lo = 1e300, hi = -1e300;
    for (const auto& r : rows)
        if (std::isfinite(r.report.mean_psnr)) {
            lo = std::min(lo, r.report.mean_psnr);
            hi = std::max(hi, r.report.mean_psnr);
        }
    if (lo > hi) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-9) hi = lo + 1.0;
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto xpos = [&](size_t i) {
        const size_t n = rows.size();
        return ml + (W - ml - mr) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
    };
    auto ypos = [&](double v) {
        if (!std::isfinite(v)) v = hi;
        return mt + (H - mt - mb) * (1.0 - (v - lo) / (hi - lo));
    };

    std::ofstream f(path);
    if (!f) throw io_error("ablate: cannot write " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">mean PSNR vs "
      << ablation_name(kind) << "</text>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";

    f << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < rows.size(); ++i)
        f << xpos(i) << "," << ypos(rows[i].report.mean_psnr) << " ";
    f << "\"/>\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        f << "<circle cx=\"" << xpos(i) << "\" cy=\"" << ypos(rows[i].report.mean_psnr)
          << "\" r=\"4\" fill=\"steelblue\"/>\n";
        f << "<text x=\"" << xpos(i) << "\" y=\"" << H - mb + 20
          << "\" text-anchor=\"middle\" font-size=\"12\">" << rows[i].value << "</text>\n";
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.2f", rows[i].report.mean_psnr);
        f << "<text x=\"" << xpos(i) << "\" y=\"" << ypos(rows[i].report.mean_psnr) - 9
          << "\" text-anchor=\"middle\" font-size=\"11\">" << lab << "</text>\n";
    }
    f << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << ablation_name(kind) << "</text>\n";
    f << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (mt + H - mb) / 2 << ")\">mean PSNR (dB)</text>\n";
    f << "</svg>\n";
    if (!f) throw io_error("ablate: short write to " + path);
}

}  // namespace pwdlact
