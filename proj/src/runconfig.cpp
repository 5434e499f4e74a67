#include "pwdlact/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pwdlact/io.hpp"
#include "pwdlact/rng.hpp"

namespace pwdlact {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& loc, const std::string& msg) {
    throw rejected_input(loc + ": " + msg);
}

long long to_int(const std::string& v, const std::string& key, const std::string& loc) {
    try {
        size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::logic_error&) {
        fail(loc, "key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key, const std::string& loc) {
    try {
        size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::logic_error&) {
        fail(loc, "key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key, const std::string& loc) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    fail(loc, "key '" + key + "' expects on/off, got '" + v + "'");
}

uint64_t to_u64(const std::string& v, const std::string& key, const std::string& loc) {
    try {
        size_t used = 0;
        const uint64_t x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::logic_error&) {
        fail(loc, "key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

using Setter = std::function<void(RunConfig&, const std::string& value, const std::string& key,
                                  const std::string& loc)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"run.out_dir", [](RunConfig& c, const std::string& v, const std::string&, const std::string&) {
             c.out_dir = v;
         }},
        {"run.seed", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.seed = to_u64(v, k, l);
         }},
        {"run.threads", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.threads = static_cast<int>(to_int(v, k, l));
             if (c.threads < 1) fail(l, "threads must be at least 1");
         }},
        {"geometry.image_size", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.image_size = static_cast<int>(to_int(v, k, l));
             if (c.image_size < 32 || c.image_size % 8 != 0)
                 fail(l, "image_size must be a multiple of 8, at least 32");
         }},
        {"geometry.n_angles", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.n_angles = static_cast<int>(to_int(v, k, l));
             if (c.n_angles < 2) fail(l, "n_angles must be at least 2");
         }},
        {"dataset.n_train", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.n_train = static_cast<int>(to_int(v, k, l));
             if (c.n_train < 1) fail(l, "n_train must be positive");
         }},
        {"dataset.n_test", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.n_test = static_cast<int>(to_int(v, k, l));
             if (c.n_test < 1) fail(l, "n_test must be positive");
         }},
        {"dataset.angle_ranges", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             try {
                 parse_range_list(v, k);
             } catch (const rejected_input& e) {
                 fail(l, e.what());
             }
             c.angle_ranges = v;
         }},
        {"dataset.noise_sigma", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.noise_sigma = to_double(v, k, l);
             if (c.noise_sigma < 0.0) fail(l, "noise_sigma must be nonnegative");
         }},
        {"dataset.kinds", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             if (v != "mixed" && v != "dental-like" && v != "random-ellipses" && v != "shepp-logan")
                 fail(l, "key '" + k + "' expects mixed|dental-like|random-ellipses|shepp-logan");
             c.kinds = v;
         }},
        {"train.lr", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.lr = to_double(v, k, l);
             if (!(c.train.lr > 0.0)) fail(l, "lr must be positive");
         }},
        {"train.batch_size", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.batch_size = static_cast<int>(to_int(v, k, l));
             if (c.train.batch_size < 1) fail(l, "batch_size must be positive");
         }},
        {"train.steps", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.n_steps = static_cast<int>(to_int(v, k, l));
             if (c.train.n_steps < 0) fail(l, "steps must be nonnegative");
         }},
        {"train.timesteps", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.T = static_cast<int>(to_int(v, k, l));
             if (c.train.T < 1) fail(l, "timesteps must be at least 1");
         }},
        {"train.beta_min", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.beta_min = to_double(v, k, l);
             if (!(c.train.beta_min > 0.0 && c.train.beta_min < 1.0))
                 fail(l, "beta_min must lie in (0, 1)");
         }},
        {"train.beta_max", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.beta_max = to_double(v, k, l);
             if (!(c.train.beta_max > 0.0 && c.train.beta_max < 1.0))
                 fail(l, "beta_max must lie in (0, 1)");
         }},
        {"train.checkpoint_every", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.checkpoint_every = static_cast<int>(to_int(v, k, l));
             if (c.train.checkpoint_every < 0) fail(l, "checkpoint_every must be nonnegative");
         }},
        {"train.wtconv", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.use_wavelet = to_bool(v, k, l);
         }},
        {"train.base_width", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.train.base_width = static_cast<int>(to_int(v, k, l));
             if (c.train.base_width < 8 || c.train.base_width % 8 != 0)
                 fail(l, "base_width must be a positive multiple of 8");
         }},
        {"sample.steps", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.sample.n_steps = static_cast<int>(to_int(v, k, l));
             if (c.sample.n_steps < 1) fail(l, "steps must be at least 1");
         }},
        {"sample.guidance_weight", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.sample.guidance_weight = to_double(v, k, l);
             if (!(c.sample.guidance_weight >= 0.0 && c.sample.guidance_weight <= 1.0))
                 fail(l, "guidance_weight out of range [0, 1]");
         }},
        {"sample.eta", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.sample.eta = to_double(v, k, l);
             if (c.sample.eta < 0.0) fail(l, "eta must be nonnegative");
         }},
        {"eval.max_images", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.eval_max_images = static_cast<int>(to_int(v, k, l));
             if (c.eval_max_images < 0) fail(l, "max_images must be nonnegative");
         }},
        {"eval.tv_iters", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.tv_iters = static_cast<int>(to_int(v, k, l));
             if (c.tv_iters < 1) fail(l, "tv_iters must be positive");
         }},
        {"eval.tv_lambda", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.tv_lambda = to_double(v, k, l);
             if (c.tv_lambda < 0.0) fail(l, "tv_lambda must be nonnegative");
         }},
        {"eval.save_residuals", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.save_residuals = to_bool(v, k, l);
         }},
        {"ablate.kinds", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             std::istringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 item = trim(item);
                 if (item != "guidance-weight" && item != "step-count" && item != "wtconv")
                     fail(l, "key '" + k + "' accepts guidance-weight, step-count, wtconv");
             }
             c.ablate_kinds = v;
         }},
        {"ablate.guidance_grid", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             try {
                 parse_double_list(v, k);
             } catch (const rejected_input& e) {
                 fail(l, e.what());
             }
             c.guidance_grid = v;
         }},
        {"ablate.step_grid", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             try {
                 parse_double_list(v, k);
             } catch (const rejected_input& e) {
                 fail(l, e.what());
             }
             c.step_grid = v;
         }},
        {"ablate.max_images", [](RunConfig& c, const std::string& v, const std::string& k, const std::string& l) {
             c.ablate_max_images = static_cast<int>(to_int(v, k, l));
             if (c.ablate_max_images < 0) fail(l, "max_images must be nonnegative");
         }},
    };
    return table;
}

const char* kSections[] = {"run", "geometry", "dataset", "train", "sample", "eval", "ablate"};

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw rejected_input(what + ": empty entry in list '" + text + "'");
        try {
            size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw rejected_input(what + ": bad number '" + item + "'");
        }
    }
    if (out.empty()) throw rejected_input(what + ": empty list");
    return out;
}

std::vector<std::pair<double, double>> parse_range_list(const std::string& text,
                                                        const std::string& what) {
    std::vector<std::pair<double, double>> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw rejected_input(what + ": expected lo:hi, got '" + item + "'");
        try {
            const double lo = std::stod(item.substr(0, colon));
            const double hi = std::stod(item.substr(colon + 1));
            if (!(lo >= 0.0 && hi <= 360.0 && hi >= lo))
                throw rejected_input(what + ": range '" + item + "' outside 0..360 or reversed");
            out.emplace_back(lo, hi);
        } catch (const std::logic_error&) {
            throw rejected_input(what + ": bad range '" + item + "'");
        }
    }
    if (out.empty()) throw rejected_input(what + ": empty list");
    return out;
}

std::vector<std::pair<double, double>> RunConfig::parsed_angle_ranges() const {
    return parse_range_list(angle_ranges, "angle_ranges");
}
std::vector<double> RunConfig::parsed_guidance_grid() const {
    return parse_double_list(guidance_grid, "guidance_grid");
}
std::vector<double> RunConfig::parsed_step_grid() const {
    return parse_double_list(step_grid, "step_grid");
}
std::vector<std::string> RunConfig::parsed_ablate_kinds() const {
    std::vector<std::string> out;
    std::istringstream ss(ablate_kinds);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig parse_config_stream(std::istream& in, const std::string& name) {
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string loc = name + ":" + std::to_string(lineno);
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(loc, "unterminated section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            bool known = false;
            for (const char* k : kSections) known = known || section == k;
            if (!known) fail(loc, "unknown section '" + section + "'");
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos) fail(loc, "expected key = value, got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (section.empty()) fail(loc, "key '" + key + "' appears before any [section]");
        const std::string full = section + "." + key;
        auto it = setters().find(full);
        if (it == setters().end()) fail(loc, "unknown key '" + key + "' in [" + section + "]");
        it->second(cfg, value, key, loc);
    }
    if (cfg.train.T >= 2 && !(cfg.train.beta_min < cfg.train.beta_max))
        throw rejected_input(name + ": beta_min must be below beta_max");
    cfg.train.seed = mix_seed(cfg.seed, 0x74726169ULL);
    cfg.sample.seed = mix_seed(cfg.seed, 0x73616d70ULL);
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("config: cannot open " + path);
    return parse_config_stream(f, path);
}

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void echo_config(const RunConfig& c, std::ostream& out) {
    out << "# pwd-lact resolved config\n";
    out << "[run]\n";
    out << "out_dir = " << c.out_dir << "\n";
    out << "seed = " << c.seed << "\n";
    out << "threads = " << c.threads << "\n\n";
    out << "[geometry]\n";
    out << "image_size = " << c.image_size << "\n";
    out << "n_angles = " << c.n_angles << "\n\n";
    out << "[dataset]\n";
    out << "n_train = " << c.n_train << "\n";
    out << "n_test = " << c.n_test << "\n";
    out << "angle_ranges = " << c.angle_ranges << "\n";
    out << "noise_sigma = " << num(c.noise_sigma) << "\n";
    out << "kinds = " << c.kinds << "\n\n";
    out << "[train]\n";
    out << "lr = " << num(c.train.lr) << "\n";
    out << "batch_size = " << c.train.batch_size << "\n";
    out << "steps = " << c.train.n_steps << "\n";
    out << "timesteps = " << c.train.T << "\n";
    out << "beta_min = " << num(c.train.beta_min) << "\n";
    out << "beta_max = " << num(c.train.beta_max) << "\n";
    out << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    out << "wtconv = " << (c.train.use_wavelet ? "on" : "off") << "\n";
    out << "base_width = " << c.train.base_width << "\n\n";
    out << "[sample]\n";
    out << "steps = " << c.sample.n_steps << "\n";
    out << "guidance_weight = " << num(c.sample.guidance_weight) << "\n";
    out << "eta = " << num(c.sample.eta) << "\n\n";
    out << "[eval]\n";
    out << "max_images = " << c.eval_max_images << "\n";
    out << "tv_iters = " << c.tv_iters << "\n";
    out << "tv_lambda = " << num(c.tv_lambda) << "\n";
    out << "save_residuals = " << (c.save_residuals ? "on" : "off") << "\n\n";
    out << "[ablate]\n";
    out << "kinds = " << c.ablate_kinds << "\n";
    out << "guidance_grid = " << c.guidance_grid << "\n";
    out << "step_grid = " << c.step_grid << "\n";
    out << "max_images = " << c.ablate_max_images << "\n";
}

std::string config_to_string(const RunConfig& cfg) {
    std::ostringstream ss;
    echo_config(cfg, ss);
    return ss.str();
}

}  // namespace pwdlact
