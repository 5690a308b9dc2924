#include "rlab/settings.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rlab {

namespace {

using List = std::vector<double>;

std::string shortest(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string where(const std::string& source, const YAML::Mark& m) {
    return m.is_null() ? source : source + ":" + std::to_string(m.line + 1);
}

SettingValue convert(const YAML::Node& n, const SettingValue& like, const std::string& key, const std::string& at) {
    auto fail = [&](const std::string& what) -> ConfigError {
        return ConfigError(at + ": key '" + key + "' expects " + what);
    };
    try {
        return std::visit(
            [&](const auto& v) -> SettingValue {
                using V = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<V, List>) {
                    List out;
                    if (n.IsScalar()) {
                        out.push_back(n.as<double>());
                    } else if (n.IsSequence()) {
                        for (const auto& e : n) {
                            if (!e.IsScalar()) throw fail("a list of numbers");
                            out.push_back(e.as<double>());
                        }
                    } else {
                        throw fail("a list of numbers");
                    }
                    return out;
                } else {
                    if (!n.IsScalar()) throw fail("a single value");
                    return n.as<V>();
                }
            },
            like);
    } catch (const YAML::BadConversion&) {
        const char* what = std::visit(
            [](const auto& v) {
                using V = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<V, bool>) return "true or false";
                else if constexpr (std::is_same_v<V, std::int64_t>) return "an integer";
                else if constexpr (std::is_same_v<V, std::uint64_t>) return "a non-negative integer";
                else if constexpr (std::is_same_v<V, double>) return "a number";
                else if constexpr (std::is_same_v<V, std::string>) return "a string";
                else return "a list of numbers";
            },
            like);
        throw fail(what);
    }
}

}  // namespace

std::string render(const SettingValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using V = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<V, bool>) return x ? "true" : "false";
            else if constexpr (std::is_same_v<V, double>) return shortest(x);
            else if constexpr (std::is_same_v<V, std::string>) return x;
            else if constexpr (std::is_same_v<V, List>) {
                std::string s = "[";
                for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + shortest(x[i]);
                return s + "]";
            } else return std::to_string(x);
        },
        v);
}

Settings::Settings() {
    using U = std::uint64_t;
    define("seed", U{1}, "seed for kernel initialization and synthetic data");
    define("precision", std::string("double"), "working precision: double or single");
    define("output", std::string("results"), "output directory");
    define("svg", false, "also write SVG charts");

    define("classifier.divergence_factor", 1e9, "Unstable once sup|state| exceeds this times its initial value");
    define("classifier.tail_fraction", 0.25, "fraction of the run examined at the end");
    define("classifier.flat_tolerance", 1e-6, "Stable when the tail loss range is below this times |initial loss|");
    define("classifier.bound_factor", 10.0, "bounded when the tail stays below this times the reference loss");
    define("classifier.prominence", 1e-4, "peak prominence relative to the median loss");
    define("classifier.min_peaks", U{3}, "peaks needed in the tail for recurrent oscillation");
    define("classifier.min_iterations", U{16}, "shorter records are flagged indeterminate");

    define("sharpness.hvp_eps", 1e-4, "relative finite-difference step of Hessian-vector products");
    define("sharpness.iters", U{200}, "power-iteration cap");
    define("sharpness.tolerance", 1e-6, "relative change of successive Rayleigh quotients at convergence");

    define("scan.rel_width", 1e-2, "bisection stops at this relative bracket width");
    define("scan.max_trials", U{80}, "cap on trajectories per scan");

    define("heat.points", U{31}, "grid points including both pinned ends");
    define("heat.dx", 1.0, "grid spacing");
    define("heat.diffusivity", 1.0, "diffusion coefficient");
    define("heat.peak", 1.0, "height of the initial triangle");
    define("heat.ratios", List{0.4, 0.8}, "diffusivity * dt / dx^2 values to run");
    define("heat.steps", U{2000}, "steps per run");

    define("beltrami.points", U{256}, "signal length");
    define("beltrami.dx", 1.0, "grid spacing");
    define("beltrami.noise", 0.05, "uniform noise amplitude on the step signal");
    define("beltrami.fidelity", 1.0, "weight of the data term");
    define("beltrami.tv_smoothing", 0.01, "smoothing of the total-variation term");
    define("beltrami.step_multiples", List{1, 10, 100, 1000}, "multiples of the strict stable step");
    define("beltrami.steps", U{10000}, "steps per run");

    define("linear.image_size", U{256}, "checkerboard side");
    define("linear.step", 1e-8, "time step");
    define("linear.residual", -0.5, "frozen output residual yhat - y");
    define("linear.swish_beta", 1.0, "Swish sharpness");
    define("linear.windows", List{16, 32, 64}, "kernel window sides");
    define("linear.steps", List{20000, 5000, 1250}, "step budget per scan trial, one per window");
    define("linear.upper_bracket", List{1e8, 4e8}, "passing and failing weight decay for the upper scan");
    define("linear.lower_bracket", List{1e8, 1e5}, "passing and failing weight decay for the lower scan");
    define("linear.demo_weight_decays", List{1.9e8, 2.1e8}, "weight decays whose trajectories are written");
    define("linear.demo_steps", U{2000}, "steps of the written trajectories");

    define("nonlinear.image_size", U{256}, "checkerboard side");
    define("nonlinear.window", U{32}, "kernel side");
    define("nonlinear.weight_decay", 20.0, "weight decay");
    define("nonlinear.swish_beta", 1.0, "Swish sharpness");
    define("nonlinear.label", std::int64_t{1}, "target label, 0 or 1");
    define("nonlinear.boundary", std::string("zeropad"), "image boundary: zeropad or periodic");
    define("nonlinear.init_scale", 1.0, "standard deviation of the initial kernel entries");
    define("nonlinear.steps", U{1000}, "steps per run");
    define("nonlinear.step_sizes", List{0.01, 0.05, 0.07, 0.09, 0.2}, "time steps to run");
    define("nonlinear.twin_multiplier", U{3}, "k of the perturbed twin for the RelL1 panel; 1 disables it");
    define("nonlinear.scan", true, "locate both zone boundaries by bisection");
    define("nonlinear.lower_bracket", List{0.005, 0.05}, "Stable and Restrained ends of the lower scan");
    define("nonlinear.upper_bracket", List{0.07, 0.2}, "non-Unstable and Unstable ends of the upper scan");

    define("eos.step_sizes", List{0.01, 0.03, 0.05, 0.07, 0.09}, "time steps to run on the nonlinear setup");
    define("eos.steps", U{1000}, "steps per run");
    define("eos.every", U{5}, "sharpness measured every this many steps");

    define("nesterov.step", 1e-4, "time step of the momentum flow");
    define("nesterov.momenta", List{0.9, 0.5}, "momentum coefficients");
    define("nesterov.image_size", U{256}, "checkerboard side");
    define("nesterov.window", U{16}, "kernel window side");
    define("nesterov.residual", -0.5, "frozen output residual yhat - y");
    define("nesterov.swish_beta", 1.0, "Swish sharpness");
    define("nesterov.steps", U{20000}, "step budget per scan trial");
    define("nesterov.bracket", List{5e7, 4e8}, "passing and failing weight decay");

    define("dataset.kind", std::string("stripes_vs_blobs"), "stripes_vs_blobs, checkerboard or idx");
    define("dataset.samples", U{16}, "synthetic sample count");
    define("dataset.size", U{16}, "synthetic image side");
    define("dataset.seed", U{11}, "synthetic data seed");
    define("dataset.images", std::string(""), "IDX image file (kind idx)");
    define("dataset.labels", std::string(""), "IDX label file (kind idx)");
    define("dataset.keep", List{0, 1}, "labels kept from an IDX file; the first maps to 0, the rest to 1");

    define("layers.depths", List{1, 2, 3}, "layer counts to compare");
    define("layers.kernel", U{3}, "kernel side of every layer");
    define("layers.init_scale", 0.1, "standard deviation of the initial kernel entries");
    define("layers.weight_decays", List{0, 5e-4}, "weight decays to run");
    define("layers.swish_beta", 1.0, "Swish sharpness");
    define("layers.boundary", std::string("zeropad"), "image boundary: zeropad or periodic");
    define("layers.gamma", std::string("mean"), "downstream collapse for effective bounds: mean or max_abs");
    define("layers.steps", U{1000}, "full-batch steps per run");
    define("layers.lr_start", 1e-4, "first learning rate of the sweep");
    define("layers.lr_factor", 1.25, "geometric sweep factor");
    define("layers.lr_max", 1.0, "sweep stops here when nothing fails");

    define("perturb.step_sizes", List{0.01, 0.05, 0.07}, "time steps on the nonlinear setup");
    define("perturb.multipliers", List{2, 3, 4}, "k of each perturbed twin");
    define("perturb.precision", std::string("single"), "precision of the twin runs");
    define("perturb.steps", U{1000}, "steps per run");
}

void Settings::define(const std::string& key, SettingValue v, std::string help) {
    entries_[key] = Entry{std::move(v), std::move(help)};
}

const Settings::Entry& Settings::at(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

template <class V>
const V& Settings::get(const std::string& key) const {
    const auto* p = std::get_if<V>(&at(key).value);
    if (!p) throw std::logic_error("settings: key '" + key + "' read with the wrong type");
    return *p;
}

bool Settings::flag(const std::string& key) const { return get<bool>(key); }
std::int64_t Settings::integer(const std::string& key) const { return get<std::int64_t>(key); }
std::size_t Settings::count(const std::string& key) const { return get<std::uint64_t>(key); }
std::uint64_t Settings::seed(const std::string& key) const { return get<std::uint64_t>(key); }
double Settings::real(const std::string& key) const { return get<double>(key); }
const std::string& Settings::text(const std::string& key) const { return get<std::string>(key); }
const std::vector<double>& Settings::reals(const std::string& key) const { return get<List>(key); }

std::vector<std::size_t> Settings::counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (double v : reals(key)) {
        if (!(v >= 0) || v != std::floor(v) || v > 1e15)
            throw ConfigError("key '" + key + "' expects non-negative integers, got " + shortest(v));
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

void Settings::set(const std::string& key, SettingValue v) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown key '" + key + "'");
    if (v.index() != it->second.value.index())
        throw ConfigError("key '" + key + "' set with a value of the wrong type");
    it->second.value = std::move(v);
}

void Settings::load_string(const std::string& yaml, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ConfigError(where(source, e.mark) + ": " + e.msg);
    }
    if (root.IsNull()) return;
    if (!root.IsMap()) throw ConfigError(source + ": expected a mapping of keys to values");

    // Parse everything before touching the stored values so a bad file
    // leaves the settings as they were.
    std::vector<std::pair<std::string, SettingValue>> staged;
    auto walk = [&](auto&& self, const YAML::Node& node, const std::string& prefix) -> void {
        for (const auto& kv : node) {
            const std::string key = prefix + kv.first.as<std::string>();
            const std::string at = where(source, kv.first.Mark());
            if (kv.second.IsMap()) {
                self(self, kv.second, key + ".");
                continue;
            }
            const auto it = entries_.find(key);
            if (it == entries_.end()) throw ConfigError(at + ": unknown key '" + key + "'");
            staged.emplace_back(key, convert(kv.second, it->second.value, key, at));
        }
    };
    walk(walk, root, "");
    for (auto& [k, v] : staged) entries_[k].value = std::move(v);
}

void Settings::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    load_string(ss.str(), path.string());
}

void Settings::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set " + assignment + ": expected key=value");
    const std::string key = assignment.substr(0, eq);
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("--set: unknown key '" + key + "'");
    YAML::Node n;
    try {
        n = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ConfigError("--set " + key + ": " + e.msg);
    }
    if (n.IsNull() && std::holds_alternative<std::string>(it->second.value)) {
        it->second.value = std::string();
        return;
    }
    it->second.value = convert(n, it->second.value, key, "--set");
}

std::vector<std::pair<std::string, std::string>> Settings::flatten() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, e] : entries_) out.emplace_back(k, render(e.value));
    return out;
}

std::vector<std::string> Settings::section_keys(const std::string& section) const {
    std::vector<std::string> out;
    const std::string prefix = section + ".";
    for (const auto& [k, e] : entries_)
        if (k.starts_with(prefix)) out.push_back(k);
    return out;
}

std::string Settings::to_yaml() const {
    YAML::Emitter em;
    em << YAML::BeginMap;
    auto emit_value = [&](const SettingValue& v) {
        if (const auto* s = std::get_if<std::string>(&v))
            em << YAML::DoubleQuoted << *s;
        else if (const auto* l = std::get_if<List>(&v)) {
            em << YAML::Flow << YAML::BeginSeq;
            for (double x : *l) em << shortest(x);
            em << YAML::EndSeq;
        } else
            em << render(v);
    };
    std::string open;
    for (const auto& [k, e] : entries_) {
        const auto dot = k.find('.');
        if (dot == std::string::npos) {
            em << YAML::Key << k << YAML::Value;
            emit_value(e.value);
        }
    }
    for (const auto& [k, e] : entries_) {
        const auto dot = k.find('.');
        if (dot == std::string::npos) continue;
        const std::string section = k.substr(0, dot);
        if (section != open) {
            if (!open.empty()) em << YAML::EndMap;
            em << YAML::Key << section << YAML::Value << YAML::BeginMap;
            open = section;
        }
        em << YAML::Key << k.substr(dot + 1) << YAML::Value;
        emit_value(e.value);
    }
    if (!open.empty()) em << YAML::EndMap;
    em << YAML::EndMap;
    return std::string(em.c_str()) + "\n";
}

}  // namespace rlab
