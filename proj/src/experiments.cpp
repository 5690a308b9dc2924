#include "rlab/experiments.hpp"

#include "rlab/classic_pde.hpp"
#include "rlab/multilayer.hpp"
#include "rlab/nesterov.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rlab {

namespace {

/// Summary cells print a negated zero bound as plain 0.
std::string num(double x, Precision p = Precision::Double) { return format_number(x == 0 ? 0.0 : x, p); }

std::string count_text(std::size_t n) { return std::to_string(n); }

/// Runs f with a value of the working float type selected by p.
template <class F>
auto with_precision(Precision p, F&& f) {
    if (p == Precision::Single) return f(float{});
    return f(double{});
}

template <class T>
std::vector<T> narrow(const std::vector<double>& xs) {
    return std::vector<T>(xs.begin(), xs.end());
}

const std::vector<double>& pair_of(const Settings& s, const std::string& key) {
    const auto& v = s.reals(key);
    if (v.size() != 2) throw ConfigError("key '" + key + "' expects two numbers");
    return v;
}

double max_of(const std::vector<double>& xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    return m;
}

Series measured_series(const std::string& name, const std::vector<std::optional<double>>& xs) {
    Series s{name, {}, {}};
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i]) {
            s.x.push_back(static_cast<double>(i));
            s.y.push_back(*xs[i]);
        }
    return s;
}

RunOptions run_options(const Settings& s, std::size_t steps, double lr) {
    RunOptions o;
    o.steps = steps;
    o.lr = lr;
    o.divergence_factor = s.real("classifier.divergence_factor");
    o.sharpness = sharpness_options(s);
    return o;
}

ScanResult scan(const Settings& s, const std::function<TrajectoryClass(double)>& trial, const std::vector<double>& bracket,
                ScanThreshold threshold) {
    return empirical_bound_scan(trial, bracket[0], bracket[1], threshold, s.real("scan.rel_width"),
                                s.count("scan.max_trials"));
}

void add_probes(Table& t, const std::string& label, const ScanResult& r) {
    for (const auto& p : r.probes) t.add({label, num(p.value), to_string(p.cls)});
}

// ---------------------------------------------------------------- heat

ExperimentOutput run_heat_experiment(const Settings& s) {
    ExperimentOutput out{"heat", {}, {}, {}, {}};
    Table summary{"heat_summary", {"ratio", "dt", "steps_run", "final_sup", "max_sup", "class"}, {}};
    Chart chart{"heat_sup", "sup|u| of the explicit heat scheme", "iteration", "sup|u|", true, {}};
    const auto params = classifier_params(s);
    for (double ratio : s.reals("heat.ratios")) {
        HeatConfig c;
        c.kappa = s.real("heat.diffusivity");
        c.dx = s.real("heat.dx");
        c.dt = ratio * c.dx * c.dx / c.kappa;
        c.steps = s.count("heat.steps");
        c.u0 = triangle_profile(s.count("heat.points"), c.dx, s.real("heat.peak"));
        TrajectoryRecord rec = heat_record(c);
        const auto cls = classify_trajectory(rec, c.steps, params).cls;
        rec.set_classification(cls);
        const std::string tag = num(ratio);
        summary.add({tag, num(c.dt), count_text(rec.size() - 1), num(rec.state_inf.back()), num(max_of(rec.state_inf)),
                     to_string(cls)});
        out.facts.emplace_back("ratio_" + tag + ".final_sup", num(rec.state_inf.back()));
        chart.series.push_back(iteration_series("ratio " + tag, rec.state_inf));
        out.trajectories.push_back({"heat_ratio_" + tag, std::move(rec), Precision::Double});
    }
    out.tables.push_back(std::move(summary));
    out.charts.push_back(std::move(chart));
    return out;
}

// ---------------------------------------------------------------- beltrami

ExperimentOutput run_beltrami_experiment(const Settings& s) {
    ExperimentOutput out{"beltrami", {}, {}, {}, {}};
    Table summary{"beltrami_summary",
                  {"multiple", "dt", "steps_run", "final_loss", "median_loss", "max_loss", "class", "reason"},
                  {}};
    Chart chart{"beltrami_loss", "Beltrami flow loss", "iteration", "loss", true, {}};
    const auto params = classifier_params(s);
    BeltramiConfig c;
    c.dx = s.real("beltrami.dx");
    c.delta = s.real("beltrami.tv_smoothing");
    c.lambda = s.real("beltrami.fidelity");
    c.steps = s.count("beltrami.steps");
    c.target = noisy_step_signal(s.count("beltrami.points"), s.real("beltrami.noise"), s.seed("seed"), c.dx);
    c.u0 = c.target;
    const double strict = beltrami_local_cfl(c.u0, c).strict_dt;
    out.facts.emplace_back("strict_dt", num(strict));
    for (double m : s.reals("beltrami.step_multiples")) {
        c.dt = m * strict;
        TrajectoryRecord rec = beltrami_record(c);
        const auto cl = classify_trajectory(rec, c.steps, params);
        rec.set_classification(cl.cls);
        std::vector<double> sorted = rec.loss;
        std::sort(sorted.begin(), sorted.end());
        const std::string tag = num(m);
        summary.add({tag, num(c.dt), count_text(rec.size() - 1), num(rec.loss.back()), num(sorted[sorted.size() / 2]),
                     num(max_of(rec.loss)), to_string(cl.cls), cl.reason});
        out.facts.emplace_back("multiple_" + tag + ".class", to_string(cl.cls));
        chart.series.push_back(iteration_series(tag + "x strict", rec.loss));
        out.trajectories.push_back({"beltrami_x" + tag, std::move(rec), Precision::Double});
    }
    out.tables.push_back(std::move(summary));
    out.charts.push_back(std::move(chart));
    return out;
}

// ---------------------------------------------------------------- linear-bounds

Cnn1Config linear_config(const Settings& s, std::size_t window) {
    Cnn1Config c;
    c.image = checkerboard(s.count("linear.image_size"));
    c.beta = s.real("linear.swish_beta");
    c.dt = s.real("linear.step");
    c.window = window;
    return c;
}

template <class T>
ExperimentOutput linear_bounds_impl(const Settings& s, Precision p) {
    ExperimentOutput out{"linear-bounds", {}, {}, {}, {}};
    const double a = s.real("linear.residual");
    const auto windows = s.counts("linear.windows");
    const auto budgets = s.counts("linear.steps");
    const auto params = classifier_params(s);

    const Cnn1Config full = linear_config(s, s.count("linear.image_size"));
    const StabilityBounds analytic = stability_bounds(full, a);
    Table an{"linear_analytic", {"alpha_min", "alpha_max", "shift_min", "shift_max", "step"}, {}};
    an.add({num(analytic.alpha_min), num(analytic.alpha_max), num(analytic.shift_min), num(analytic.shift_max),
            num(analytic.dt)});
    out.facts.emplace_back("alpha_max_analytic", num(analytic.alpha_max));
    out.facts.emplace_back("alpha_min_analytic", num(analytic.alpha_min));

    Table summary{"linear_bounds",
                  {"window", "steps", "alpha_max_analytic", "alpha_max_emp", "alpha_min_analytic", "alpha_min_emp",
                   "alpha_min_ratio", "probes"},
                  {}};
    Table probes{"linear_scan_probes", {"scan", "weight_decay", "class"}, {}};
    double prev_min = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const std::size_t w = windows[i], steps = budgets[i];
        Cnn1Config c = linear_config(s, w);
        const auto k0 = random_kernel(w, w, s.seed("seed"));
        const auto theta0 = narrow<T>(k0.storage());
        auto trial = [&](double alpha) {
            c.alpha = alpha;
            LinearFlowSystem<T> sys(c, a);
            const auto t = run_trajectory<T>(sys, theta0, run_options(s, steps, c.dt));
            return classify_trajectory(t.record, steps, params).cls;
        };
        const ScanResult hi = scan(s, trial, pair_of(s, "linear.upper_bracket"), ScanThreshold::Unstable);
        const ScanResult lo = scan(s, trial, pair_of(s, "linear.lower_bracket"), ScanThreshold::Unstable);
        const std::string tag = std::to_string(w);
        add_probes(probes, tag + " upper", hi);
        add_probes(probes, tag + " lower", lo);
        summary.add({tag, count_text(steps), num(analytic.alpha_max), num(hi.boundary), num(analytic.alpha_min),
                     num(lo.boundary), prev_min > 0 ? num(lo.boundary / prev_min) : "",
                     count_text(hi.probes.size() + lo.probes.size())});
        out.facts.emplace_back("window_" + tag + ".alpha_max_emp", num(hi.boundary));
        out.facts.emplace_back("window_" + tag + ".alpha_min_emp", num(lo.boundary));
        prev_min = lo.boundary;
    }

    // Trajectories either side of the upper bound on the first window.
    Chart chart{"linear_state", "windowed linear flow, sup|K|", "iteration", "sup|K|", true, {}};
    if (!windows.empty()) {
        Cnn1Config c = linear_config(s, windows[0]);
        const auto k0 = random_kernel(windows[0], windows[0], s.seed("seed"));
        const std::size_t steps = s.count("linear.demo_steps");
        for (double alpha : s.reals("linear.demo_weight_decays")) {
            c.alpha = alpha;
            LinearFlowSystem<T> sys(c, a);
            auto t = run_trajectory<T>(sys, narrow<T>(k0.storage()), run_options(s, steps, c.dt));
            t.record.set_classification(classify_trajectory(t.record, steps, params).cls);
            chart.series.push_back(iteration_series("alpha " + num(alpha), t.record.state_inf));
            out.trajectories.push_back({"linear_w" + std::to_string(windows[0]) + "_alpha_" + num(alpha),
                                        std::move(t.record), p});
        }
    }
    out.tables.push_back(std::move(an));
    out.tables.push_back(std::move(summary));
    out.tables.push_back(std::move(probes));
    out.charts.push_back(std::move(chart));
    return out;
}

ExperimentOutput run_linear_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("precision"));
    return with_precision(p, [&](auto tag) { return linear_bounds_impl<decltype(tag)>(s, p); });
}

// ---------------------------------------------------------------- nonlinear

template <class T>
TrajectoryClass nonlinear_trial(const Settings& s, double dt) {
    const std::size_t steps = s.count("nonlinear.steps");
    Cnn1System<T> sys(nonlinear_config(s, dt));
    const auto t = run_trajectory<T>(sys, narrow<T>(nonlinear_init(s)), run_options(s, steps, dt));
    return classify_trajectory(t.record, steps, classifier_params(s)).cls;
}

template <class T>
ExperimentOutput nonlinear_impl(const Settings& s, Precision p) {
    ExperimentOutput out{"nonlinear", {}, {}, {}, {}};
    const std::size_t steps = s.count("nonlinear.steps");
    const auto k = static_cast<std::uint32_t>(s.count("nonlinear.twin_multiplier"));
    const auto params = classifier_params(s);
    const auto theta0 = narrow<T>(nonlinear_init(s));

    Table summary{"nonlinear_summary",
                  {"step", "class", "class_with_twin", "reason", "steps_run", "initial_loss", "final_loss",
                   "max_loss", "rel_l1_peak"},
                  {}};
    Chart loss_chart{"nonlinear_loss", "nonlinear flow loss", "iteration", "loss", true, {}};
    Chart rel_chart{"nonlinear_rel_l1", "RelL1 between twin runs", "iteration", "RelL1", true, {}};
    for (double dt : s.reals("nonlinear.step_sizes")) {
        Cnn1System<T> sys(nonlinear_config(s, dt));
        RunOptions o = run_options(s, steps, dt);
        o.k = k;
        TrajectoryRecord rec;
        if (k > 1)
            rec = std::move(twin_run<T>(sys, theta0, o).base.record);
        else
            rec = std::move(run_trajectory<T>(sys, theta0, o).record);
        // The loss-only verdict, then the one that may consult the twin.
        std::vector<double> rel;
        rel.swap(rec.rel_l1);
        const auto alone = classify_trajectory(rec, steps, params);
        rel.swap(rec.rel_l1);
        const auto with_twin = classify_trajectory(rec, steps, params);
        rec.set_classification(alone.cls);
        const std::string tag = num(dt);
        summary.add({tag, to_string(alone.cls), rec.rel_l1.empty() ? "" : to_string(with_twin.cls), alone.reason,
                     count_text(rec.size() - 1), num(rec.loss.front(), p), num(rec.loss.back(), p),
                     num(max_of(rec.loss), p), rec.rel_l1.empty() ? "" : num(max_of(rec.rel_l1))});
        out.facts.emplace_back("step_" + tag + ".class", to_string(alone.cls));
        loss_chart.series.push_back(iteration_series("dt " + tag, rec.loss));
        if (!rec.rel_l1.empty()) rel_chart.series.push_back(iteration_series("dt " + tag, rec.rel_l1));
        out.trajectories.push_back({"nonlinear_dt_" + tag, std::move(rec), p});
    }
    out.tables.push_back(std::move(summary));

    if (s.flag("nonlinear.scan")) {
        Table bounds{"nonlinear_boundaries", {"boundary", "value", "stable_side", "failing_side", "probes"}, {}};
        Table probes{"nonlinear_scan_probes", {"scan", "step", "class"}, {}};
        const auto trial = [&](double dt) { return nonlinear_trial<T>(s, dt); };
        const ScanResult lo = scan(s, trial, pair_of(s, "nonlinear.lower_bracket"), ScanThreshold::RestrainedOrWorse);
        const ScanResult hi = scan(s, trial, pair_of(s, "nonlinear.upper_bracket"), ScanThreshold::Unstable);
        for (const auto& [name, r] : {std::pair{"stable_restrained", &lo}, std::pair{"restrained_unstable", &hi}}) {
            bounds.add({name, num(r->boundary), num(r->stable_side), num(r->failing_side), count_text(r->probes.size())});
            add_probes(probes, name, *r);
            out.facts.emplace_back(std::string(name) + "_boundary", num(r->boundary));
        }
        out.tables.push_back(std::move(bounds));
        out.tables.push_back(std::move(probes));
    }
    out.charts.push_back(std::move(loss_chart));
    if (!rel_chart.series.empty()) out.charts.push_back(std::move(rel_chart));
    return out;
}

ExperimentOutput run_nonlinear_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("precision"));
    return with_precision(p, [&](auto tag) { return nonlinear_impl<decltype(tag)>(s, p); });
}

// ---------------------------------------------------------------- nesterov-bounds

template <class T>
ExperimentOutput nesterov_impl(const Settings& s) {
    ExperimentOutput out{"nesterov-bounds", {}, {}, {}, {}};
    const double a = s.real("nesterov.residual");
    const std::size_t steps = s.count("nesterov.steps");
    const auto params = classifier_params(s);
    Table summary{"nesterov_bounds",
                  {"mu", "step", "gradient_step", "alpha_max_analytic", "alpha_max_exact", "alpha_min_analytic",
                   "alpha_max_emp", "probes"},
                  {}};
    Table probes{"nesterov_scan_probes", {"mu", "weight_decay", "class"}, {}};
    for (double mu : s.reals("nesterov.momenta")) {
        NesterovConfig cfg;
        cfg.mu = mu;
        cfg.dt = s.real("nesterov.step");
        cfg.base.image = checkerboard(s.count("nesterov.image_size"));
        cfg.base.beta = s.real("nesterov.swish_beta");
        cfg.base.dt = cfg.dt;
        cfg.base.window = s.count("nesterov.image_size");
        cfg.validate();
        const StabilityBounds limit = nesterov_bounds(cfg, a);
        const StabilityBounds exact = nesterov_exact_bounds(cfg, a);

        Cnn1Config c = cfg.base;
        c.window = s.count("nesterov.window");
        const auto k0 = random_kernel(c.window, c.window, s.seed("seed"));
        const auto theta0 = narrow<T>(k0.storage());
        auto trial = [&](double alpha) {
            c.alpha = alpha;
            LinearFlowSystem<T> sys(c, a);
            RunOptions o = run_options(s, steps, cfg.gradient_step());
            o.scheme = Scheme::Nesterov;
            o.mu = mu;
            const auto t = run_trajectory<T>(sys, theta0, o);
            return classify_trajectory(t.record, steps, params).cls;
        };
        const ScanResult r = scan(s, trial, pair_of(s, "nesterov.bracket"), ScanThreshold::Unstable);
        const std::string tag = num(mu);
        add_probes(probes, tag, r);
        summary.add({tag, num(cfg.dt), num(cfg.gradient_step()), num(limit.alpha_max), num(exact.alpha_max),
                     num(limit.alpha_min), num(r.boundary), count_text(r.probes.size())});
        out.facts.emplace_back("mu_" + tag + ".alpha_max_emp", num(r.boundary));
    }
    out.tables.push_back(std::move(summary));
    out.tables.push_back(std::move(probes));
    return out;
}

ExperimentOutput run_nesterov_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("precision"));
    return with_precision(p, [&](auto tag) { return nesterov_impl<decltype(tag)>(s); });
}

// ---------------------------------------------------------------- eos

template <class T>
ExperimentOutput eos_impl(const Settings& s, Precision p) {
    ExperimentOutput out{"eos", {}, {}, {}, {}};
    const std::size_t steps = s.count("eos.steps");
    const auto params = classifier_params(s);
    const auto theta0 = narrow<T>(nonlinear_init(s));
    Table summary{"eos_summary",
                  {"step", "max_normalized_sharpness", "at_iteration", "measurements", "exceeds_two", "class"},
                  {}};
    Chart chart{"eos_sharpness", "normalized sharpness lr * lambda_max", "iteration", "lr * lambda_max", false, {}};
    for (double dt : s.reals("eos.step_sizes")) {
        Cnn1System<T> sys(nonlinear_config(s, dt));
        RunOptions o = run_options(s, steps, dt);
        o.sharpness_every = s.count("eos.every");
        auto t = run_trajectory<T>(sys, theta0, o);
        const auto cls = classify_trajectory(t.record, steps, params).cls;
        t.record.set_classification(cls);
        double peak = -std::numeric_limits<double>::infinity();
        std::size_t at = 0, measured = 0;
        for (std::size_t i = 0; i < t.record.sharpness.size(); ++i)
            if (const auto& v = t.record.sharpness[i]) {
                ++measured;
                if (*v > peak) {
                    peak = *v;
                    at = i;
                }
            }
        const std::string tag = num(dt);
        summary.add({tag, num(peak), count_text(at), count_text(measured), peak > 2 ? "true" : "false",
                     to_string(cls)});
        out.facts.emplace_back("step_" + tag + ".max_normalized_sharpness", num(peak));
        chart.series.push_back(measured_series("dt " + tag, t.record.sharpness));
        out.trajectories.push_back({"eos_dt_" + tag, std::move(t.record), p});
    }
    out.tables.push_back(std::move(summary));
    out.charts.push_back(std::move(chart));
    return out;
}

ExperimentOutput run_eos_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("precision"));
    return with_precision(p, [&](auto tag) { return eos_impl<decltype(tag)>(s, p); });
}

// ---------------------------------------------------------------- layers

MlcnnConfig layers_config(const Settings& s, std::size_t depth, double alpha, double lr) {
    MlcnnConfig c;
    c.kernel_sizes.assign(depth, s.count("layers.kernel"));
    c.beta = s.real("layers.swish_beta");
    c.alpha = alpha;
    c.dt = lr;
    c.precision = parse_precision(s.text("precision"));
    c.boundary = parse_boundary(s.text("layers.boundary"));
    c.gamma = parse_gamma_mode(s.text("layers.gamma"));
    return c;
}

template <class T>
ExperimentOutput layers_impl(const Settings& s, Precision p) {
    ExperimentOutput out{"layers", {}, {}, {}, {}};
    const Dataset data = dataset_from(s);
    const std::size_t steps = s.count("layers.steps");
    const double scale = s.real("layers.init_scale");
    const double lr_start = s.real("layers.lr_start"), factor = s.real("layers.lr_factor"),
                 lr_max = s.real("layers.lr_max");
    const auto params = classifier_params(s);

    Table grid{"layers_grid", {"weight_decay", "layers", "lr", "class", "source"}, {}};
    Table bounds{"layers_boundaries",
                 {"weight_decay", "layers", "boundary", "stable_side", "failing_side", "censored", "failing_class"},
                 {}};
    Table per_layer{"layers_layer_bounds",
                    {"weight_decay", "layers", "layer", "gamma", "effective_a", "shift_min", "shift_max", "dt_max"},
                    {}};
    Chart chart{"layers_loss", "training loss at the first failing learning rate", "iteration", "loss", true, {}};
    out.facts.emplace_back("samples", count_text(data.size()));

    for (double alpha : s.reals("layers.weight_decays")) {
        for (std::size_t depth : s.counts("layers.depths")) {
            const MlcnnConfig cfg = layers_config(s, depth, alpha, lr_start);
            const MlDatasetSystem<T> sys(cfg, data);
            const LayerStack<T> init = make_stack<T>(cfg, scale, s.seed("seed"));
            const std::vector<T> theta0 = sys.flatten(init);
            const std::string wd = num(alpha), nl = std::to_string(depth);

            auto run = [&](double lr) { return run_trajectory<T>(sys, theta0, run_options(s, steps, lr)); };
            auto trial = [&](double lr) { return classify_trajectory(run(lr).record, steps, params).cls; };

            // Geometric sweep up to the first failure, then bisection inside
            // the last passing / first failing pair.
            std::optional<double> passing, failing;
            TrajectoryClass failing_class = TrajectoryClass::Stable;
            for (double lr = lr_start; lr <= lr_max * (1 + 1e-12); lr *= factor) {
                const auto cls = trial(lr);
                grid.add({wd, nl, num(lr), to_string(cls), "sweep"});
                if (cls != TrajectoryClass::Stable) {
                    failing = lr;
                    failing_class = cls;
                    break;
                }
                passing = lr;
            }
            std::string censored = "none";
            double boundary = 0, stable_side = 0, failing_side = 0;
            if (!failing) {
                censored = "above";
                boundary = stable_side = *passing;
            } else if (!passing) {
                censored = "below";
                boundary = failing_side = *failing;
            } else {
                const ScanResult r = empirical_bound_scan(trial, *passing, *failing, ScanThreshold::RestrainedOrWorse,
                                                          s.real("scan.rel_width"), s.count("scan.max_trials"));
                for (std::size_t i = 2; i < r.probes.size(); ++i)
                    grid.add({wd, nl, num(r.probes[i].value), to_string(r.probes[i].cls), "bisection"});
                boundary = r.boundary;
                stable_side = r.stable_side;
                failing_side = r.failing_side;
            }
            bounds.add({wd, nl, num(boundary), passing ? num(stable_side) : "", failing ? num(failing_side) : "",
                        censored, failing ? to_string(failing_class) : ""});
            out.facts.emplace_back("alpha_" + wd + ".layers_" + nl + ".boundary", num(boundary));

            // Per-layer bounds at the initial kernels on the first sample.
            MlcnnConfig bc = layers_config(s, depth, alpha, boundary);
            bc.label = data.labels[0] == 0 ? 0 : 1;
            LayerStack<T> stack = init;
            ml_grad(stack, bc, data.images[0].template cast<T>());
            for (std::size_t i = 0; i < depth; ++i) {
                const StabilityBounds b = layer_bounds(stack, i, bc);
                per_layer.add({wd, nl, std::to_string(i), num(downstream_gamma(stack, i, bc.gamma)),
                               num(effective_a(stack, i, bc)), num(b.shift_min), num(b.shift_max),
                               num(b.dt_max(alpha))});
            }

            const std::string stem = "layers_alpha_" + wd + "_n" + nl;
            if (passing) {
                auto t = run(stable_side);
                t.record.set_classification(classify_trajectory(t.record, steps, params).cls);
                out.trajectories.push_back({stem + "_stable", std::move(t.record), p});
            }
            if (failing) {
                auto t = run(failing_side);
                t.record.set_classification(classify_trajectory(t.record, steps, params).cls);
                chart.series.push_back(iteration_series("alpha " + wd + ", " + nl + " layers", t.record.loss));
                out.trajectories.push_back({stem + "_failing", std::move(t.record), p});
            }
        }
    }
    out.tables.push_back(std::move(grid));
    out.tables.push_back(std::move(bounds));
    out.tables.push_back(std::move(per_layer));
    out.charts.push_back(std::move(chart));
    return out;
}

ExperimentOutput run_layers_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("precision"));
    return with_precision(p, [&](auto tag) { return layers_impl<decltype(tag)>(s, p); });
}

// ---------------------------------------------------------------- perturb

template <class T>
ExperimentOutput perturb_impl(const Settings& s, Precision p) {
    ExperimentOutput out{"perturb", {}, {}, {}, {}};
    const std::size_t steps = s.count("perturb.steps");
    const auto params = classifier_params(s);
    const auto theta0 = narrow<T>(nonlinear_init(s));
    Table summary{"perturb_summary",
                  {"step", "k", "identical", "first_index", "first", "peak", "peak_index", "final", "orders",
                   "peak_slope", "tail_slope", "trend_slope", "class"},
                  {}};
    Chart chart{"perturb_rel_l1", "RelL1 between the k = 1 run and its twin", "iteration", "RelL1", true, {}};
    for (double dt : s.reals("perturb.step_sizes")) {
        Cnn1System<T> sys(nonlinear_config(s, dt));
        for (std::size_t k : s.counts("perturb.multipliers")) {
            RunOptions o = run_options(s, steps, dt);
            o.k = static_cast<std::uint32_t>(k);
            auto tw = twin_run<T>(sys, theta0, o);
            TrajectoryRecord& rec = tw.base.record;
            std::vector<double> rel;
            rel.swap(rec.rel_l1);
            const auto cls = classify_trajectory(rec, steps, params).cls;
            rel.swap(rec.rel_l1);
            rec.set_classification(cls);
            const GrowthSummary g = summarize_growth(tw.rel_l1, params.tail_fraction);
            const std::string tag = num(dt), kt = std::to_string(k);
            summary.add({tag, kt, g.identical ? "true" : "false", count_text(g.first_index), num(g.first),
                         num(g.peak), count_text(g.peak_index), num(g.final), num(g.orders), num(g.peak_slope),
                         num(g.tail_slope), num(g.trend_slope), to_string(cls)});
            out.facts.emplace_back("step_" + tag + ".k_" + kt + ".orders", num(g.orders));
            if (!g.identical) chart.series.push_back(iteration_series("dt " + tag + ", k " + kt, tw.rel_l1));
            out.trajectories.push_back({"perturb_dt_" + tag + "_k" + kt, std::move(rec), p});
        }
    }
    out.tables.push_back(std::move(summary));
    out.charts.push_back(std::move(chart));
    return out;
}

ExperimentOutput run_perturb_experiment(const Settings& s) {
    const Precision p = parse_precision(s.text("perturb.precision"));
    return with_precision(p, [&](auto tag) { return perturb_impl<decltype(tag)>(s, p); });
}

}  // namespace

ClassifierParams classifier_params(const Settings& s) {
    ClassifierParams p;
    p.divergence_factor = s.real("classifier.divergence_factor");
    p.tail_fraction = s.real("classifier.tail_fraction");
    p.flat_tolerance = s.real("classifier.flat_tolerance");
    p.bound_factor = s.real("classifier.bound_factor");
    p.prominence = s.real("classifier.prominence");
    p.min_peaks = s.count("classifier.min_peaks");
    p.min_iterations = s.count("classifier.min_iterations");
    return p;
}

SharpnessOptions sharpness_options(const Settings& s) {
    SharpnessOptions o;
    o.hvp_eps = s.real("sharpness.hvp_eps");
    o.iters = s.count("sharpness.iters");
    o.tolerance = s.real("sharpness.tolerance");
    o.seed = s.seed("seed");
    return o;
}

Dataset dataset_from(const Settings& s) {
    const std::string& kind = s.text("dataset.kind");
    if (kind != "idx")
        return synth_dataset(parse_synth_kind(kind), s.count("dataset.samples"), s.count("dataset.size"),
                             s.seed("dataset.seed"));
    const auto keep = s.counts("dataset.keep");
    if (keep.size() < 2) throw ConfigError("key 'dataset.keep' needs at least two labels");
    std::set<int> wanted;
    for (auto k : keep) wanted.insert(static_cast<int>(k));
    Dataset d = load_idx(s.text("dataset.images"), s.text("dataset.labels"), wanted);
    for (int& l : d.labels) l = l == static_cast<int>(keep[0]) ? 0 : 1;
    return d;
}

Cnn1Config nonlinear_config(const Settings& s, double dt) {
    Cnn1Config c;
    c.image = checkerboard(s.count("nonlinear.image_size"));
    c.label = static_cast<int>(s.integer("nonlinear.label"));
    c.beta = s.real("nonlinear.swish_beta");
    c.alpha = s.real("nonlinear.weight_decay");
    c.window = s.count("nonlinear.window");
    c.dt = dt;
    c.steps = s.count("nonlinear.steps");
    c.precision = parse_precision(s.text("precision"));
    c.boundary = parse_boundary(s.text("nonlinear.boundary"));
    return c;
}

std::vector<double> nonlinear_init(const Settings& s) {
    const std::size_t w = s.count("nonlinear.window");
    std::vector<double> k = random_kernel(w, w, s.seed("seed")).storage();
    const double scale = s.real("nonlinear.init_scale");
    for (double& v : k) v *= scale;
    return k;
}

const std::vector<ExperimentEntry>& experiment_catalog() {
    static const std::vector<ExperimentEntry> catalog{
        {"heat", "explicit heat equation either side of the CFL limit", run_heat_experiment},
        {"beltrami", "Beltrami denoising flow at multiples of its strict stable step", run_beltrami_experiment},
        {"linear-bounds", "weight-decay window of the linearized one-layer flow, analytic and scanned",
         run_linear_experiment},
        {"nonlinear", "three-zone behaviour of the nonlinear one-layer flow", run_nonlinear_experiment},
        {"nesterov-bounds", "weight-decay bound under Nesterov momentum", run_nesterov_experiment},
        {"eos", "normalized sharpness along nonlinear trajectories", run_eos_experiment},
        {"layers", "stable learning rate against network depth", run_layers_experiment},
        {"perturb", "RelL1 growth between twin runs with a rescaled update", run_perturb_experiment},
    };
    return catalog;
}

const ExperimentEntry& find_experiment(const std::string& name) {
    for (const auto& e : experiment_catalog())
        if (e.name == name) return e;
    throw ConfigError("unknown experiment '" + name + "'");
}

void validate_settings(const Settings& s) {
    auto check = [](auto&& f, const std::string& key) {
        try {
            f();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("key '" + key + "': " + e.what());
        }
    };
    check([&] { parse_precision(s.text("precision")); }, "precision");
    check([&] { parse_precision(s.text("perturb.precision")); }, "perturb.precision");
    check([&] { parse_boundary(s.text("nonlinear.boundary")); }, "nonlinear.boundary");
    check([&] { parse_boundary(s.text("layers.boundary")); }, "layers.boundary");
    check([&] { parse_gamma_mode(s.text("layers.gamma")); }, "layers.gamma");
    const std::string& kind = s.text("dataset.kind");
    if (kind == "idx") {
        if (s.text("dataset.images").empty() || s.text("dataset.labels").empty())
            throw ConfigError("dataset.kind idx needs dataset.images and dataset.labels");
    } else {
        check([&] { parse_synth_kind(kind); }, "dataset.kind");
    }
    for (const char* key : {"linear.upper_bracket", "linear.lower_bracket", "nonlinear.lower_bracket",
                            "nonlinear.upper_bracket", "nesterov.bracket"})
        pair_of(s, key);
    if (s.counts("linear.steps").size() != s.counts("linear.windows").size())
        throw ConfigError("key 'linear.steps' needs one budget per entry of linear.windows");
    for (const char* key : {"layers.depths", "perturb.multipliers", "dataset.keep"}) s.counts(key);
    for (auto k : s.counts("perturb.multipliers"))
        if (k == 0 || k > 0xffffffffu) throw ConfigError("key 'perturb.multipliers' expects values in [1, 2^32)");
    if (s.count("nonlinear.twin_multiplier") == 0) throw ConfigError("key 'nonlinear.twin_multiplier' must be >= 1");
    const auto label = s.integer("nonlinear.label");
    if (label != 0 && label != 1) throw ConfigError("key 'nonlinear.label' must be 0 or 1");
    if (!(s.real("layers.lr_factor") > 1)) throw ConfigError("key 'layers.lr_factor' must be > 1");
    if (!(s.real("layers.lr_start") > 0)) throw ConfigError("key 'layers.lr_start' must be > 0");
    if (!(s.real("scan.rel_width") > 0)) throw ConfigError("key 'scan.rel_width' must be > 0");
}

ExperimentOutput run_experiment(const std::string& name, const Settings& s) {
    const ExperimentEntry& e = find_experiment(name);
    validate_settings(s);
    return e.run(s);
}

}  // namespace rlab
