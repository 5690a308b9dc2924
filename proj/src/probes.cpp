#include "rlab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rlab {

void PerturbConfig::validate() const {
    if (k < 1) throw std::invalid_argument("perturb: k must be >= 1");
}

template <class T>
void perturbed_update(std::span<T> theta, std::span<const T> g, double eta, std::uint32_t k) {
    if (theta.size() != g.size()) throw std::invalid_argument("perturbed_update: length mismatch");
    if (k < 1) throw std::invalid_argument("perturbed_update: k must be >= 1");
    const T kk = static_cast<T>(k);
    const T e = static_cast<T>(eta) / kk;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const T q = kk * g[i];
        const T u = e * q;
        theta[i] = theta[i] - u;
    }
}

template <class T>
double rel_l1(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw std::invalid_argument("rel_l1: length mismatch");
    if (a.empty()) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        const double den = std::abs(x) + std::abs(y);
        if (den > 0) s += std::abs(x - y) / den;
    }
    return 2.0 * s / static_cast<double>(a.size());
}

std::string to_string(TrajectoryClass c) {
    switch (c) {
        case TrajectoryClass::Stable: return "stable";
        case TrajectoryClass::Restrained: return "restrained";
        case TrajectoryClass::Unstable: return "unstable";
    }
    return "?";
}

void TrajectoryRecord::check_lengths() const {
    const std::size_t n = loss.size();
    auto ok = [n](std::size_t m) { return m == 0 || m == n; };
    if (!ok(grad_inf.size()) || state_inf.size() != n || !ok(sharpness.size()) || !ok(rel_l1.size()) ||
        !ok(regime_counts.size()))
        throw std::logic_error("trajectory record: series lengths differ");
}

void TrajectoryRecord::set_classification(TrajectoryClass c) {
    if (class_) throw std::logic_error("trajectory record: already classified");
    class_ = c;
}

std::size_t count_prominent_peaks(std::span<const double> xs, double min_prominence) {
    const std::size_t n = xs.size();
    std::size_t count = 0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        // Plateaus count once, at their left edge.
        if (!(xs[i] > xs[i - 1] && xs[i] >= xs[i + 1])) continue;
        double left = xs[i], right = xs[i];
        for (std::size_t j = i; j-- > 0;) {
            if (xs[j] > xs[i]) break;
            left = std::min(left, xs[j]);
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (xs[j] > xs[i]) break;
            right = std::min(right, xs[j]);
        }
        if (xs[i] - std::max(left, right) > min_prominence) ++count;
    }
    return count;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

double mean(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Mean of the second half of the window against the first half.
bool rising(std::span<const double> v) {
    const std::size_t h = v.size() / 2;
    return h > 0 && mean(v.subspan(h)) > mean(v.first(h));
}

}  // namespace

Classification classify_trajectory(const TrajectoryRecord& rec, std::size_t budget, const ClassifierParams& p) {
    rec.check_lengths();
    Classification out;
    const std::size_t n = rec.size();
    if (n == 0) {
        out.indeterminate = true;
        out.reason = "empty record";
        return out;
    }
    const double ref = rec.state_inf[0] > 0 ? rec.state_inf[0] : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(rec.loss[i]) || !std::isfinite(rec.state_inf[i]) ||
            rec.state_inf[i] > p.divergence_factor * ref) {
            out.cls = TrajectoryClass::Unstable;
            out.reason = "state left the divergence bound at iteration " + std::to_string(i);
            return out;
        }
    }
    if (rec.diverged) {
        out.cls = TrajectoryClass::Unstable;
        out.reason = "run flagged divergence";
        return out;
    }
    out.indeterminate = n < p.min_iterations || n < budget + 1;

    const std::size_t tail_len = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(p.tail_fraction * static_cast<double>(n))));
    const std::span<const double> loss(rec.loss);
    const auto tail = loss.last(std::min(tail_len, n));
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    const double range = *hi - *lo;
    const bool have_twin = !rec.rel_l1.empty();
    const bool twin_rising = have_twin && rising(std::span<const double>(rec.rel_l1).last(tail.size()));

    if (range < p.flat_tolerance * std::abs(rec.loss[0]) && !twin_rising) {
        out.cls = TrajectoryClass::Stable;
        out.reason = "loss flat over the tail";
        return out;
    }
    // Bursting cycles spend most of their time far below their spikes, so
    // the median alone would call every burst unbounded; the loss already
    // reached before the tail also counts as its established range.
    const double med = median(rec.loss);
    const auto head = loss.first(n - tail.size());
    const double history = head.empty() ? 0.0 : *std::max_element(head.begin(), head.end());
    const bool bounded = *hi < p.bound_factor * std::max(std::abs(med), history);
    const std::size_t peaks = count_prominent_peaks(tail, p.prominence * std::abs(med));
    if (bounded && peaks >= p.min_peaks) {
        out.cls = TrajectoryClass::Restrained;
        out.reason = std::to_string(peaks) + " prominent peaks in the tail";
        return out;
    }
    out.fallback = true;
    out.cls = twin_rising ? TrajectoryClass::Restrained : TrajectoryClass::Stable;
    out.reason = twin_rising ? "twin divergence rising" : "loss still settling, no recurrent oscillation";
    return out;
}

template <class T>
SharpnessResult sharpness(const GradientSystem<T>& sys, std::span<const T> theta, const SharpnessOptions& opt,
                          std::vector<double>* warm) {
    const std::size_t n = sys.dimension();
    if (theta.size() != n) throw std::invalid_argument("sharpness: parameter length mismatch");
    std::vector<double> v(n);
    if (warm && warm->size() == n) {
        v = *warm;
    } else {
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& x : v) x = nd(rng);
    }
    auto normalize = [](std::vector<double>& x) {
        double s = 0;
        for (double e : x) s += e * e;
        s = std::sqrt(s);
        if (s > 0)
            for (double& e : x) e /= s;
        return s;
    };
    normalize(v);

    double tinf = 0;
    for (T x : theta) tinf = std::max(tinf, std::abs(static_cast<double>(x)));
    const double eps = opt.hvp_eps * (1.0 + tinf);

    std::vector<T> plus(n), minus(n), gp(n), gm(n);
    std::vector<double> hv(n);
    SharpnessResult r;
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t it = 0; it < opt.iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            plus[i] = static_cast<T>(static_cast<double>(theta[i]) + eps * v[i]);
            minus[i] = static_cast<T>(static_cast<double>(theta[i]) - eps * v[i]);
        }
        sys.gradient(plus, gp);
        sys.gradient(minus, gm);
        double rq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            hv[i] = (static_cast<double>(gp[i]) - static_cast<double>(gm[i])) / (2 * eps);
            rq += v[i] * hv[i];
        }
        r.lambda = rq;
        r.iterations = it + 1;
        const double norm = normalize(hv);
        if (norm == 0) {
            r.converged = true;
            break;
        }
        v.swap(hv);
        if (std::abs(rq - prev) <= opt.tolerance * std::abs(rq)) {
            r.converged = true;
            break;
        }
        prev = rq;
    }
    if (warm) *warm = v;
    return r;
}

namespace {

template <class T>
double sup_abs(std::span<const T> x) {
    double m = 0;
    for (T v : x) {
        const double a = std::abs(static_cast<double>(v));
        if (!(a <= m)) m = a;  // NaN sticks
    }
    return m;
}

/// One trajectory advanced a step at a time, so twins can run in lockstep.
template <class T>
class Runner {
public:
    Runner(const GradientSystem<T>& sys, std::vector<T> theta0, const RunOptions& opt, std::uint32_t k)
        : sys_(sys), opt_(opt), k_(k), theta_(std::move(theta0)), prev_(theta_), grad_(theta_.size()) {
        if (theta_.size() != sys.dimension()) throw std::invalid_argument("run: parameter length mismatch");
        const double s = sup_abs<T>(theta_);
        ref_ = s > 0 ? s : 1.0;
    }

    /// Records the current state; returns false once the run has diverged.
    bool observe(std::size_t n, const StateObserver<T>& observer) {
        auto& r = rec_.record;
        const double l = sys_.evaluate(theta_, grad_);
        const double s = sup_abs<T>(theta_);
        r.loss.push_back(l);
        r.grad_inf.push_back(sup_abs<T>(grad_));
        r.state_inf.push_back(s);
        if (opt_.sharpness_every > 0) {
            if (n % opt_.sharpness_every == 0 && std::isfinite(s)) {
                const auto sh = sharpness<T>(sys_, theta_, opt_.sharpness, &warm_);
                r.sharpness.emplace_back(opt_.lr * sh.lambda);
            } else {
                r.sharpness.emplace_back(std::nullopt);
            }
        }
        if (observer) observer(n, theta_, r);
        if (!std::isfinite(l) || !std::isfinite(s) || s > opt_.divergence_factor * ref_) {
            r.diverged = true;
            return false;
        }
        return true;
    }

    void advance() {
        if (opt_.scheme == Scheme::GradientDescent) {
            perturbed_update<T>(theta_, grad_, opt_.lr, k_);
            return;
        }
        const T mu = static_cast<T>(opt_.mu);
        std::vector<T> v(theta_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = theta_[i] + mu * (theta_[i] - prev_[i]);
        sys_.gradient(v, grad_);
        perturbed_update<T>(v, grad_, opt_.lr, k_);
        prev_.swap(theta_);
        theta_.swap(v);
    }

    Trajectory<T> finish() {
        rec_.state = theta_;
        return std::move(rec_);
    }

    const std::vector<T>& state() const { return theta_; }
    TrajectoryRecord& record() { return rec_.record; }

private:
    const GradientSystem<T>& sys_;
    const RunOptions& opt_;
    std::uint32_t k_;
    std::vector<T> theta_, prev_, grad_;
    std::vector<double> warm_;
    double ref_ = 1.0;
    Trajectory<T> rec_;
};

}  // namespace

template <class T>
Trajectory<T> run_trajectory(const GradientSystem<T>& sys, std::vector<T> theta0, const RunOptions& opt,
                             const StateObserver<T>& observer) {
    Runner<T> run(sys, std::move(theta0), opt, opt.k);
    for (std::size_t n = 0;; ++n) {
        if (!run.observe(n, observer) || n == opt.steps) break;
        run.advance();
    }
    return run.finish();
}

template <class T>
TwinRun<T> twin_run(const GradientSystem<T>& sys, const std::vector<T>& theta0, const RunOptions& opt,
                    const StateObserver<T>& observer) {
    Runner<T> a(sys, theta0, opt, 1), b(sys, theta0, opt, opt.k);
    TwinRun<T> out;
    for (std::size_t n = 0;; ++n) {
        const bool ok_a = a.observe(n, observer);
        const bool ok_b = b.observe(n, observer);
        const double d = rel_l1<T>(a.state(), b.state());
        out.rel_l1.push_back(d);
        a.record().rel_l1.push_back(d);
        b.record().rel_l1.push_back(d);
        if (!ok_a || !ok_b || n == opt.steps) break;
        a.advance();
        b.advance();
    }
    out.base = a.finish();
    out.perturbed = b.finish();
    return out;
}

namespace {

/// Least-squares slope of log10(y) against x over the given points.
double log_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += std::log10(y[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (std::log10(y[i]) - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

GrowthSummary summarize_growth(std::span<const double> rel, double tail_fraction, std::size_t window) {
    GrowthSummary g;
    const std::size_t n = rel.size();
    if (n == 0) return g;
    g.final = rel[n - 1];
    std::size_t first = 0;
    while (first < n && !(rel[first] > 0)) ++first;
    if (first == n) return g;
    g.identical = false;
    g.first_index = first;
    g.first = rel[first];
    std::vector<double> xs, ys;
    for (std::size_t i = first; i < n; ++i) {
        if (rel[i] > g.peak) {
            g.peak = rel[i];
            g.peak_index = i;
        }
        if (rel[i] > 0 && std::isfinite(rel[i])) {
            xs.push_back(static_cast<double>(i));
            ys.push_back(rel[i]);
        }
    }
    g.orders = std::log10(g.peak / g.first);
    g.trend_slope = log_slope(xs, ys);
    if (window == 0) window = std::max<std::size_t>(5, n / 50);
    for (std::size_t s = 0; s + window <= xs.size(); ++s)
        g.peak_slope = std::max(g.peak_slope, log_slope(std::span(xs).subspan(s, window),
                                                        std::span(ys).subspan(s, window)));
    const double tail_start = static_cast<double>(n) * (1.0 - tail_fraction);
    const auto at = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), tail_start) - xs.begin());
    g.tail_slope = log_slope(std::span(xs).subspan(at), std::span(ys).subspan(at));
    return g;
}

ScanResult empirical_bound_scan(const std::function<TrajectoryClass(double)>& trial, double passing, double failing,
                                ScanThreshold threshold, double rel_width, std::size_t max_trials) {
    if (!(rel_width > 0)) throw std::invalid_argument("scan: rel_width must be > 0");
    ScanResult r;
    auto fails = [&](double x) {
        const TrajectoryClass c = trial(x);
        r.probes.push_back({x, c});
        return threshold == ScanThreshold::Unstable ? c == TrajectoryClass::Unstable : c != TrajectoryClass::Stable;
    };
    if (fails(passing))
        throw std::invalid_argument("scan: bracket end " + std::to_string(passing) + " is not passing");
    if (!fails(failing))
        throw std::invalid_argument("scan: bracket end " + std::to_string(failing) + " is not failing");
    double ok = passing, bad = failing;
    const bool geometric = (ok > 0 && bad > 0) || (ok < 0 && bad < 0);
    while (r.probes.size() < max_trials) {
        const double mid = geometric ? std::copysign(std::sqrt(ok * bad), ok) : 0.5 * (ok + bad);
        if (std::abs(bad - ok) <= rel_width * std::abs(mid)) break;
        if (fails(mid))
            bad = mid;
        else
            ok = mid;
    }
    r.stable_side = ok;
    r.failing_side = bad;
    r.boundary = geometric ? std::copysign(std::sqrt(ok * bad), ok) : 0.5 * (ok + bad);
    return r;
}

TrajectoryRecord heat_record(const HeatConfig& cfg) {
    const HeatRun run = run_heat(cfg);
    TrajectoryRecord r;
    r.loss = run.energy;
    r.state_inf = run.sup_norm;
    r.diverged = run.diverged;
    return r;
}

TrajectoryRecord beltrami_record(const BeltramiConfig& cfg) {
    const BeltramiRun run = run_beltrami(cfg);
    TrajectoryRecord r;
    r.loss = run.loss;
    r.state_inf = run.sup_norm;
    r.grad_inf = run.step_inf;
    if (!run.diverged && r.grad_inf.size() + 1 == r.loss.size()) {
        // Update direction at the final state, one step past the run.
        BeltramiConfig c = cfg;
        if (c.dt == 0.0) c.dt = beltrami_local_cfl(c.u0, c).strict_dt;
        const auto next = beltrami_step(run.final_u, c);
        double m = 0;
        for (std::size_t i = 0; i < next.values.size(); ++i)
            m = std::max(m, std::abs(next.values[i] - run.final_u.values[i]) / c.dt);
        r.grad_inf.push_back(m);
    }
    if (r.grad_inf.size() != r.loss.size()) r.grad_inf.clear();
    r.diverged = run.diverged;
    return r;
}

#define RLAB_PROBES_INSTANTIATE(T)                                                                              \
    template void perturbed_update<T>(std::span<T>, std::span<const T>, double, std::uint32_t);                 \
    template double rel_l1<T>(std::span<const T>, std::span<const T>);                                          \
    template SharpnessResult sharpness<T>(const GradientSystem<T>&, std::span<const T>, const SharpnessOptions&, \
                                          std::vector<double>*);                                                \
    template Trajectory<T> run_trajectory<T>(const GradientSystem<T>&, std::vector<T>, const RunOptions&,        \
                                             const StateObserver<T>&);                                          \
    template TwinRun<T> twin_run<T>(const GradientSystem<T>&, const std::vector<T>&, const RunOptions&,          \
                                    const StateObserver<T>&);

RLAB_PROBES_INSTANTIATE(float)
RLAB_PROBES_INSTANTIATE(double)

}  // namespace rlab
