#pragma once

#include "rlab/classic_pde.hpp"
#include "rlab/cnn1.hpp"
#include "rlab/gradient_system.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>

namespace rlab {

/// theta - (eta/k) (k g) with every operation rounded in the working precision.
struct PerturbConfig {
    std::uint32_t k = 1;
    Precision precision = Precision::Double;

    void validate() const;
};

/// Order: e = fl(fl(eta)/k), q_i = fl(k g_i), u_i = fl(e q_i), out_i = fl(theta_i - u_i).
template <class T>
void perturbed_update(std::span<T> theta, std::span<const T> g, double eta, std::uint32_t k);

template <class T>
Field2D<T> perturbed_update(const Field2D<T>& theta, const Field2D<T>& g, double eta, const PerturbConfig& pc) {
    Field2D<T> out = theta;
    perturbed_update<T>(out.storage(), g.values(), eta, pc.k);
    return out;
}

/// (2/N) sum |a_i - b_i| / (|a_i| + |b_i|); exact zero pairs contribute 0.
template <class T>
double rel_l1(std::span<const T> a, std::span<const T> b);

/// Shape of a RelL1 series, read on a log10 scale from its first nonzero entry.
struct GrowthSummary {
    bool identical = true;          ///< every entry exactly zero
    std::size_t first_index = 0;    ///< first nonzero entry
    double first = 0.0;
    double peak = 0.0;
    std::size_t peak_index = 0;
    double final = 0.0;
    double orders = 0.0;            ///< log10(peak / first)
    double peak_slope = 0.0;        ///< steepest windowed least-squares slope, decades per iteration
    double tail_slope = 0.0;        ///< least-squares slope over the last tail_fraction of the run
    double trend_slope = 0.0;       ///< least-squares slope from the first nonzero entry to the end
};

/// Zero entries after the first nonzero one are skipped in the slopes.
/// window = 0 picks max(5, n / 50).
GrowthSummary summarize_growth(std::span<const double> rel, double tail_fraction = 0.25, std::size_t window = 0);

enum class TrajectoryClass { Stable, Restrained, Unstable };

std::string to_string(TrajectoryClass c);

/// Per-iteration observables. Entry n describes the state after n updates.
/// Optional series (grad_inf, sharpness, rel_l1, regime_counts) are either
/// empty or as long as `loss`; sharpness entries without a measurement are
/// nullopt.
struct TrajectoryRecord {
    std::vector<double> loss;
    std::vector<double> grad_inf;
    std::vector<double> state_inf;
    std::vector<std::optional<double>> sharpness;  ///< normalized, lr * lambda_max
    std::vector<double> rel_l1;
    std::vector<std::array<std::size_t, 3>> regime_counts;
    bool diverged = false;

    std::size_t size() const { return loss.size(); }
    void check_lengths() const;

    const std::optional<TrajectoryClass>& classification() const { return class_; }
    /// Throws if already classified.
    void set_classification(TrajectoryClass c);

private:
    std::optional<TrajectoryClass> class_;
};

/// Thresholds of the three-way classifier.
struct ClassifierParams {
    double divergence_factor = 1e9;  ///< Unstable when state_inf > factor * initial
    double tail_fraction = 0.25;     ///< window at the end of the run
    double flat_tolerance = 1e-6;    ///< Stable when the tail range < tol * |initial loss|
    /// Restrained needs the tail loss below factor * max(median, pre-tail maximum).
    double bound_factor = 10.0;
    double prominence = 1e-4;        ///< peak prominence, relative to the median loss
    std::size_t min_peaks = 3;
    std::size_t min_iterations = 16;
};

struct Classification {
    TrajectoryClass cls = TrajectoryClass::Stable;
    bool indeterminate = false;  ///< too few iterations to judge
    /// Neither flat nor recurrently oscillating: decided by the twin RelL1
    /// trend (rising -> Restrained), or Stable when there is no twin.
    bool fallback = false;
    std::string reason;
};

Classification classify_trajectory(const TrajectoryRecord& rec, std::size_t budget, const ClassifierParams& p = {});

/// Number of local maxima in xs whose prominence exceeds min_prominence.
std::size_t count_prominent_peaks(std::span<const double> xs, double min_prominence);

struct SharpnessOptions {
    double hvp_eps = 1e-4;
    std::size_t iters = 200;
    double tolerance = 1e-6;
    std::uint64_t seed = 7;
};

struct SharpnessResult {
    double lambda = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Power iteration on central-difference Hessian-vector products,
/// eps = hvp_eps (1 + |theta|_inf). `warm` seeds the start vector and
/// receives the final one when non-null and of the right length.
template <class T>
SharpnessResult sharpness(const GradientSystem<T>& sys, std::span<const T> theta, const SharpnessOptions& opt = {},
                          std::vector<double>* warm = nullptr);

struct RunOptions {
    std::size_t steps = 1000;
    double lr = 0.01;
    Scheme scheme = Scheme::GradientDescent;
    double mu = 0.9;  ///< momentum; the Nesterov gradient step is lr itself
    std::uint32_t k = 1;
    std::size_t sharpness_every = 0;  ///< 0 = never
    SharpnessOptions sharpness;
    double divergence_factor = 1e9;
};

/// Called after each recorded state with (index, state, record); may append
/// to the optional series.
template <class T>
using StateObserver = std::function<void(std::size_t, std::span<const T>, TrajectoryRecord&)>;

template <class T>
struct Trajectory {
    TrajectoryRecord record;
    std::vector<T> state;
};

/// Gradient descent or Nesterov from theta0, recording observables at
/// every state; stops early once the state is non-finite or exceeds
/// divergence_factor times its initial sup norm.
template <class T>
Trajectory<T> run_trajectory(const GradientSystem<T>& sys, std::vector<T> theta0, const RunOptions& opt,
                             const StateObserver<T>& observer = {});

template <class T>
struct TwinRun {
    Trajectory<T> base;       ///< k = 1
    Trajectory<T> perturbed;  ///< k = opt.k
    std::vector<double> rel_l1;
};

/// Runs the k = 1 and k = opt.k trajectories in lockstep from the same state.
template <class T>
TwinRun<T> twin_run(const GradientSystem<T>& sys, const std::vector<T>& theta0, const RunOptions& opt,
                    const StateObserver<T>& observer = {});

/// What counts as failure when scanning.
enum class ScanThreshold { Unstable, RestrainedOrWorse };

struct ScanProbe {
    double value;
    TrajectoryClass cls;
};

struct ScanResult {
    double boundary = 0.0;  ///< midpoint of the final bracket
    double stable_side = 0.0;
    double failing_side = 0.0;
    std::vector<ScanProbe> probes;
};

/// Bisection between a passing and a failing parameter value until the
/// bracket is within rel_width of its midpoint. Both ends are checked first.
ScanResult empirical_bound_scan(const std::function<TrajectoryClass(double)>& trial, double passing, double failing,
                                ScanThreshold threshold = ScanThreshold::Unstable, double rel_width = 1e-2,
                                std::size_t max_trials = 80);

/// Record of a heat run: energy as the loss, sup|u| as the state, no gradient series.
TrajectoryRecord heat_record(const HeatConfig& cfg);
/// Record of a Beltrami run.
TrajectoryRecord beltrami_record(const BeltramiConfig& cfg);

}  // namespace rlab
