#include "rlab/multilayer.hpp"

#include <algorithm>
#include <random>

namespace rlab {

std::string to_string(GammaMode m) { return m == GammaMode::Mean ? "mean" : "max_abs"; }

GammaMode parse_gamma_mode(const std::string& s) {
    if (s == "mean") return GammaMode::Mean;
    if (s == "max_abs") return GammaMode::MaxAbs;
    throw std::invalid_argument("unknown gamma mode '" + s + "' (expected mean or max_abs)");
}

void MlcnnConfig::validate() const {
    if (kernel_sizes.empty()) throw std::invalid_argument("multilayer: need at least one layer");
    for (auto w : kernel_sizes)
        if (w == 0) throw std::invalid_argument("multilayer: kernel size must be > 0");
    if (!(beta > 0)) throw std::invalid_argument("multilayer: beta must be > 0");
    if (label != 0 && label != 1) throw std::invalid_argument("multilayer: label must be 0 or 1");
    if (!(dt >= 0)) throw std::invalid_argument("multilayer: dt must be >= 0");
}

namespace {

Origin origin_for(std::size_t w) {
    const auto h = static_cast<std::ptrdiff_t>(w / 2);
    return {h, h};
}

void check_kernels(const MlcnnConfig& cfg, const std::vector<std::size_t>& shapes, std::size_t rows,
                   std::size_t cols) {
    if (shapes.size() != cfg.layers())
        throw std::invalid_argument("multilayer: stack has " + std::to_string(shapes.size()) + " kernels, config " +
                                    std::to_string(cfg.layers()));
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i] != cfg.kernel_sizes[i])
            throw std::invalid_argument("multilayer: kernel " + std::to_string(i) + " has the wrong shape");
        if (shapes[i] > rows || shapes[i] > cols)
            throw std::invalid_argument("multilayer: kernel " + std::to_string(i) + " larger than the image");
    }
}

}  // namespace

template <class T>
LayerStack<T> make_stack(const MlcnnConfig& cfg, double scale, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    LayerStack<T> s;
    for (auto w : cfg.kernel_sizes) {
        Field2D<T> k(w, w);
        for (auto& v : k.storage()) v = static_cast<T>(scale * n(rng));
        s.kernels.push_back(std::move(k));
    }
    return s;
}

template <class T>
T ml_forward(LayerStack<T>& s, const MlcnnConfig& cfg, const Field2D<T>& image) {
    std::vector<std::size_t> shapes;
    for (const auto& k : s.kernels) {
        if (k.rows() != k.cols()) throw std::invalid_argument("multilayer: kernels must be square");
        shapes.push_back(k.rows());
    }
    check_kernels(cfg, shapes, image.rows(), image.cols());

    const T beta = static_cast<T>(cfg.beta);
    const std::size_t n = s.layers();
    s.inputs.assign(1, image);
    s.preacts.clear();
    s.gates.clear();
    for (std::size_t i = 0; i < n; ++i) {
        const ImageCorrelator<T> corr(s.inputs[i], cfg.boundary, s.kernels[i].rows());
        Field2D<T> p = corr.correlate(s.kernels[i], origin_for(s.kernels[i].rows()));
        Field2D<T> gate(p.rows(), p.cols()), act(p.rows(), p.cols());
        for (std::size_t j = 0; j < p.size(); ++j) {
            const T x = p.values()[j];
            const T g = logistic(beta * x);
            gate.storage()[j] = g;
            act.storage()[j] = x * g;
        }
        s.preacts.push_back(std::move(p));
        s.gates.push_back(std::move(gate));
        s.inputs.push_back(std::move(act));
    }
    s.logit = det_sum<T>(s.inputs.back().values());
    s.yhat = logistic(s.logit);
    s.downstream.clear();
    return s.yhat;
}

template <class T>
LossValue<T> ml_loss(const LayerStack<T>& s, const MlcnnConfig& cfg) {
    LossValue<T> out;
    const T ce = cross_entropy(s.logit, cfg.label, out.clamped);
    T reg = 0;
    for (const auto& k : s.kernels) {
        std::vector<T> sq(k.size());
        for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = k.values()[i] * k.values()[i];
        reg += det_sum<T>(sq);
    }
    out.value = ce + T(0.5) * static_cast<T>(cfg.alpha) * reg;
    return out;
}

template <class T>
std::vector<Field2D<T>> ml_grad(LayerStack<T>& s, const MlcnnConfig& cfg, const Field2D<T>& image,
                                bool include_decay) {
    ml_forward(s, cfg, image);
    const std::size_t n = s.layers();
    const T beta = static_cast<T>(cfg.beta), alpha = static_cast<T>(cfg.alpha);
    const T a = output_residual(s.logit, cfg.label);

    std::vector<Field2D<T>> grads(n);
    s.downstream.assign(n, Field2D<T>());
    Field2D<T> b(image.rows(), image.cols(), T(1));
    for (std::size_t i = n; i-- > 0;) {
        s.downstream[i] = b;
        Field2D<T> d(b.rows(), b.cols());
        for (std::size_t j = 0; j < d.size(); ++j) {
            const T t = beta * s.preacts[i].values()[j], g = s.gates[i].values()[j];
            d.storage()[j] = (g + t * g * (T(1) - g)) * b.values()[j];
        }
        const std::size_t w = s.kernels[i].rows();
        const Origin o = origin_for(w);
        Field2D<T> t = xcorr2_taps(d, s.inputs[i], cfg.boundary, w, w, o);
        const T decay = include_decay ? alpha : T(0);
        for (std::size_t j = 0; j < t.size(); ++j)
            t.storage()[j] = a * t.storage()[j] + decay * s.kernels[i].values()[j];
        grads[i] = std::move(t);
        if (i > 0) b = xcorr2_image_adjoint(s.kernels[i], d, cfg.boundary, o);
    }
    return grads;
}

template <class T>
double RegimeJacobian<T>::max_deviation() const {
    double m = 0;
    for (std::size_t j = 0; j < exact.size(); ++j) m = std::max(m, std::abs(exact.values()[j] - regime.values()[j]));
    return m;
}

template <class T>
RegimeJacobian<T> regime_jacobian(const LayerStack<T>& s, std::size_t i, const MlcnnConfig& cfg, double tau) {
    if (i + 1 >= s.layers()) throw std::invalid_argument("regime_jacobian: layer has no successor");
    if (s.preacts.size() != s.layers()) throw std::logic_error("regime_jacobian: run ml_forward first");
    if (!(tau > 0)) throw std::invalid_argument("regime_jacobian: tau must be > 0");
    const Field2D<T>& p = s.preacts[i + 1];
    RegimeJacobian<T> out{s.kernels[i + 1], Field2D<double>(p.rows(), p.cols()), Field2D<double>(p.rows(), p.cols()),
                          RegimeMap{p.rows(), p.cols(), std::vector<Regime>(p.size()), {}}};
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double x = static_cast<double>(p.values()[j]);
        out.exact.storage()[j] = swish_prime(x, cfg.beta);
        const double v = cfg.beta * x;
        const Regime r = v > tau ? Regime::Activated : (v < -tau ? Regime::NotActivated : Regime::Transitioning);
        out.regime.storage()[j] = r == Regime::Activated ? 1.0 : (r == Regime::NotActivated ? 0.0 : 0.5);
        out.regimes.labels[j] = r;
        ++out.regimes.counts[static_cast<std::size_t>(r)];
    }
    return out;
}

template <class T>
double downstream_gamma(const LayerStack<T>& s, std::size_t i, GammaMode mode) {
    if (s.downstream.size() != s.layers() || i >= s.layers())
        throw std::logic_error("downstream_gamma: run ml_grad first");
    const auto v = s.downstream[i].values();
    if (mode == GammaMode::Mean) {
        std::vector<double> d(v.begin(), v.end());
        return det_sum<double>(d) / static_cast<double>(d.size());
    }
    double best = 0;
    for (T x : v)
        if (std::abs(static_cast<double>(x)) > std::abs(best)) best = static_cast<double>(x);
    return best;
}

template <class T>
double effective_a(const LayerStack<T>& s, std::size_t i, const MlcnnConfig& cfg) {
    return downstream_gamma(s, i, cfg.gamma) * static_cast<double>(output_residual(s.logit, cfg.label));
}

template <class T>
StabilityBounds layer_bounds(const LayerStack<T>& s, std::size_t i, const MlcnnConfig& cfg) {
    Cnn1Config c;
    c.image = s.inputs.at(i).template cast<double>();
    c.label = cfg.label;
    c.beta = cfg.beta;
    c.alpha = cfg.alpha;
    c.window = cfg.kernel_sizes.at(i);
    c.dt = cfg.dt;
    c.precision = cfg.precision;
    c.boundary = cfg.boundary;
    return stability_bounds(c, effective_a(s, i, cfg));
}

template <class T>
MlDatasetSystem<T>::MlDatasetSystem(const MlcnnConfig& cfg, const Dataset& data) : cfg_(cfg) {
    cfg_.validate();
    if (data.size() == 0) throw std::invalid_argument("multilayer: empty dataset");
    for (std::size_t i = 0; i < data.size(); ++i) {
        images_.push_back(data.images[i].cast<T>());
        labels_.push_back(data.labels[i] == 0 ? 0 : 1);
    }
    for (auto w : cfg_.kernel_sizes) dim_ += w * w;
}

template <class T>
std::vector<T> MlDatasetSystem<T>::flatten(const LayerStack<T>& s) const {
    std::vector<T> out;
    out.reserve(dim_);
    for (const auto& k : s.kernels) out.insert(out.end(), k.values().begin(), k.values().end());
    return out;
}

template <class T>
void MlDatasetSystem<T>::unflatten(std::span<const T> theta, LayerStack<T>& s) const {
    if (theta.size() != dim_) throw std::invalid_argument("multilayer: parameter vector has the wrong length");
    s.kernels.clear();
    std::size_t at = 0;
    for (auto w : cfg_.kernel_sizes) {
        Field2D<T> k(w, w);
        std::copy(theta.begin() + at, theta.begin() + at + w * w, k.storage().begin());
        at += w * w;
        s.kernels.push_back(std::move(k));
    }
}

template <class T>
double MlDatasetSystem<T>::evaluate(std::span<const T> theta, std::span<T> grad) const {
    LayerStack<T> s;
    unflatten(theta, s);
    MlcnnConfig c = cfg_;
    std::fill(grad.begin(), grad.end(), T(0));
    T ce = 0;
    for (std::size_t n = 0; n < images_.size(); ++n) {
        c.label = labels_[n];
        const auto g = ml_grad(s, c, images_[n], false);
        c.alpha = 0;
        ce += ml_loss(s, c).value;
        c.alpha = cfg_.alpha;
        std::size_t at = 0;
        for (const auto& gk : g)
            for (T v : gk.values()) grad[at++] += v;
    }
    const T count = static_cast<T>(images_.size()), alpha = static_cast<T>(cfg_.alpha);
    for (std::size_t j = 0; j < dim_; ++j) grad[j] = grad[j] / count + alpha * theta[j];
    std::vector<T> sq(dim_);
    for (std::size_t j = 0; j < dim_; ++j) sq[j] = theta[j] * theta[j];
    return static_cast<double>(ce / count + T(0.5) * alpha * det_sum<T>(sq));
}

template <class T>
double MlDatasetSystem<T>::accuracy(std::span<const T> theta) const {
    LayerStack<T> s;
    unflatten(theta, s);
    MlcnnConfig c = cfg_;
    std::size_t right = 0;
    for (std::size_t n = 0; n < images_.size(); ++n) {
        const T y = ml_forward(s, c, images_[n]);
        if ((y >= T(0.5)) == (labels_[n] == 1)) ++right;
    }
    return static_cast<double>(right) / static_cast<double>(images_.size());
}

#define RLAB_MULTILAYER_INSTANTIATE(T)                                                                         \
    template LayerStack<T> make_stack<T>(const MlcnnConfig&, double, std::uint64_t);                           \
    template T ml_forward<T>(LayerStack<T>&, const MlcnnConfig&, const Field2D<T>&);                           \
    template LossValue<T> ml_loss<T>(const LayerStack<T>&, const MlcnnConfig&);                                \
    template std::vector<Field2D<T>> ml_grad<T>(LayerStack<T>&, const MlcnnConfig&, const Field2D<T>&, bool); \
    template struct RegimeJacobian<T>;                                                                         \
    template RegimeJacobian<T> regime_jacobian<T>(const LayerStack<T>&, std::size_t, const MlcnnConfig&,       \
                                                  double);                                                     \
    template double downstream_gamma<T>(const LayerStack<T>&, std::size_t, GammaMode);                         \
    template double effective_a<T>(const LayerStack<T>&, std::size_t, const MlcnnConfig&);                     \
    template StabilityBounds layer_bounds<T>(const LayerStack<T>&, std::size_t, const MlcnnConfig&);           \
    template class MlDatasetSystem<T>;

RLAB_MULTILAYER_INSTANTIATE(float)
RLAB_MULTILAYER_INSTANTIATE(double)

}  // namespace rlab
