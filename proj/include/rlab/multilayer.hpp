#pragma once

#include "rlab/cnn1.hpp"
#include "rlab/dataset.hpp"
#include "rlab/gradient_system.hpp"

#include <optional>

namespace rlab {

/// How the downstream averaged gradient is collapsed to one constant.
enum class GammaMode { Mean, MaxAbs };

std::string to_string(GammaMode m);
GammaMode parse_gamma_mode(const std::string& s);

/// Stack of single-channel conv + Swish layers with same-size feature maps,
/// followed by a global sum and a sigmoid.
struct MlcnnConfig {
    std::vector<std::size_t> kernel_sizes{5};  ///< square kernel side per layer
    double beta = 1.0;
    double alpha = 0.0;
    int label = 1;
    double dt = 0.01;
    Precision precision = Precision::Double;
    Boundary boundary = Boundary::Periodic;
    GammaMode gamma = GammaMode::Mean;

    std::size_t layers() const { return kernel_sizes.size(); }
    void validate() const;
};

/// Kernels plus the intermediates of the last forward pass.
/// inputs[0] is the image; inputs[i + 1] = r(kernels[i] * inputs[i]).
/// downstream[i] is the gradient of sum_x F_{N,i+1}(inputs[i+1])(x) with
/// respect to inputs[i + 1] (all ones for the last layer); it is filled by
/// ml_grad.
template <class T>
struct LayerStack {
    std::vector<Field2D<T>> kernels;
    std::vector<Field2D<T>> inputs;
    std::vector<Field2D<T>> preacts;
    std::vector<Field2D<T>> gates;  ///< logistic(beta * preact)
    std::vector<Field2D<T>> downstream;
    T logit{};
    T yhat{};

    std::size_t layers() const { return kernels.size(); }
};

/// Kernels drawn from N(0, scale^2), one seed for the whole stack.
template <class T>
LayerStack<T> make_stack(const MlcnnConfig& cfg, double scale, std::uint64_t seed);

template <class T>
T ml_forward(LayerStack<T>& stack, const MlcnnConfig& cfg, const Field2D<T>& image);

/// Cross-entropy on the cached yhat (clamped as in cnn1) plus
/// (alpha/2) sum_j |K_j|^2. Call after ml_forward.
template <class T>
LossValue<T> ml_loss(const LayerStack<T>& stack, const MlcnnConfig& cfg);

/// Forward pass, then reverse accumulation through the stack. The result
/// holds one gradient per kernel. With include_decay false the alpha K_i
/// terms are left out (the dataset loss adds them once).
template <class T>
std::vector<Field2D<T>> ml_grad(LayerStack<T>& stack, const MlcnnConfig& cfg, const Field2D<T>& image,
                                bool include_decay = true);

/// Input Jacobian of layer i + 1 (0-based, i + 1 < N) on the cached pass:
/// d I_{i+2}(x) / d I_{i+1}(x + z) = r'(P_{i+1}(x)) K_{i+1}(z).
template <class T>
struct RegimeJacobian {
    Field2D<T> kernel;         ///< K_{i+1}
    Field2D<double> exact;     ///< r'(P_{i+1}) per pixel
    Field2D<double> regime;    ///< 1/2 transitioning, 1 activated, 0 not activated
    RegimeMap regimes;

    /// max over pixels of |exact - regime|
    double max_deviation() const;
};

template <class T>
RegimeJacobian<T> regime_jacobian(const LayerStack<T>& stack, std::size_t i, const MlcnnConfig& cfg,
                                  double tau = 2.0);

/// gamma: the downstream field of layer i collapsed per cfg.gamma
/// (spatial mean, or the entry of largest magnitude). Needs ml_grad first.
template <class T>
double downstream_gamma(const LayerStack<T>& stack, std::size_t i, GammaMode mode);

/// a_hat = gamma * (yhat - y).
template <class T>
double effective_a(const LayerStack<T>& stack, std::size_t i, const MlcnnConfig& cfg);

/// cnn1 bounds on layer i's input with a replaced by effective_a.
template <class T>
StabilityBounds layer_bounds(const LayerStack<T>& stack, std::size_t i, const MlcnnConfig& cfg);

/// Full-batch mean cross-entropy over a dataset plus (alpha/2) sum_j |K_j|^2.
/// theta is the concatenation of the kernels, row-major, layer by layer.
/// Samples are accumulated in order, then divided by the sample count.
template <class T>
class MlDatasetSystem final : public GradientSystem<T> {
public:
    MlDatasetSystem(const MlcnnConfig& cfg, const Dataset& data);

    std::size_t dimension() const override { return dim_; }
    double evaluate(std::span<const T> theta, std::span<T> grad) const override;

    /// Fraction of samples with yhat on the correct side of 1/2.
    double accuracy(std::span<const T> theta) const;

    std::vector<T> flatten(const LayerStack<T>& stack) const;
    void unflatten(std::span<const T> theta, LayerStack<T>& stack) const;

private:
    MlcnnConfig cfg_;
    std::vector<Field2D<T>> images_;
    std::vector<int> labels_;
    std::size_t dim_ = 0;
};

}  // namespace rlab
