#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rlab {

/// A differentiable objective over a flat parameter vector. Models expose
/// themselves through this so the trajectory drivers, perturbation probes
/// and sharpness estimator stay model-agnostic.
template <class T>
class GradientSystem {
public:
    virtual ~GradientSystem() = default;

    virtual std::size_t dimension() const = 0;

    /// Loss at theta; the gradient is written into grad.
    virtual double evaluate(std::span<const T> theta, std::span<T> grad) const = 0;

    virtual void gradient(std::span<const T> theta, std::span<T> grad) const { evaluate(theta, grad); }

    double loss(std::span<const T> theta) const {
        std::vector<T> g(dimension());
        return evaluate(theta, g);
    }
};

}  // namespace rlab
