#pragma once

#include <string>
#include <variant>

#include "nysgrad/linop.hpp"

namespace nysgrad {

struct Sgd {
    double lr = 0.1;

    bool operator==(const Sgd&) const = default;
};

/// Heavy-ball form: buf <- momentum * buf + grad; x <- x - lr * buf.
struct SgdMomentum {
    double lr = 1.0;
    double momentum = 0.9;

    bool operator==(const SgdMomentum&) const = default;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const Adam&) const = default;
};

using OptimizerConfig = std::variant<Sgd, SgdMomentum, Adam>;

std::string label(const OptimizerConfig& cfg);
void validate(const OptimizerConfig& cfg);

/// Stateful first-order optimizer over a single parameter vector.
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, Index dim);

    void step(Vector& params, const Vector& grad);
    void reset();

    const OptimizerConfig& config() const noexcept { return cfg_; }
    int steps() const noexcept { return t_; }

private:
    OptimizerConfig cfg_;
    Vector m_;  // momentum buffer or first moment
    Vector v_;  // second moment (Adam)
    int t_ = 0;
};

}  // namespace nysgrad
