#include "nysgrad/optimizers.hpp"

#include <cmath>
#include <cstdio>

#include "nysgrad/error.hpp"

namespace nysgrad {
namespace {

std::string g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

std::string label(const OptimizerConfig& cfg) {
    if (const auto* s = std::get_if<Sgd>(&cfg)) return "sgd(lr=" + g(s->lr) + ")";
    if (const auto* s = std::get_if<SgdMomentum>(&cfg))
        return "sgd-momentum(lr=" + g(s->lr) + ",momentum=" + g(s->momentum) + ")";
    const auto& a = std::get<Adam>(cfg);
    return "adam(lr=" + g(a.lr) + ",beta1=" + g(a.beta1) + ",beta2=" + g(a.beta2) + ",eps=" + g(a.eps) + ")";
}

void validate(const OptimizerConfig& cfg) {
    const double lr = std::visit([](const auto& c) { return c.lr; }, cfg);
    if (!(lr > 0.0)) throw ArgumentError("optimizer: learning rate must be positive");
    if (const auto* s = std::get_if<SgdMomentum>(&cfg)) {
        if (!(s->momentum >= 0.0 && s->momentum < 1.0))
            throw ArgumentError("optimizer: momentum must lie in [0, 1)");
    }
    if (const auto* a = std::get_if<Adam>(&cfg)) {
        if (!(a->beta1 >= 0.0 && a->beta1 < 1.0 && a->beta2 >= 0.0 && a->beta2 < 1.0 && a->eps > 0.0))
            throw ArgumentError("optimizer: invalid Adam constants");
    }
}

Optimizer::Optimizer(OptimizerConfig cfg, Index dim) : cfg_(cfg), m_(Vector::Zero(dim)), v_(Vector::Zero(dim)) {
    validate(cfg_);
}

void Optimizer::reset() {
    m_.setZero();
    v_.setZero();
    t_ = 0;
}

void Optimizer::step(Vector& params, const Vector& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ArgumentError("Optimizer::step: dimension mismatch");
    ++t_;
    if (const auto* s = std::get_if<Sgd>(&cfg_)) {
        params -= s->lr * grad;
    } else if (const auto* s = std::get_if<SgdMomentum>(&cfg_)) {
        // first step seeds the buffer with the raw gradient
        if (t_ == 1) m_ = grad;
        else m_ = s->momentum * m_ + grad;
        params -= s->lr * m_;
    } else {
        const auto& a = std::get<Adam>(cfg_);
        m_ = a.beta1 * m_ + (1.0 - a.beta1) * grad;
        v_ = a.beta2 * v_ + (1.0 - a.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(a.beta1, t_);
        const double c2 = 1.0 - std::pow(a.beta2, t_);
        params.array() -= a.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + a.eps);
    }
}

}  // namespace nysgrad
