#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// Piecewise-constant decay: lr(epoch) = initial * decay^(#milestones <= epoch),
// epochs zero-based.  With milestones {60,120,160} the drop happens *at*
// epoch 60, i.e. epoch 59 still runs at the initial rate.
struct LrSchedule {
    double initial = 0.1;
    double decay = 0.2;
    std::vector<std::size_t> milestones;

    void validate() const {
        if (!(initial > 0.0)) throw SpecError("schedule: initial lr must be positive");
        if (!(decay > 0.0)) throw SpecError("schedule: decay factor must be positive");
        for (std::size_t i = 1; i < milestones.size(); ++i) {
            if (milestones[i] <= milestones[i - 1]) {
                throw SpecError("schedule: milestones must be strictly increasing");
            }
        }
    }

    double at(std::size_t epoch) const {
        double lr = initial;
        for (std::size_t m : milestones) {
            if (m <= epoch) lr *= decay;
        }
        return lr;
    }
};

namespace detail {

inline void check_step_shapes(const std::vector<Tensor*>& params,
                              const std::vector<Tensor>& grads, const char* who) {
    if (params.size() != grads.size()) {
        throw DimensionError(std::string(who) + ": " + std::to_string(params.size()) +
                             " params vs " + std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i])) {
            throw DimensionError(std::string(who) + ": param " + std::to_string(i) + " is " +
                                 params[i]->shape_str() + " but grad is " +
                                 grads[i].shape_str());
        }
    }
}

inline void init_slots(std::vector<Tensor>& slots, const std::vector<Tensor*>& params) {
    if (!slots.empty()) return;
    slots.reserve(params.size());
    for (const Tensor* p : params) slots.emplace_back(p->rows(), p->cols());
}

}  // namespace detail

// Classic momentum:  v <- mu * v + g;  w <- w - lr * v.
// weight_decay adds decay * w to the gradient before the update.
struct SgdMomentumState {
    std::vector<Tensor> velocity;
};

inline void sgd_momentum_step(const std::vector<Tensor*>& params,
                              const std::vector<Tensor>& grads, SgdMomentumState& state,
                              double lr, double momentum, double weight_decay = 0.0) {
    detail::check_step_shapes(params, grads, "sgd_momentum_step");
    detail::init_slots(state.velocity, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i];
        Tensor& v = state.velocity[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g.data()[j] + weight_decay * w.data()[j];
            v.data()[j] = momentum * v.data()[j] + gj;
            w.data()[j] -= lr * v.data()[j];
        }
        w.check_finite("sgd_momentum_step");
    }
}

// Adam with bias correction.  The step counter is shared by all parameters
// updated through one state object.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t t = 0;
};

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double epsilon = 1e-8, double weight_decay = 0.0) {
    detail::check_step_shapes(params, grads, "adam_step");
    detail::init_slots(state.m, params);
    detail::init_slots(state.v, params);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g.data()[j] + weight_decay * w.data()[j];
            m.data()[j] = beta1 * m.data()[j] + (1.0 - beta1) * gj;
            v.data()[j] = beta2 * v.data()[j] + (1.0 - beta2) * gj * gj;
            const double mhat = m.data()[j] / bc1;
            const double vhat = v.data()[j] / bc2;
            w.data()[j] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
        w.check_finite("adam_step");
    }
}

// Uniform front-end so the training loop does not care which rule is active.
struct OptimizerSpec {
    enum class Kind { SgdMomentum, Adam };
    Kind kind = Kind::SgdMomentum;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;

    void validate() const {
        if (momentum < 0.0 || momentum >= 1.0) {
            throw SpecError("optimizer: momentum must be in [0, 1)");
        }
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
            throw SpecError("optimizer: betas must be in [0, 1)");
        }
        if (!(epsilon > 0.0)) throw SpecError("optimizer: epsilon must be positive");
        if (weight_decay < 0.0) throw SpecError("optimizer: weight decay must be >= 0");
    }
};

class Optimizer {
  public:
    explicit Optimizer(OptimizerSpec spec) : spec_(spec) { spec.validate(); }

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
        if (spec_.kind == OptimizerSpec::Kind::SgdMomentum) {
            sgd_momentum_step(params, grads, sgd_, lr, spec_.momentum, spec_.weight_decay);
        } else {
            adam_step(params, grads, adam_, lr, spec_.beta1, spec_.beta2, spec_.epsilon,
                      spec_.weight_decay);
        }
    }

  private:
    OptimizerSpec spec_;
    SgdMomentumState sgd_;
    AdamState adam_;
};

}  // namespace rocket
