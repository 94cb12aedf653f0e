#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/tensor.hpp"

namespace omseg {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    void validate() const {
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw InvalidArgumentError("adam betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw InvalidArgumentError("adam eps must be positive");
        if (weight_decay < 0.0) throw InvalidArgumentError("weight_decay must be >= 0");
    }
};

// Moment buffers are kept in 64-bit regardless of the parameter scalar type.
template <class T>
struct AdamState {
    AdamConfig cfg;
    std::vector<std::vector<double>> m, v;
    long t = 0;

    AdamState() = default;
    AdamState(const std::vector<Parameter<T>*>& params, const AdamConfig& config) : cfg(config) {
        cfg.validate();
        for (const auto* p : params) {
            m.emplace_back(p->tensor.numel(), 0.0);
            v.emplace_back(p->tensor.numel(), 0.0);
        }
    }
};

// Classic Adam with L2 folded into the gradient: g = grad + weight_decay * param.
template <class T>
inline void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr) {
    if (params.size() != state.m.size()) throw ShapeError("adam state does not match parameter list");
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<T>* p = params[pi];
        if (p->tensor.grad.size() != p->tensor.numel())
            throw StateError("adam_step requires populated gradients");
        if (state.m[pi].size() != p->tensor.numel())
            throw ShapeError("adam moment shape does not match parameter");
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = static_cast<double>(p->tensor.grad[i]) +
                             state.cfg.weight_decay * static_cast<double>(p->tensor.values[i]);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->tensor.values[i] =
                static_cast<T>(p->tensor.values[i] - lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
        }
    }
}

struct ScheduleConfig {
    double lr0 = 1e-4;
    int t_max = 20;
    double eta_min = 0.0;

    void validate() const {
        if (t_max < 1) throw InvalidArgumentError("T_max must be >= 1");
        if (lr0 < 0.0 || eta_min < 0.0) throw InvalidArgumentError("learning rates must be >= 0");
    }
};

inline double cosine_lr(int t, const ScheduleConfig& cfg) {
    cfg.validate();
    if (t < 0 || t > cfg.t_max) throw InvalidArgumentError("schedule epoch out of [0, T_max]");
    const double pi = std::acos(-1.0);
    return cfg.eta_min +
           (cfg.lr0 - cfg.eta_min) * (1.0 + std::cos(pi * t / cfg.t_max)) / 2.0;
}

// Strict-improvement early stopping: any non-improving epoch increments the
// counter; reaching `patience` consecutive non-improvements stops.
struct EarlyStopState {
    int patience = 10;
    double best = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    bool stopped = false;

    // Returns true when training should stop after accounting for val_loss.
    bool update(double val_loss) {
        if (!std::isfinite(val_loss)) throw InvalidArgumentError("early stopping needs a finite loss");
        if (stopped) throw StateError("early stopping already triggered");
        if (val_loss < best) {
            best = val_loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if (since_improvement >= patience) stopped = true;
        }
        return stopped;
    }
};

}  // namespace omseg
