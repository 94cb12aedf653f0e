#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/tensor.hpp"

namespace omseg {

struct LossConfig {
    double lambda = 0.5;
    double eps_dice = 1e-6;
    double bce_clamp = 1e-7;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw InvalidArgumentError("lambda must lie in [0, 1]");
        if (!(eps_dice > 0.0)) throw InvalidArgumentError("eps_dice must be positive");
        if (bce_clamp < 0.0 || bce_clamp >= 0.5)
            throw InvalidArgumentError("bce_clamp must lie in [0, 0.5)");
    }
};

namespace detail {

template <class T>
inline void check_loss_operands(const Tensor<T>& pred, const Tensor<T>& gt) {
    if (pred.shape != gt.shape) throw ShapeError("loss operands must share a shape");
    if (pred.numel() == 0) throw ShapeError("loss operands must be non-empty");
    for (const T& p : pred.values)
        if (!(p >= T(0) && p <= T(1)))
            throw InvalidArgumentError("loss expects probabilities in [0, 1]");
    for (const T& g : gt.values)
        if (g != T(0) && g != T(1))
            throw InvalidArgumentError("loss expects a strictly binary ground truth");
}

}  // namespace detail

template <class T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;
};

// 1 - (2*sum(pred*gt) + eps) / (sum(pred) + sum(gt) + eps), batch-global sums.
template <class T>
inline double dice_loss(const Tensor<T>& pred, const Tensor<T>& gt, double eps = 1e-6) {
    detail::check_loss_operands(pred, gt);
    double sp = 0.0, sg = 0.0, spg = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        sp += pred.values[i];
        sg += gt.values[i];
        spg += static_cast<double>(pred.values[i]) * gt.values[i];
    }
    return 1.0 - (2.0 * spg + eps) / (sp + sg + eps);
}

template <class T>
inline LossResult<T> dice_loss_with_grad(const Tensor<T>& pred, const Tensor<T>& gt,
                                         double eps = 1e-6) {
    detail::check_loss_operands(pred, gt);
    double sp = 0.0, sg = 0.0, spg = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        sp += pred.values[i];
        sg += gt.values[i];
        spg += static_cast<double>(pred.values[i]) * gt.values[i];
    }
    const double den = sp + sg + eps;
    const double num = 2.0 * spg + eps;
    LossResult<T> out;
    out.value = 1.0 - num / den;
    out.grad = Tensor<T>(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i)
        out.grad.values[i] = static_cast<T>(-(2.0 * gt.values[i] * den - num) / (den * den));
    return out;
}

// Mean over pixels of -[y log p + (1-y) log(1-p)], p clamped to [c, 1-c].
template <class T>
inline double bce_loss(const Tensor<T>& pred, const Tensor<T>& gt, double clamp = 1e-7) {
    detail::check_loss_operands(pred, gt);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double p = std::min(std::max(static_cast<double>(pred.values[i]), clamp), 1.0 - clamp);
        const double y = gt.values[i];
        acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(pred.numel());
}

template <class T>
inline LossResult<T> bce_loss_with_grad(const Tensor<T>& pred, const Tensor<T>& gt,
                                        double clamp = 1e-7) {
    detail::check_loss_operands(pred, gt);
    const double n = static_cast<double>(pred.numel());
    LossResult<T> out;
    out.grad = Tensor<T>(pred.shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double raw = pred.values[i];
        const double p = std::min(std::max(raw, clamp), 1.0 - clamp);
        const double y = gt.values[i];
        acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        // Inside the clamp band the prediction is a constant, so its gradient is 0.
        out.grad.values[i] = (raw > clamp && raw < 1.0 - clamp)
                                 ? static_cast<T>((-y / p + (1.0 - y) / (1.0 - p)) / n)
                                 : T(0);
    }
    out.value = acc / n;
    return out;
}

template <class T>
inline double hybrid_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& cfg = {}) {
    cfg.validate();
    return cfg.lambda * dice_loss(pred, gt, cfg.eps_dice) +
           (1.0 - cfg.lambda) * bce_loss(pred, gt, cfg.bce_clamp);
}

template <class T>
inline LossResult<T> hybrid_loss_with_grad(const Tensor<T>& pred, const Tensor<T>& gt,
                                           const LossConfig& cfg = {}) {
    cfg.validate();
    LossResult<T> d = dice_loss_with_grad(pred, gt, cfg.eps_dice);
    LossResult<T> b = bce_loss_with_grad(pred, gt, cfg.bce_clamp);
    LossResult<T> out;
    out.value = cfg.lambda * d.value + (1.0 - cfg.lambda) * b.value;
    out.grad = Tensor<T>(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i)
        out.grad.values[i] = static_cast<T>(cfg.lambda * d.grad.values[i] +
                                            (1.0 - cfg.lambda) * b.grad.values[i]);
    return out;
}

}  // namespace omseg
