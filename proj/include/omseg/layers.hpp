#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/tensor.hpp"

namespace omseg {

namespace detail {

template <class T>
inline void check_4d(const Tensor<T>& x, const char* what) {
    if (x.shape.size() != 4) throw ShapeError(std::string(what) + ": expected a 4D tensor");
}

}  // namespace detail

// Cross-correlation, stride 1, square kernel, zero padding.
template <class T>
class Conv2d {
  public:
    Conv2d(int in_c, int out_c, int ksize, int pad) : in_c_(in_c), out_c_(out_c), k_(ksize), pad_(pad) {
        if (in_c < 1 || out_c < 1 || ksize < 1 || pad < 0)
            throw InvalidArgumentError("conv2d configuration must be positive");
        weight.tensor = Tensor<T>({out_c, in_c, ksize, ksize});
        bias.tensor = Tensor<T>({out_c});
        weight.tensor.alloc_grad();
        bias.tensor.alloc_grad();
    }

    int fan_in() const { return in_c_ * k_ * k_; }

    Tensor<T> forward(const Tensor<T>& x, bool record) {
        detail::check_4d(x, "conv2d");
        if (x.shape[1] != in_c_) throw ShapeError("conv2d: input channel mismatch");
        const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const int oh = h + 2 * pad_ - k_ + 1, ow = w + 2 * pad_ - k_ + 1;
        if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel exceeds padded input");

        Tensor<T> out({n, out_c_, oh, ow});
        const T* xv = x.values.data();
        const T* wv = weight.tensor.values.data();
        T* ov = out.values.data();
        for (int ni = 0; ni < n; ++ni)
            for (int kc = 0; kc < out_c_; ++kc) {
                T* oplane = ov + (static_cast<std::size_t>(ni) * out_c_ + kc) * oh * ow;
                const T b = bias.tensor.values[kc];
                for (int i = 0; i < oh * ow; ++i) oplane[i] = b;
                for (int ci = 0; ci < in_c_; ++ci) {
                    const T* xplane = xv + (static_cast<std::size_t>(ni) * in_c_ + ci) * h * w;
                    const T* wk = wv + ((static_cast<std::size_t>(kc) * in_c_ + ci) * k_) * k_;
                    for (int dr = 0; dr < k_; ++dr)
                        for (int dc = 0; dc < k_; ++dc) {
                            const T wgt = wk[dr * k_ + dc];
                            if (wgt == T(0)) continue;
                            const int off_r = dr - pad_, off_c = dc - pad_;
                            const int r0 = std::max(0, -off_r), r1 = std::min(oh, h - off_r);
                            const int c0 = std::max(0, -off_c), c1 = std::min(ow, w - off_c);
                            for (int r = r0; r < r1; ++r) {
                                T* orow = oplane + static_cast<std::size_t>(r) * ow;
                                const T* xrow =
                                    xplane + static_cast<std::size_t>(r + off_r) * w + off_c;
                                for (int c = c0; c < c1; ++c) orow[c] += wgt * xrow[c];
                            }
                        }
                }
            }
        if (record) {
            input_ = x;
            recorded_ = true;
        } else {
            recorded_ = false;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("conv2d backward without a recorded forward");
        const int n = input_.shape[0], h = input_.shape[2], w = input_.shape[3];
        const int oh = grad_out.shape[2], ow = grad_out.shape[3];
        require_shape(grad_out, {n, out_c_, oh, ow}, "conv2d grad");

        Tensor<T> dx({n, in_c_, h, w});
        const T* gv = grad_out.values.data();
        const T* xv = input_.values.data();
        const T* wv = weight.tensor.values.data();
        T* dxv = dx.values.data();
        T* dwv = weight.tensor.grad.data();
        T* dbv = bias.tensor.grad.data();
        for (int ni = 0; ni < n; ++ni)
            for (int kc = 0; kc < out_c_; ++kc) {
                const T* gplane = gv + (static_cast<std::size_t>(ni) * out_c_ + kc) * oh * ow;
                T bacc = T(0);
                for (int i = 0; i < oh * ow; ++i) bacc += gplane[i];
                dbv[kc] += bacc;
                for (int ci = 0; ci < in_c_; ++ci) {
                    const T* xplane = xv + (static_cast<std::size_t>(ni) * in_c_ + ci) * h * w;
                    T* dxplane = dxv + (static_cast<std::size_t>(ni) * in_c_ + ci) * h * w;
                    const T* wk = wv + ((static_cast<std::size_t>(kc) * in_c_ + ci) * k_) * k_;
                    T* dwk = dwv + ((static_cast<std::size_t>(kc) * in_c_ + ci) * k_) * k_;
                    for (int dr = 0; dr < k_; ++dr)
                        for (int dc = 0; dc < k_; ++dc) {
                            const T wgt = wk[dr * k_ + dc];
                            const int off_r = dr - pad_, off_c = dc - pad_;
                            const int r0 = std::max(0, -off_r), r1 = std::min(oh, h - off_r);
                            const int c0 = std::max(0, -off_c), c1 = std::min(ow, w - off_c);
                            T wacc = T(0);
                            for (int r = r0; r < r1; ++r) {
                                const T* grow = gplane + static_cast<std::size_t>(r) * ow;
                                const T* xrow =
                                    xplane + static_cast<std::size_t>(r + off_r) * w + off_c;
                                T* dxrow =
                                    dxplane + static_cast<std::size_t>(r + off_r) * w + off_c;
                                for (int c = c0; c < c1; ++c) {
                                    wacc += grow[c] * xrow[c];
                                    dxrow[c] += wgt * grow[c];
                                }
                            }
                            dwk[dr * k_ + dc] += wacc;
                        }
                }
            }
        return dx;
    }

    Parameter<T> weight, bias;

  private:
    int in_c_, out_c_, k_, pad_;
    Tensor<T> input_;
    bool recorded_ = false;
};

// Per-channel normalization over (N, H, W); biased variance both for the
// normalization and for the running-statistics update.
template <class T>
class BatchNorm2d {
  public:
    explicit BatchNorm2d(int channels) : c_(channels) {
        if (channels < 1) throw InvalidArgumentError("batchnorm needs >= 1 channel");
        gamma.tensor = Tensor<T>({channels});
        beta.tensor = Tensor<T>({channels});
        running_mean.tensor = Tensor<T>({channels});
        running_var.tensor = Tensor<T>({channels});
        std::fill(gamma.tensor.values.begin(), gamma.tensor.values.end(), T(1));
        std::fill(running_var.tensor.values.begin(), running_var.tensor.values.end(), T(1));
        running_mean.trainable = false;
        running_var.trainable = false;
        gamma.tensor.alloc_grad();
        beta.tensor.alloc_grad();
    }

    Tensor<T> forward(const Tensor<T>& x, bool record, bool train) {
        detail::check_4d(x, "batchnorm");
        if (x.shape[1] != c_) throw ShapeError("batchnorm: channel mismatch");
        const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        const std::size_t per_channel = static_cast<std::size_t>(n) * plane;

        Tensor<T> out(x.shape);
        if (train) {
            if (per_channel < 2)
                throw InvalidArgumentError("batchnorm train mode needs batch*H*W >= 2");
            if (record) {
                xhat_ = Tensor<T>(x.shape);
                inv_std_.assign(c_, T(0));
            }
            for (int ci = 0; ci < c_; ++ci) {
                double mean = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const T* xp = x.values.data() + (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) mean += xp[i];
                }
                mean /= static_cast<double>(per_channel);
                double var = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const T* xp = x.values.data() + (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = xp[i] - mean;
                        var += d * d;
                    }
                }
                var /= static_cast<double>(per_channel);
                const T inv_std = static_cast<T>(1.0 / std::sqrt(var + kEps));
                const T g = gamma.tensor.values[ci], b = beta.tensor.values[ci];
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                    const T* xp = x.values.data() + base;
                    T* op = out.values.data() + base;
                    T* hp = record ? xhat_.values.data() + base : nullptr;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const T xh = (xp[i] - static_cast<T>(mean)) * inv_std;
                        if (hp) hp[i] = xh;
                        op[i] = g * xh + b;
                    }
                }
                running_mean.tensor.values[ci] =
                    static_cast<T>((1.0 - kMomentum) * running_mean.tensor.values[ci] +
                                   kMomentum * mean);
                running_var.tensor.values[ci] = static_cast<T>(
                    (1.0 - kMomentum) * running_var.tensor.values[ci] + kMomentum * var);
                if (record) inv_std_[ci] = inv_std;
            }
            recorded_ = record;
        } else {
            for (int ci = 0; ci < c_; ++ci) {
                const T inv_std =
                    static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.tensor.values[ci]) + kEps));
                const T mean = running_mean.tensor.values[ci];
                const T g = gamma.tensor.values[ci], b = beta.tensor.values[ci];
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                    const T* xp = x.values.data() + base;
                    T* op = out.values.data() + base;
                    for (std::size_t i = 0; i < plane; ++i) op[i] = g * (xp[i] - mean) * inv_std + b;
                }
            }
            recorded_ = false;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("batchnorm backward without a recorded train forward");
        require_shape(grad_out, xhat_.shape, "batchnorm grad");
        const int n = xhat_.shape[0], h = xhat_.shape[2], w = xhat_.shape[3];
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        const std::size_t m = static_cast<std::size_t>(n) * plane;

        Tensor<T> dx(xhat_.shape);
        for (int ci = 0; ci < c_; ++ci) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                const T* gp = grad_out.values.data() + base;
                const T* hp = xhat_.values.data() + base;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gx += static_cast<double>(gp[i]) * hp[i];
                }
            }
            gamma.tensor.grad[ci] += static_cast<T>(sum_gx);
            beta.tensor.grad[ci] += static_cast<T>(sum_g);
            const double scale = gamma.tensor.values[ci] * static_cast<double>(inv_std_[ci]);
            const double mg = sum_g / static_cast<double>(m);
            const double mgx = sum_gx / static_cast<double>(m);
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c_ + ci) * plane;
                const T* gp = grad_out.values.data() + base;
                const T* hp = xhat_.values.data() + base;
                T* dp = dx.values.data() + base;
                for (std::size_t i = 0; i < plane; ++i)
                    dp[i] = static_cast<T>(scale * (gp[i] - mg - hp[i] * mgx));
            }
        }
        return dx;
    }

    Parameter<T> gamma, beta, running_mean, running_var;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

  private:
    int c_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
    bool recorded_ = false;
};

template <class T>
class ReLU {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool record) {
        Tensor<T> out(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) out.values[i] = std::max(x.values[i], T(0));
        if (record) {
            input_ = x;
            recorded_ = true;
        } else {
            recorded_ = false;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("relu backward without a recorded forward");
        require_shape(grad_out, input_.shape, "relu grad");
        Tensor<T> dx(input_.shape);
        for (std::size_t i = 0; i < dx.numel(); ++i)
            dx.values[i] = input_.values[i] > T(0) ? grad_out.values[i] : T(0);
        return dx;
    }

  private:
    Tensor<T> input_;
    bool recorded_ = false;
};

// 2x2 max pooling, stride 2. Gradient routes to the first maximal element of
// each window in row-major order.
template <class T>
class MaxPool2x2 {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool record) {
        detail::check_4d(x, "maxpool");
        const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool requires even spatial dims");
        const int oh = h / 2, ow = w / 2;
        Tensor<T> out({n, c, oh, ow});
        if (record) argmax_.assign(out.numel(), 0);
        in_shape_ = x.shape;

        std::size_t oi = 0;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) *
                                         static_cast<std::size_t>(h) * w;
                for (int r = 0; r < oh; ++r)
                    for (int col = 0; col < ow; ++col, ++oi) {
                        T best = -std::numeric_limits<T>::infinity();
                        std::size_t best_at = 0;
                        for (int dr = 0; dr < 2; ++dr)
                            for (int dc = 0; dc < 2; ++dc) {
                                const std::size_t at =
                                    base + static_cast<std::size_t>(2 * r + dr) * w + 2 * col + dc;
                                if (x.values[at] > best) {
                                    best = x.values[at];
                                    best_at = at;
                                }
                            }
                        out.values[oi] = best;
                        if (record) argmax_[oi] = best_at;
                    }
            }
        recorded_ = record;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("maxpool backward without a recorded forward");
        if (grad_out.numel() != argmax_.size()) throw ShapeError("maxpool grad size mismatch");
        Tensor<T> dx(in_shape_);
        for (std::size_t i = 0; i < argmax_.size(); ++i)
            dx.values[argmax_[i]] += grad_out.values[i];
        return dx;
    }

  private:
    std::vector<int> in_shape_;
    std::vector<std::size_t> argmax_;
    bool recorded_ = false;
};

// 2x2 transposed convolution, stride 2: exactly doubles H and W.
template <class T>
class ConvTranspose2d {
  public:
    ConvTranspose2d(int in_c, int out_c) : in_c_(in_c), out_c_(out_c) {
        if (in_c < 1 || out_c < 1) throw InvalidArgumentError("transposed conv channels must be >= 1");
        weight.tensor = Tensor<T>({in_c, out_c, 2, 2});
        bias.tensor = Tensor<T>({out_c});
        weight.tensor.alloc_grad();
        bias.tensor.alloc_grad();
    }

    int fan_in() const { return in_c_ * 4; }

    Tensor<T> forward(const Tensor<T>& x, bool record) {
        detail::check_4d(x, "transposed conv");
        if (x.shape[1] != in_c_) throw ShapeError("transposed conv: input channel mismatch");
        const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const int oh = 2 * h, ow = 2 * w;
        Tensor<T> out({n, out_c_, oh, ow});
        for (int ni = 0; ni < n; ++ni)
            for (int kc = 0; kc < out_c_; ++kc) {
                T* oplane = out.values.data() +
                            (static_cast<std::size_t>(ni) * out_c_ + kc) *
                                static_cast<std::size_t>(oh) * ow;
                const T b = bias.tensor.values[kc];
                for (int i = 0; i < oh * ow; ++i) oplane[i] = b;
                for (int ci = 0; ci < in_c_; ++ci) {
                    const T* xplane = x.values.data() +
                                      (static_cast<std::size_t>(ni) * in_c_ + ci) *
                                          static_cast<std::size_t>(h) * w;
                    const T* wk = weight.tensor.values.data() +
                                  (static_cast<std::size_t>(ci) * out_c_ + kc) * 4;
                    for (int r = 0; r < h; ++r)
                        for (int col = 0; col < w; ++col) {
                            const T xv = xplane[static_cast<std::size_t>(r) * w + col];
                            if (xv == T(0)) continue;
                            T* o00 = oplane + static_cast<std::size_t>(2 * r) * ow + 2 * col;
                            o00[0] += wk[0] * xv;
                            o00[1] += wk[1] * xv;
                            o00[ow] += wk[2] * xv;
                            o00[ow + 1] += wk[3] * xv;
                        }
                }
            }
        if (record) {
            input_ = x;
            recorded_ = true;
        } else {
            recorded_ = false;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("transposed conv backward without a recorded forward");
        const int n = input_.shape[0], h = input_.shape[2], w = input_.shape[3];
        require_shape(grad_out, {n, out_c_, 2 * h, 2 * w}, "transposed conv grad");
        const int ow = 2 * w;

        Tensor<T> dx(input_.shape);
        for (int ni = 0; ni < n; ++ni)
            for (int kc = 0; kc < out_c_; ++kc) {
                const T* gplane = grad_out.values.data() +
                                  (static_cast<std::size_t>(ni) * out_c_ + kc) *
                                      static_cast<std::size_t>(2 * h) * ow;
                T bacc = T(0);
                for (int i = 0; i < 2 * h * ow; ++i) bacc += gplane[i];
                bias.tensor.grad[kc] += bacc;
                for (int ci = 0; ci < in_c_; ++ci) {
                    const T* xplane = input_.values.data() +
                                      (static_cast<std::size_t>(ni) * in_c_ + ci) *
                                          static_cast<std::size_t>(h) * w;
                    T* dxplane = dx.values.data() +
                                 (static_cast<std::size_t>(ni) * in_c_ + ci) *
                                     static_cast<std::size_t>(h) * w;
                    const T* wk = weight.tensor.values.data() +
                                  (static_cast<std::size_t>(ci) * out_c_ + kc) * 4;
                    T* dwk = weight.tensor.grad.data() +
                             (static_cast<std::size_t>(ci) * out_c_ + kc) * 4;
                    for (int r = 0; r < h; ++r)
                        for (int col = 0; col < w; ++col) {
                            const T* g00 = gplane + static_cast<std::size_t>(2 * r) * ow + 2 * col;
                            const T xv = xplane[static_cast<std::size_t>(r) * w + col];
                            dxplane[static_cast<std::size_t>(r) * w + col] +=
                                wk[0] * g00[0] + wk[1] * g00[1] + wk[2] * g00[ow] +
                                wk[3] * g00[ow + 1];
                            dwk[0] += xv * g00[0];
                            dwk[1] += xv * g00[1];
                            dwk[2] += xv * g00[ow];
                            dwk[3] += xv * g00[ow + 1];
                        }
                }
            }
        return dx;
    }

    Parameter<T> weight, bias;

  private:
    int in_c_, out_c_;
    Tensor<T> input_;
    bool recorded_ = false;
};

template <class T>
class Sigmoid {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool record) {
        Tensor<T> out(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i)
            out.values[i] = T(1) / (T(1) + std::exp(-x.values[i]));
        if (record) {
            output_ = out;
            recorded_ = true;
        } else {
            recorded_ = false;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!recorded_) throw StateError("sigmoid backward without a recorded forward");
        require_shape(grad_out, output_.shape, "sigmoid grad");
        Tensor<T> dx(output_.shape);
        for (std::size_t i = 0; i < dx.numel(); ++i) {
            const T y = output_.values[i];
            dx.values[i] = grad_out.values[i] * y * (T(1) - y);
        }
        return dx;
    }

  private:
    Tensor<T> output_;
    bool recorded_ = false;
};

template <class T>
inline Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_4d(a, "concat");
    detail::check_4d(b, "concat");
    if (a.shape[0] != b.shape[0] || a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3])
        throw ShapeError("concat operands must share N, H, W");
    const int n = a.shape[0], ca = a.shape[1], cb = b.shape[1], h = a.shape[2], w = a.shape[3];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> out({n, ca + cb, h, w});
    for (int ni = 0; ni < n; ++ni) {
        std::copy_n(a.values.data() + static_cast<std::size_t>(ni) * ca * plane, ca * plane,
                    out.values.data() + static_cast<std::size_t>(ni) * (ca + cb) * plane);
        std::copy_n(b.values.data() + static_cast<std::size_t>(ni) * cb * plane, cb * plane,
                    out.values.data() + (static_cast<std::size_t>(ni) * (ca + cb) + ca) * plane);
    }
    return out;
}

template <class T>
inline std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int ca) {
    detail::check_4d(g, "split");
    const int n = g.shape[0], c = g.shape[1], h = g.shape[2], w = g.shape[3];
    if (ca < 1 || ca >= c) throw ShapeError("split point outside channel range");
    const int cb = c - ca;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> a({n, ca, h, w}), b({n, cb, h, w});
    for (int ni = 0; ni < n; ++ni) {
        std::copy_n(g.values.data() + static_cast<std::size_t>(ni) * c * plane, ca * plane,
                    a.values.data() + static_cast<std::size_t>(ni) * ca * plane);
        std::copy_n(g.values.data() + (static_cast<std::size_t>(ni) * c + ca) * plane, cb * plane,
                    b.values.data() + static_cast<std::size_t>(ni) * cb * plane);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace omseg
