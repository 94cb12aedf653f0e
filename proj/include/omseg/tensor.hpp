#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "omseg/errors.hpp"

namespace omseg {

// Dense row-major tensor. The grad buffer, when allocated, mirrors values.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        values.assign(numel_of(shape), T(0));
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return values.size(); }

    void alloc_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }

    void zero_grad() { grad.assign(values.size(), T(0)); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

template <class T>
struct Parameter {
    Tensor<T> tensor;
    std::string name;
    bool trainable = true;
};

template <class T>
inline void require_shape(const Tensor<T>& t, const std::vector<int>& shape, const char* what) {
    if (t.shape != shape) {
        std::string got = "(", want = "(";
        for (int d : t.shape) got += std::to_string(d) + ",";
        for (int d : shape) want += std::to_string(d) + ",";
        throw ShapeError(std::string(what) + ": expected " + want + ") got " + got + ")");
    }
}

}  // namespace omseg
