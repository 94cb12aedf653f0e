#pragma once

#include <gtest/gtest.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "omseg/rng.hpp"
#include "omseg/tensor.hpp"
#include "omseg/volume.hpp"

namespace testsup {

// Unique scratch directory removed on scope exit.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path_ = base / ("omseg_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline void expect_close(double actual, double expected, double tol, const std::string& what) {
    EXPECT_NEAR(actual, expected, tol) << what;
}

// Relative agreement with an absolute floor for near-zero pairs.
inline bool close_rel(double a, double b, double rel_tol = 1e-4, double abs_floor = 1e-8) {
    const double diff = std::abs(a - b);
    if (diff <= abs_floor) return true;
    return diff / std::max(std::abs(a), std::abs(b)) <= rel_tol;
}

inline void fill_uniform(omseg::Tensor<double>& t, omseg::Rng& rng, double lo, double hi) {
    for (auto& v : t.values) v = rng.uniform(lo, hi);
}

// Central finite differences of a scalar functional, element by element.
template <class Forward>
inline std::vector<double> numeric_grad(const Forward& f, omseg::Tensor<double>& x,
                                        double h = 1e-5) {
    std::vector<double> grad(x.values.size(), 0.0);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double saved = x.values[i];
        x.values[i] = saved + h;
        const double up = f(x);
        x.values[i] = saved - h;
        const double down = f(x);
        x.values[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

template <class F>
inline omseg::Volume make_volume(omseg::Dims3 dims, omseg::Modality modality, F&& value) {
    omseg::Volume v(omseg::VolumeGeometry{dims, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}, modality);
    for (int k = 0; k < dims.z; ++k)
        for (int j = 0; j < dims.y; ++j)
            for (int i = 0; i < dims.x; ++i)
                v.at(k, j, i) = static_cast<float>(value(k, j, i));
    return v;
}

template <class F>
inline omseg::MaskVolume make_mask(omseg::Dims3 dims, omseg::LabelSource source, F&& value) {
    omseg::MaskVolume m(omseg::VolumeGeometry{dims, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}, source);
    for (int k = 0; k < dims.z; ++k)
        for (int j = 0; j < dims.y; ++j)
            for (int i = 0; i < dims.x; ++i)
                m.at(k, j, i) = value(k, j, i) ? 1 : 0;
    return m;
}

}  // namespace testsup
