#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/image.hpp"
#include "omseg/tensor.hpp"
#include "omseg/volume.hpp"

namespace omseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Pixel positive iff prob >= threshold; ties count as positive.
template <class T>
inline Mask2D binarize(const Tensor<T>& prob, int h, int w, double threshold = 0.5) {
    if (prob.numel() != static_cast<std::size_t>(h) * w)
        throw ShapeError("binarize: probability map size mismatch");
    Mask2D out(h, w);
    for (std::size_t i = 0; i < prob.numel(); ++i) {
        const double p = prob.values[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidArgumentError("binarize expects probabilities in [0, 1]");
        out.data[i] = p >= threshold ? 1 : 0;
    }
    return out;
}

inline ConfusionCounts confusion(const MaskVolume& pred, const MaskVolume& gt) {
    if (!(pred.geom == gt.geom)) throw GeometryMismatchError("confusion operands must share geometry");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
        const bool p = pred.voxels[i] != 0, g = gt.voxels[i] != 0;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

// Degenerate conventions: DSC/IoU are 1 when pred and gt are both empty and 0
// when exactly one is; sensitivity is 1 on empty gt; specificity is 1 when gt
// covers every voxel.
inline double dsc(const ConfusionCounts& c) {
    const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double iou(const ConfusionCounts& c) {
    const std::uint64_t den = c.tp + c.fp + c.fn;
    if (den == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double sensitivity(const ConfusionCounts& c) {
    const std::uint64_t den = c.tp + c.fn;
    if (den == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double specificity(const ConfusionCounts& c) {
    const std::uint64_t den = c.tn + c.fp;
    if (den == 0) return 1.0;
    return static_cast<double>(c.tn) / static_cast<double>(den);
}

struct PatientMetrics {
    std::string patient_id;
    double dsc = 0.0, iou = 0.0, sensitivity = 0.0, specificity = 0.0;
};

struct CohortSummary {
    std::string metric;
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

// Mean and sample standard deviation (n - 1 denominator; 0 when n = 1).
inline CohortSummary mean_sd(const std::vector<double>& values, const std::string& metric = {}) {
    if (values.empty()) throw InvalidArgumentError("mean_sd needs at least one value");
    CohortSummary s;
    s.metric = metric;
    s.n = values.size();
    double acc = 0.0;
    for (double v : values) acc += v;
    s.mean = acc / static_cast<double>(s.n);
    if (s.n > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(sq / static_cast<double>(s.n - 1));
    }
    return s;
}

// Cohen's kappa over voxels; chance agreement from the marginal positive rates.
// Full agreement at p_e = 1 (both masks constant and equal) returns 1.
inline double cohen_kappa(const MaskVolume& a, const MaskVolume& b) {
    if (!(a.geom == b.geom)) throw GeometryMismatchError("kappa operands must share geometry");
    const double n = static_cast<double>(a.voxels.size());
    std::uint64_t agree = 0, pos_a = 0, pos_b = 0;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        const bool pa = a.voxels[i] != 0, pb = b.voxels[i] != 0;
        agree += pa == pb;
        pos_a += pa;
        pos_b += pb;
    }
    const double po = agree / n;
    const double ra = pos_a / n, rb = pos_b / n;
    const double pe = ra * rb + (1.0 - ra) * (1.0 - rb);
    if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

}  // namespace omseg
