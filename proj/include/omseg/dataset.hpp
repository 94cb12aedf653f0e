#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/image.hpp"
#include "omseg/rng.hpp"

namespace omseg {

struct SplitAssignment {
    std::vector<std::string> train, val, test;

    void validate() const {
        if (train.empty() || val.empty() || test.empty())
            throw InvalidArgumentError("every split subset must be non-empty");
        std::vector<std::string> all;
        all.insert(all.end(), train.begin(), train.end());
        all.insert(all.end(), val.begin(), val.end());
        all.insert(all.end(), test.begin(), test.end());
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end())
            throw InvalidArgumentError("split subsets must be disjoint");
    }
};

// 7:1:2 patient-wise split. Test takes round(0.2n) and val round(0.1n), each at
// least 1; train takes the remainder. Subsets are reported sorted; membership
// depends only on (ids, seed).
inline SplitAssignment patient_split(const std::vector<std::string>& patient_ids,
                                     std::uint64_t seed) {
    const std::size_t n = patient_ids.size();
    if (n < 3) throw InvalidArgumentError("patient_split needs at least 3 patients");
    const auto n_test = static_cast<std::size_t>(
        std::max<long>(1, std::lround(0.2 * static_cast<double>(n))));
    const auto n_val = static_cast<std::size_t>(
        std::max<long>(1, std::lround(0.1 * static_cast<double>(n))));
    if (n_test + n_val >= n)
        throw InvalidArgumentError("split leaves no training patients");

    std::vector<std::string> ids = patient_ids;
    Rng rng(seed);
    shuffle(ids, rng);

    SplitAssignment s;
    const std::size_t n_train = n - n_test - n_val;
    s.train.assign(ids.begin(), ids.begin() + n_train);
    s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    s.test.assign(ids.begin() + n_train + n_val, ids.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    s.validate();
    return s;
}

struct AugmentationConfig {
    double p_flip = 0.5;
    double rot_range_deg = 15.0;
    double translate_frac = 0.05;
    double scale_lo = 0.95;
    double scale_hi = 1.05;
    bool enabled = true;

    void validate() const {
        if (p_flip < 0.0 || p_flip > 1.0) throw InvalidArgumentError("p_flip must lie in [0, 1]");
        if (rot_range_deg < 0.0) throw InvalidArgumentError("rot_range_deg must be >= 0");
        if (translate_frac < 0.0) throw InvalidArgumentError("translate_frac must be >= 0");
        if (!(scale_lo > 0.0) || scale_hi < scale_lo)
            throw InvalidArgumentError("scale range must satisfy 0 < lo <= hi");
    }
};

// One sampled geometric map. Forward order: flip, rotate, scale, translate,
// all about the image center.
struct AugDraws {
    bool flip_h = false;
    bool flip_v = false;
    double angle_deg = 0.0;
    double shift_r = 0.0;
    double shift_c = 0.0;
    double scale = 1.0;
};

inline AugDraws draw_augmentation(const AugmentationConfig& cfg, int h, int w, Rng& rng) {
    cfg.validate();
    AugDraws d;
    d.flip_h = rng.bernoulli(cfg.p_flip);
    d.flip_v = rng.bernoulli(cfg.p_flip);
    d.angle_deg = rng.uniform(-cfg.rot_range_deg, cfg.rot_range_deg);
    d.shift_r = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h;
    d.shift_c = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w;
    d.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    return d;
}

namespace detail {

inline double bilinear_zero_fill(const DualChannelImage& img, int c, double r, double col) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(col));
    const double fr = r - r0, fc = col - c0;
    double acc = 0.0;
    for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
            const double wgt = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
            if (wgt == 0.0) continue;
            const int rr = r0 + dr, cc = c0 + dc;
            if (rr < 0 || rr >= img.h || cc < 0 || cc >= img.w) continue;
            acc += wgt * img.at(c, rr, cc);
        }
    return acc;
}

inline std::uint8_t nearest_zero_fill(const Mask2D& mask, double r, double col) {
    const int rr = static_cast<int>(std::llround(r));
    const int cc = static_cast<int>(std::llround(col));
    if (rr < 0 || rr >= mask.h || cc < 0 || cc >= mask.w) return 0;
    return mask.at(rr, cc);
}

}  // namespace detail

// Applies one geometric map to both channels (bilinear) and the mask (nearest),
// zero-filled outside the frame. Output pixels are pulled through the inverse map.
inline SliceSample apply_augmentation(const SliceSample& sample, const AugDraws& d) {
    sample.validate();
    const int h = sample.image.h, w = sample.image.w;
    const double cr = 0.5 * (h - 1), cc = 0.5 * (w - 1);
    const double rad = d.angle_deg * std::acos(-1.0) / 180.0;
    const double cos_t = std::cos(rad), sin_t = std::sin(rad);

    SliceSample out;
    out.patient_id = sample.patient_id;
    out.z = sample.z;
    out.label_source = sample.label_source;
    out.image = DualChannelImage(h, w);
    out.mask = Mask2D(h, w);

    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
            double y = (r - cr - d.shift_r) / d.scale;
            double x = (col - cc - d.shift_c) / d.scale;
            double ys = -x * sin_t + y * cos_t;
            double xs = x * cos_t + y * sin_t;
            if (d.flip_v) ys = -ys;
            if (d.flip_h) xs = -xs;
            const double src_r = ys + cr, src_c = xs + cc;
            for (int ch = 0; ch < 2; ++ch)
                out.image.at(ch, r, col) =
                    static_cast<float>(detail::bilinear_zero_fill(sample.image, ch, src_r, src_c));
            out.mask.at(r, col) = detail::nearest_zero_fill(sample.mask, src_r, src_c);
        }
    return out;
}

inline SliceSample augment(const SliceSample& sample, const AugmentationConfig& cfg, Rng& rng) {
    if (!cfg.enabled) throw StateError("augment called with augmentation disabled");
    return apply_augmentation(sample, draw_augmentation(cfg, sample.image.h, sample.image.w, rng));
}

// Per-epoch permutation of [0, n) cut into batches; the final batch may be short.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size,
                                                           std::uint64_t shuffle_seed,
                                                           std::uint64_t epoch) {
    if (n == 0) throw InvalidArgumentError("batch_indices needs a non-empty sample list");
    if (batch_size < 1) throw InvalidArgumentError("batch_size must be >= 1");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(mix_seed(shuffle_seed, epoch));
    shuffle(perm, rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size) {
        const std::size_t end = std::min(n, i + batch_size);
        batches.emplace_back(perm.begin() + i, perm.begin() + end);
    }
    return batches;
}

}  // namespace omseg
