#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/image.hpp"
#include "omseg/volume.hpp"

namespace omseg {

// Bone window: clamp to [center - width/2, center + width/2], i.e. [-400, 1100] by default.
struct WindowSpec {
    double width_hu = 1500.0;
    double center_hu = 350.0;

    void validate() const {
        if (!(width_hu > 0.0)) throw InvalidArgumentError("window width must be positive");
    }

    double lo() const { return center_hu - 0.5 * width_hu; }
    double hi() const { return center_hu + 0.5 * width_hu; }
};

inline double window_value(double hu, const WindowSpec& spec) {
    return std::clamp(hu, spec.lo(), spec.hi());
}

inline Volume window_ct(const Volume& v, const WindowSpec& spec = {}) {
    spec.validate();
    if (v.modality != Modality::CT)
        throw InvalidArgumentError("window_ct applies to CT volumes only");
    Volume out = v;
    for (auto& x : out.voxels) x = static_cast<float>(window_value(x, spec));
    return out;
}

// out = (x - min) / (max - min + eps); a constant volume maps to all-zero.
inline double normalize_value(double x, double lo, double hi, double eps) {
    return (x - lo) / (hi - lo + eps);
}

inline std::vector<double> min_max_normalize(const std::vector<double>& xs, double eps = 1e-8) {
    if (xs.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        out[i] = normalize_value(xs[i], *lo_it, *hi_it, eps);
    return out;
}

inline Volume min_max_normalize(const Volume& v, double eps = 1e-8) {
    Volume out = v;
    if (v.voxels.empty()) return out;
    double lo = v.voxels.front(), hi = v.voxels.front();
    for (float x : v.voxels) {
        lo = std::min(lo, static_cast<double>(x));
        hi = std::max(hi, static_cast<double>(x));
    }
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
        out.voxels[i] = static_cast<float>(normalize_value(v.voxels[i], lo, hi, eps));
    return out;
}

// Windows the CT channel, then min-max normalizes both channels per volume.
// PET has no meaningful HU window, so it is normalized as-is.
inline Study preprocess_study(const Study& study, const WindowSpec& spec = {}, double eps = 1e-8) {
    study.validate();
    Study out = study;
    out.ct = min_max_normalize(window_ct(study.ct, spec), eps);
    out.pet = min_max_normalize(study.pet, eps);
    return out;
}

inline std::vector<SliceSample> slice_axial(const Study& study, SliceSource source) {
    study.validate();
    for (const auto* v : {&study.ct, &study.pet})
        for (float x : v->voxels)
            if (x < 0.0f || x > 1.0f)
                throw InvalidArgumentError("slice_axial expects windowed, normalized channels");

    const auto& d = study.ct.geom.dims;
    std::vector<SliceSample> samples;
    samples.reserve(d.z);
    for (int k = 0; k < d.z; ++k) {
        SliceSample s;
        s.patient_id = study.patient_id;
        s.z = k;
        s.label_source = source;
        s.image = DualChannelImage(d.y, d.x);
        s.mask = Mask2D(d.y, d.x);
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                s.image.at(0, j, i) = study.ct.at(k, j, i);
                s.image.at(1, j, i) = study.pet.at(k, j, i);
                const bool a = study.label_a.at(k, j, i) != 0;
                const bool b = study.label_b.at(k, j, i) != 0;
                s.mask.at(j, i) = source == SliceSource::A ? a : source == SliceSource::B ? b : (a || b);
            }
        samples.push_back(std::move(s));
    }
    return samples;
}

// Keeps exactly the samples whose union mask shows at least one positive pixel.
// The criterion list must align with samples element-wise by (patient_id, z).
inline std::vector<SliceSample> filter_background(const std::vector<SliceSample>& samples,
                                                  const std::vector<SliceSample>& union_samples) {
    if (samples.size() != union_samples.size())
        throw InvalidArgumentError("background filter criterion list length mismatch");
    std::vector<SliceSample> kept;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].patient_id != union_samples[i].patient_id ||
            samples[i].z != union_samples[i].z)
            throw InvalidArgumentError("background filter criterion misaligned at index " +
                                       std::to_string(i));
        if (union_samples[i].mask.positive_count() > 0) kept.push_back(samples[i]);
    }
    return kept;
}

namespace detail {

// Align-corners-true source coordinate for output index i of n_out samples.
inline double resize_coord(int i, int n_in, int n_out) {
    if (n_out == 1) return 0.0;
    return static_cast<double>(i) * (n_in - 1) / (n_out - 1);
}

inline double bilinear_at(const DualChannelImage& img, int c, double r, double col) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(col));
    const double fr = r - r0, fc = col - c0;
    double acc = 0.0;
    for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
            const double wgt = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
            if (wgt == 0.0) continue;
            const int rr = std::min(r0 + dr, img.h - 1);
            const int cc = std::min(c0 + dc, img.w - 1);
            acc += wgt * img.at(c, rr, cc);
        }
    return acc;
}

}  // namespace detail

// Nearest-neighbor mask rescale with the same align-corners convention as resize.
inline Mask2D resize_mask(const Mask2D& mask, int out_h, int out_w) {
    if (out_h < 2 || out_w < 2) throw InvalidArgumentError("resize targets must be >= 2");
    if (mask.h == out_h && mask.w == out_w) return mask;
    Mask2D out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const int nr = std::min(static_cast<int>(std::llround(detail::resize_coord(r, mask.h, out_h))),
                                mask.h - 1);
        for (int col = 0; col < out_w; ++col) {
            const int nc = std::min(
                static_cast<int>(std::llround(detail::resize_coord(col, mask.w, out_w))), mask.w - 1);
            out.at(r, col) = mask.at(nr, nc);
        }
    }
    return out;
}

// Plain square rescale: bilinear on the image channels, nearest on the mask.
inline SliceSample resize(const SliceSample& sample, int out_h, int out_w) {
    if (out_h < 2 || out_w < 2) throw InvalidArgumentError("resize targets must be >= 2");
    sample.validate();
    if (sample.image.h == out_h && sample.image.w == out_w) return sample;

    SliceSample out;
    out.patient_id = sample.patient_id;
    out.z = sample.z;
    out.label_source = sample.label_source;
    out.image = DualChannelImage(out_h, out_w);
    out.mask = Mask2D(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const double src_r = detail::resize_coord(r, sample.image.h, out_h);
        for (int col = 0; col < out_w; ++col) {
            const double src_c = detail::resize_coord(col, sample.image.w, out_w);
            for (int c = 0; c < 2; ++c)
                out.image.at(c, r, col) =
                    static_cast<float>(detail::bilinear_at(sample.image, c, src_r, src_c));
            const int nr = static_cast<int>(std::llround(src_r));
            const int nc = static_cast<int>(std::llround(src_c));
            out.mask.at(r, col) = sample.mask.at(std::min(nr, sample.mask.h - 1),
                                                 std::min(nc, sample.mask.w - 1));
        }
    }
    return out;
}

}  // namespace omseg
