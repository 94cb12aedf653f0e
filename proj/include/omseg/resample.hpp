#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <utility>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/volume.hpp"

namespace omseg {

enum class Interp { Trilinear, Nearest };

namespace detail {

// Sampling position for output voxel center p: rotate (p - c) about the Z axis
// through the reference center c, then translate. With zero rotation this is p + t.
struct SampleMap {
    Vec3 center;
    Vec3 translation;
    double cos_t = 1.0, sin_t = 0.0;

    SampleMap(const VolumeGeometry& reference, const RigidTransform& t)
        : center(reference.center()), translation(t.translation_mm) {
        const double rad = t.axial_rotation_deg * std::acos(-1.0) / 180.0;
        cos_t = std::cos(rad);
        sin_t = std::sin(rad);
    }

    Vec3 operator()(const Vec3& p) const {
        const double dy = p.y - center.y;
        const double dx = p.x - center.x;
        return {p.z + translation.z, center.y + dx * sin_t + dy * cos_t + translation.y,
                center.x + dx * cos_t - dy * sin_t + translation.x};
    }
};

inline Vec3 to_index_space(const Vec3& pos, const VolumeGeometry& g) {
    return {(pos.z - g.origin_mm.z) / g.spacing_mm.z, (pos.y - g.origin_mm.y) / g.spacing_mm.y,
            (pos.x - g.origin_mm.x) / g.spacing_mm.x};
}

inline double sample_trilinear(const Volume& v, const Vec3& idx) {
    const auto& d = v.geom.dims;
    const int k0 = static_cast<int>(std::floor(idx.z));
    const int j0 = static_cast<int>(std::floor(idx.y));
    const int i0 = static_cast<int>(std::floor(idx.x));
    const double fz = idx.z - k0, fy = idx.y - j0, fx = idx.x - i0;
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dz ? fz : 1.0 - fz) * (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                if (w == 0.0) continue;
                const int k = k0 + dz, j = j0 + dy, i = i0 + dx;
                if (k < 0 || k >= d.z || j < 0 || j >= d.y || i < 0 || i >= d.x) continue;
                acc += w * v.at(k, j, i);
            }
    return acc;
}

template <class V>
inline typename std::remove_cvref_t<decltype(std::declval<V>().voxels)>::value_type
sample_nearest(const V& v, const Vec3& idx) {
    const auto& d = v.geom.dims;
    const int k = static_cast<int>(std::llround(idx.z));
    const int j = static_cast<int>(std::llround(idx.y));
    const int i = static_cast<int>(std::llround(idx.x));
    if (k < 0 || k >= d.z || j < 0 || j >= d.y || i < 0 || i >= d.x) return 0;
    return v.at(k, j, i);
}

}  // namespace detail

inline Volume resample_to_reference(const Volume& moving, const VolumeGeometry& reference,
                                    const RigidTransform& t, Interp interp = Interp::Trilinear) {
    reference.validate();
    Volume out(reference, moving.modality);
    detail::SampleMap map(reference, t);
    for (int k = 0; k < reference.dims.z; ++k)
        for (int j = 0; j < reference.dims.y; ++j)
            for (int i = 0; i < reference.dims.x; ++i) {
                const Vec3 idx = detail::to_index_space(map(reference.position(k, j, i)), moving.geom);
                out.at(k, j, i) = interp == Interp::Trilinear
                                      ? static_cast<float>(detail::sample_trilinear(moving, idx))
                                      : detail::sample_nearest(moving, idx);
            }
    return out;
}

inline MaskVolume resample_to_reference(const MaskVolume& moving, const VolumeGeometry& reference,
                                        const RigidTransform& t, Interp interp = Interp::Nearest) {
    if (interp != Interp::Nearest)
        throw InvalidArgumentError("masks resample with nearest interpolation only");
    reference.validate();
    MaskVolume out(reference, moving.label_source);
    detail::SampleMap map(reference, t);
    for (int k = 0; k < reference.dims.z; ++k)
        for (int j = 0; j < reference.dims.y; ++j)
            for (int i = 0; i < reference.dims.x; ++i) {
                const Vec3 idx = detail::to_index_space(map(reference.position(k, j, i)), moving.geom);
                out.at(k, j, i) = detail::sample_nearest(moving, idx);
            }
    return out;
}

namespace detail {

// NCC between fixed and moving sampled at fixed-index + offset, over the voxels whose
// sample stays fully inside moving. Returns -inf when the overlap is degenerate.
inline double ncc_at_offset(const Volume& fixed, const Volume& moving, const Vec3& offset) {
    const auto& fd = fixed.geom.dims;
    const auto& md = moving.geom.dims;
    const bool integral = offset.z == std::floor(offset.z) && offset.y == std::floor(offset.y) &&
                          offset.x == std::floor(offset.x);
    double sf = 0, sm = 0, sff = 0, smm = 0, sfm = 0;
    std::size_t n = 0;
    for (int k = 0; k < fd.z; ++k) {
        const double mz = k + offset.z;
        if (mz < 0 || mz > md.z - 1) continue;
        for (int j = 0; j < fd.y; ++j) {
            const double my = j + offset.y;
            if (my < 0 || my > md.y - 1) continue;
            for (int i = 0; i < fd.x; ++i) {
                const double mx = i + offset.x;
                if (mx < 0 || mx > md.x - 1) continue;
                const double f = fixed.at(k, j, i);
                const double m = integral ? moving.at(static_cast<int>(mz), static_cast<int>(my),
                                                      static_cast<int>(mx))
                                          : sample_trilinear(moving, {mz, my, mx});
                sf += f;
                sm += m;
                sff += f * f;
                smm += m * m;
                sfm += f * m;
                ++n;
            }
        }
    }
    if (n < 2) return -std::numeric_limits<double>::infinity();
    const double nf = static_cast<double>(n);
    const double varf = sff - sf * sf / nf;
    const double varm = smm - sm * sm / nf;
    if (varf <= 0.0 || varm <= 0.0) return -std::numeric_limits<double>::infinity();
    return (sfm - sf * sm / nf) / std::sqrt(varf * varm);
}

inline bool has_variance(const Volume& v) {
    for (float x : v.voxels)
        if (x != v.voxels.front()) return true;
    return false;
}

}  // namespace detail

// Pure-translation alignment: exhaustive NCC over the integer displacement grid
// within +/- search_radius_vox, then step-halving refinement of the best candidate
// down to step_vox. Displacements are in fixed-index space; the returned transform
// carries them in mm so that resample_to_reference(moving, fixed.geom, result)
// best matches fixed.
inline RigidTransform estimate_translation(const Volume& fixed, const Volume& moving,
                                           int search_radius_vox, double step_vox = 0.5) {
    if (!(fixed.geom.spacing_mm == moving.geom.spacing_mm))
        throw InvalidArgumentError("estimate_translation requires equal spacing");
    if (search_radius_vox < 1) throw InvalidArgumentError("search_radius_vox must be >= 1");
    if (!(step_vox > 0.0)) throw InvalidArgumentError("step_vox must be positive");
    if (!detail::has_variance(fixed) || !detail::has_variance(moving))
        throw DegenerateInputError("NCC is undefined for a zero-variance volume");

    const Vec3 base = detail::to_index_space(fixed.geom.origin_mm, moving.geom);

    Vec3 best{0, 0, 0};
    double best_score = -std::numeric_limits<double>::infinity();
    const int r = search_radius_vox;
    for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const Vec3 off{base.z + dz, base.y + dy, base.x + dx};
                const double s = detail::ncc_at_offset(fixed, moving, off);
                if (s > best_score) {
                    best_score = s;
                    best = {static_cast<double>(dz), static_cast<double>(dy),
                            static_cast<double>(dx)};
                }
            }

    for (double step = 0.5; step >= step_vox; step *= 0.5) {
        Vec3 local_best = best;
        double local_score = best_score;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dz == 0 && dy == 0 && dx == 0) continue;
                    const Vec3 cand{best.z + dz * step, best.y + dy * step, best.x + dx * step};
                    const Vec3 off{base.z + cand.z, base.y + cand.y, base.x + cand.x};
                    const double s = detail::ncc_at_offset(fixed, moving, off);
                    if (s > local_score) {
                        local_score = s;
                        local_best = cand;
                    }
                }
        best = local_best;
        best_score = local_score;
    }

    const auto& sp = fixed.geom.spacing_mm;
    return {{best.z * sp.z, best.y * sp.y, best.x * sp.x}, 0.0};
}

}  // namespace omseg
