#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "omseg/errors.hpp"

namespace omseg {

enum class Modality { CT, PET };
enum class LabelSource { A, B, Pred };

inline const char* to_string(Modality m) { return m == Modality::CT ? "CT" : "PET"; }

inline const char* to_string(LabelSource s) {
    switch (s) {
        case LabelSource::A: return "A";
        case LabelSource::B: return "B";
        default: return "PRED";
    }
}

// Z-major triple: component 0 is Z, 1 is Y, 2 is X.
struct Vec3 {
    double z = 0.0, y = 0.0, x = 0.0;

    friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Dims3 {
    int z = 0, y = 0, x = 0;

    friend bool operator==(const Dims3&, const Dims3&) = default;
};

// Voxel-center convention: physical position = origin + index * spacing.
struct VolumeGeometry {
    Dims3 dims;
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};

    friend bool operator==(const VolumeGeometry&, const VolumeGeometry&) = default;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims.z) * static_cast<std::size_t>(dims.y) *
               static_cast<std::size_t>(dims.x);
    }

    void validate() const {
        if (dims.z <= 0 || dims.y <= 0 || dims.x <= 0)
            throw InvalidGeometryError("volume dims must be positive");
        if (!(spacing_mm.z > 0.0) || !(spacing_mm.y > 0.0) || !(spacing_mm.x > 0.0))
            throw InvalidGeometryError("voxel spacing must be positive");
        if (!std::isfinite(origin_mm.z) || !std::isfinite(origin_mm.y) || !std::isfinite(origin_mm.x))
            throw InvalidGeometryError("volume origin must be finite");
    }

    Vec3 position(int k, int j, int i) const {
        return {origin_mm.z + k * spacing_mm.z, origin_mm.y + j * spacing_mm.y,
                origin_mm.x + i * spacing_mm.x};
    }

    // Physical center of the voxel grid; rotation pivots here.
    Vec3 center() const {
        return {origin_mm.z + 0.5 * (dims.z - 1) * spacing_mm.z,
                origin_mm.y + 0.5 * (dims.y - 1) * spacing_mm.y,
                origin_mm.x + 0.5 * (dims.x - 1) * spacing_mm.x};
    }
};

// Scalar voxel grid, Z-major then Y then X.
struct Volume {
    VolumeGeometry geom;
    Modality modality = Modality::CT;
    std::vector<float> voxels;

    Volume() = default;
    Volume(VolumeGeometry g, Modality m) : geom(g), modality(m) {
        g.validate();
        voxels.assign(g.voxel_count(), 0.0f);
    }

    std::size_t index(int k, int j, int i) const {
        return (static_cast<std::size_t>(k) * geom.dims.y + j) * geom.dims.x + i;
    }

    float at(int k, int j, int i) const { return voxels[index(k, j, i)]; }
    float& at(int k, int j, int i) { return voxels[index(k, j, i)]; }

    void validate() const {
        geom.validate();
        if (voxels.size() != geom.voxel_count())
            throw InvalidGeometryError("voxel buffer size disagrees with dims");
        for (float v : voxels)
            if (!std::isfinite(v)) throw NonFiniteVoxelError("volume holds a non-finite voxel");
    }
};

// Binary voxel grid sharing the geometry conventions of Volume.
struct MaskVolume {
    VolumeGeometry geom;
    LabelSource label_source = LabelSource::A;
    std::vector<std::uint8_t> voxels;

    MaskVolume() = default;
    MaskVolume(VolumeGeometry g, LabelSource s) : geom(g), label_source(s) {
        g.validate();
        voxels.assign(g.voxel_count(), 0);
    }

    std::size_t index(int k, int j, int i) const {
        return (static_cast<std::size_t>(k) * geom.dims.y + j) * geom.dims.x + i;
    }

    std::uint8_t at(int k, int j, int i) const { return voxels[index(k, j, i)]; }
    std::uint8_t& at(int k, int j, int i) { return voxels[index(k, j, i)]; }

    std::size_t positive_count() const {
        std::size_t n = 0;
        for (auto v : voxels) n += v;
        return n;
    }

    void validate() const {
        geom.validate();
        if (voxels.size() != geom.voxel_count())
            throw InvalidGeometryError("voxel buffer size disagrees with dims");
        for (auto v : voxels)
            if (v > 1) throw NonBinaryMaskError("mask holds a value outside {0, 1}");
    }
};

// Translation plus a rotation about the Z axis. The identity is all-zero.
// When applied by resampling, the rotation pivots about the physical center of
// the reference grid and the translation is added afterwards.
struct RigidTransform {
    Vec3 translation_mm{0.0, 0.0, 0.0};
    double axial_rotation_deg = 0.0;

    bool is_identity() const {
        return translation_mm == Vec3{} && axial_rotation_deg == 0.0;
    }

    // Defined for pure translations only; a rotated transform's inverse depends
    // on the pivot, which lives with the resampling call, not here.
    RigidTransform inverse() const {
        if (axial_rotation_deg != 0.0)
            throw InvalidArgumentError("inverse is defined for zero-rotation transforms only");
        return {{-translation_mm.z, -translation_mm.y, -translation_mm.x}, 0.0};
    }
};

// One patient: registered CT and PET on a shared grid plus the two annotation volumes.
struct Study {
    std::string patient_id;
    Volume ct;
    Volume pet;
    MaskVolume label_a;
    MaskVolume label_b;

    void validate() const {
        if (patient_id.empty()) throw InvalidArgumentError("patient_id must be non-empty");
        ct.geom.validate();
        if (!(pet.geom == ct.geom) || !(label_a.geom == ct.geom) || !(label_b.geom == ct.geom))
            throw GeometryMismatchError("study members must share one geometry: " + patient_id);
    }
};

}  // namespace omseg
