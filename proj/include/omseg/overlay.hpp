#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/fsio.hpp"
#include "omseg/preprocess.hpp"
#include "omseg/volume.hpp"

namespace omseg {

struct OverlayImage {
    int h = 0, w = 0;
    std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

    unsigned char* pixel(int r, int c) { return rgb.data() + 3 * (static_cast<std::size_t>(r) * w + c); }
    const unsigned char* pixel(int r, int c) const {
        return rgb.data() + 3 * (static_cast<std::size_t>(r) * w + c);
    }
};

namespace detail {

// Pulls one channel toward full intensity and halves the others, so a tinted
// pixel differs from its grayscale base at every gray level.
inline void tint(unsigned char* px, int gray, bool in_a, bool in_b) {
    const int lifted = 255 - (255 - gray) / 3;
    px[0] = static_cast<unsigned char>(in_a ? lifted : gray / 2);
    px[1] = static_cast<unsigned char>(gray / 2);
    px[2] = static_cast<unsigned char>(in_b ? lifted : gray / 2);
}

}  // namespace detail

// Windowed, volume-normalized CT slice as the grayscale base; model A positives
// shift red, model B positives shift blue, joint positives magenta. Null
// prediction pointers mean "no overlay from that model".
inline OverlayImage render_overlay(const Study& study, const MaskVolume* pred_a,
                                   const MaskVolume* pred_b, int z,
                                   const WindowSpec& window = {}, double norm_eps = 1e-8) {
    study.validate();
    const VolumeGeometry& geom = study.ct.geom;
    if (z < 0 || z >= geom.dims.z)
        throw InvalidArgumentError("overlay z out of range [0, " +
                                   std::to_string(geom.dims.z) + ")");
    for (const MaskVolume* pred : {pred_a, pred_b})
        if (pred && !(pred->geom == geom))
            throw GeometryMismatchError("prediction geometry differs from the study");

    const Volume base = min_max_normalize(window_ct(study.ct, window), norm_eps);
    OverlayImage img;
    img.h = geom.dims.y;
    img.w = geom.dims.x;
    img.rgb.assign(static_cast<std::size_t>(img.h) * img.w * 3, 0);
    for (int j = 0; j < img.h; ++j)
        for (int i = 0; i < img.w; ++i) {
            int gray = static_cast<int>(std::llround(base.at(z, j, i) * 255.0));
            gray = gray < 0 ? 0 : (gray > 255 ? 255 : gray);
            const bool in_a = pred_a && pred_a->at(z, j, i) != 0;
            const bool in_b = pred_b && pred_b->at(z, j, i) != 0;
            unsigned char* px = img.pixel(j, i);
            if (in_a || in_b) {
                detail::tint(px, gray, in_a, in_b);
            } else {
                px[0] = px[1] = px[2] = static_cast<unsigned char>(gray);
            }
        }
    return img;
}

inline std::string ppm_bytes(const OverlayImage& img) {
    if (img.h < 1 || img.w < 1 || img.rgb.size() != static_cast<std::size_t>(img.h) * img.w * 3)
        throw InvalidArgumentError("overlay image is empty or inconsistently sized");
    std::string out = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return out;
}

inline void write_overlay_ppm(const std::filesystem::path& path, const OverlayImage& img) {
    detail::atomic_write(path, ppm_bytes(img));
}

// The axial plane with the most annotated voxels under either label; ties take
// the lowest z. Patients are generated with at least one positive plane.
inline int densest_label_plane(const Study& study) {
    const VolumeGeometry& geom = study.ct.geom;
    int best_z = 0;
    long best_count = -1;
    for (int k = 0; k < geom.dims.z; ++k) {
        long count = 0;
        for (int j = 0; j < geom.dims.y; ++j)
            for (int i = 0; i < geom.dims.x; ++i)
                if (study.label_a.at(k, j, i) != 0 || study.label_b.at(k, j, i) != 0) ++count;
        if (count > best_count) {
            best_count = count;
            best_z = k;
        }
    }
    return best_z;
}

}  // namespace omseg
