#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "omseg/errors.hpp"

namespace omseg {

enum class SliceSource { A, B, Union };

// Two stacked planes, channel-major: channel 0 = CT, channel 1 = PET, values in [0,1].
struct DualChannelImage {
    int h = 0, w = 0;
    std::vector<float> data;

    DualChannelImage() = default;
    DualChannelImage(int height, int width) : h(height), w(width) {
        if (height <= 0 || width <= 0) throw InvalidArgumentError("image dims must be positive");
        data.assign(2u * height * width, 0.0f);
    }

    std::size_t index(int c, int r, int col) const {
        return (static_cast<std::size_t>(c) * h + r) * w + col;
    }

    float at(int c, int r, int col) const { return data[index(c, r, col)]; }
    float& at(int c, int r, int col) { return data[index(c, r, col)]; }
};

struct Mask2D {
    int h = 0, w = 0;
    std::vector<std::uint8_t> data;

    Mask2D() = default;
    Mask2D(int height, int width) : h(height), w(width) {
        if (height <= 0 || width <= 0) throw InvalidArgumentError("mask dims must be positive");
        data.assign(static_cast<std::size_t>(height) * width, 0);
    }

    std::uint8_t at(int r, int col) const { return data[static_cast<std::size_t>(r) * w + col]; }
    std::uint8_t& at(int r, int col) { return data[static_cast<std::size_t>(r) * w + col]; }

    std::size_t positive_count() const {
        std::size_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
};

// One axial plane of a study with its annotation, tagged by provenance.
struct SliceSample {
    DualChannelImage image;
    Mask2D mask;
    std::string patient_id;
    int z = 0;
    SliceSource label_source = SliceSource::A;

    void validate() const {
        if (image.h != mask.h || image.w != mask.w)
            throw ShapeError("slice image and mask must share height and width");
        for (auto v : mask.data)
            if (v > 1) throw NonBinaryMaskError("slice mask holds a value outside {0, 1}");
    }
};

}  // namespace omseg
