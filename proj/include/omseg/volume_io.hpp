#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omseg/errors.hpp"
#include "omseg/fsio.hpp"
#include "omseg/volume.hpp"

namespace omseg {

namespace detail {

inline nlohmann::json parse_header(const std::filesystem::path& hdr_path) {
    std::ifstream in(hdr_path);
    if (!in) throw FileMissingError("missing header: " + hdr_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeaderError(hdr_path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw MalformedHeaderError(hdr_path.string() + ": header must be an object");
    return j;
}

inline Vec3 header_vec3(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
        throw MalformedHeaderError(where + ": field '" + key + "' must be a 3-element array");
    const auto& a = j[key];
    for (const auto& v : a)
        if (!v.is_number()) throw MalformedHeaderError(where + ": '" + key + "' must be numeric");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

struct ParsedHeader {
    VolumeGeometry geom;
    std::string dtype;
    std::string modality;
    std::string label_source;
};

inline ParsedHeader read_header(const std::filesystem::path& hdr_path) {
    const std::string where = hdr_path.string();
    nlohmann::json j = parse_header(hdr_path);

    for (const auto& [key, _] : j.items()) {
        if (key != "format_version" && key != "dims" && key != "spacing_mm" &&
            key != "origin_mm" && key != "dtype" && key != "modality" && key != "label_source")
            throw MalformedHeaderError(where + ": unknown field '" + key + "'");
    }
    if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
        j["format_version"].get<int>() != 1)
        throw MalformedHeaderError(where + ": format_version must be 1");

    ParsedHeader h;
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
        throw MalformedHeaderError(where + ": field 'dims' must be a 3-element array");
    for (const auto& v : j["dims"])
        if (!v.is_number_integer()) throw MalformedHeaderError(where + ": 'dims' must be integers");
    h.geom.dims = {j["dims"][0].get<int>(), j["dims"][1].get<int>(), j["dims"][2].get<int>()};
    h.geom.spacing_mm = header_vec3(j, "spacing_mm", where);
    h.geom.origin_mm = header_vec3(j, "origin_mm", where);

    for (const char* key : {"dtype", "modality"})
        if (!j.contains(key) || !j[key].is_string())
            throw MalformedHeaderError(where + ": field '" + std::string(key) + "' must be a string");
    h.dtype = j["dtype"].get<std::string>();
    h.modality = j["modality"].get<std::string>();
    if (h.dtype != "f32le" && h.dtype != "u8")
        throw MalformedHeaderError(where + ": dtype must be 'f32le' or 'u8'");
    if (h.modality != "CT" && h.modality != "PET" && h.modality != "MASK")
        throw MalformedHeaderError(where + ": modality must be 'CT', 'PET', or 'MASK'");
    if ((h.dtype == "u8") != (h.modality == "MASK"))
        throw MalformedHeaderError(where + ": dtype u8 and modality MASK imply each other");

    if (h.dtype == "u8") {
        if (!j.contains("label_source") || !j["label_source"].is_string())
            throw MalformedHeaderError(where + ": masks require a 'label_source' string");
        h.label_source = j["label_source"].get<std::string>();
        if (h.label_source != "A" && h.label_source != "B" && h.label_source != "PRED")
            throw MalformedHeaderError(where + ": label_source must be 'A', 'B', or 'PRED'");
    } else if (j.contains("label_source")) {
        throw MalformedHeaderError(where + ": label_source is only valid for masks");
    }

    try {
        h.geom.validate();
    } catch (const InvalidGeometryError& e) {
        throw InvalidGeometryError(where + ": " + e.what());
    }
    return h;
}

inline std::vector<char> read_payload(const std::filesystem::path& raw_path,
                                      std::size_t expected_bytes) {
    std::ifstream in(raw_path, std::ios::binary);
    if (!in) throw FileMissingError("missing payload: " + raw_path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_bytes)
        throw PayloadLengthError(raw_path.string() + ": expected " + std::to_string(expected_bytes) +
                                 " bytes, found " + std::to_string(bytes.size()));
    return bytes;
}

inline std::filesystem::path sibling_raw(const std::filesystem::path& hdr_path) {
    std::filesystem::path p = hdr_path;
    p.replace_extension(".volraw");
    return p;
}

inline nlohmann::json geometry_header(const VolumeGeometry& g) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["dims"] = {g.dims.z, g.dims.y, g.dims.x};
    j["spacing_mm"] = {g.spacing_mm.z, g.spacing_mm.y, g.spacing_mm.x};
    j["origin_mm"] = {g.origin_mm.z, g.origin_mm.y, g.origin_mm.x};
    return j;
}

}  // namespace detail

// Path arguments name the .volhdr file; the payload lives beside it as .volraw.

inline Volume read_volume(const std::filesystem::path& hdr_path) {
    auto h = detail::read_header(hdr_path);
    if (h.dtype != "f32le")
        throw MalformedHeaderError(hdr_path.string() + ": expected a scalar volume, found a mask");
    Volume v;
    v.geom = h.geom;
    v.modality = h.modality == "CT" ? Modality::CT : Modality::PET;
    auto bytes = detail::read_payload(detail::sibling_raw(hdr_path), h.geom.voxel_count() * 4);
    v.voxels.resize(h.geom.voxel_count());
    static_assert(sizeof(float) == 4);
    std::memcpy(v.voxels.data(), bytes.data(), bytes.size());
    for (float f : v.voxels)
        if (!std::isfinite(f))
            throw NonFiniteVoxelError(hdr_path.string() + ": payload holds a non-finite voxel");
    return v;
}

inline MaskVolume read_mask_volume(const std::filesystem::path& hdr_path) {
    auto h = detail::read_header(hdr_path);
    if (h.dtype != "u8")
        throw MalformedHeaderError(hdr_path.string() + ": expected a mask, found a scalar volume");
    MaskVolume m;
    m.geom = h.geom;
    m.label_source = h.label_source == "A"   ? LabelSource::A
                     : h.label_source == "B" ? LabelSource::B
                                             : LabelSource::Pred;
    auto bytes = detail::read_payload(detail::sibling_raw(hdr_path), h.geom.voxel_count());
    m.voxels.assign(bytes.begin(), bytes.end());
    for (auto v : m.voxels)
        if (v > 1) throw NonBinaryMaskError(hdr_path.string() + ": payload holds a non-binary value");
    return m;
}

inline void write_volume(const Volume& v, const std::filesystem::path& hdr_path) {
    v.validate();
    nlohmann::json j = detail::geometry_header(v.geom);
    j["dtype"] = "f32le";
    j["modality"] = to_string(v.modality);
    detail::atomic_write(detail::sibling_raw(hdr_path),
                         reinterpret_cast<const char*>(v.voxels.data()), v.voxels.size() * 4);
    detail::atomic_write(hdr_path, j.dump(2) + "\n");
}

inline void write_volume(const MaskVolume& m, const std::filesystem::path& hdr_path) {
    m.validate();
    nlohmann::json j = detail::geometry_header(m.geom);
    j["dtype"] = "u8";
    j["modality"] = "MASK";
    j["label_source"] = to_string(m.label_source);
    detail::atomic_write(detail::sibling_raw(hdr_path),
                         reinterpret_cast<const char*>(m.voxels.data()), m.voxels.size());
    detail::atomic_write(hdr_path, j.dump(2) + "\n");
}

}  // namespace omseg
