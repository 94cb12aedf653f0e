#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "omseg/dataset.hpp"
#include "omseg/errors.hpp"
#include "omseg/fsio.hpp"
#include "omseg/phantom.hpp"
#include "omseg/train.hpp"
#include "omseg/volume_io.hpp"

namespace omseg {

namespace detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
    const std::vector<char> bytes = read_file_bytes(path);
    nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded())
        throw ConfigError("not a valid structured-text document: " + path.string());
    return j;
}

// Fail-closed view over one object: unknown keys are errors, and every typed
// accessor names the full key path in its diagnostic.
class Section {
  public:
    Section(const nlohmann::json& j, std::string path, std::initializer_list<const char*> allowed)
        : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
        for (const auto& item : j_.items()) {
            bool known = false;
            for (const char* k : allowed)
                if (item.key() == k) known = true;
            if (!known) throw ConfigError("unknown config key: " + path_ + "." + item.key());
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const nlohmann::json& require(const char* key) const {
        if (!j_.contains(key)) throw ConfigError("missing config key: " + full(key));
        return j_.at(key);
    }

    Section section(const char* key, std::initializer_list<const char*> allowed) const {
        return Section(require(key), full(key), allowed);
    }

    double number(const char* key) const { return as_number(require(key), full(key)); }
    double number(const char* key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    int integer(const char* key) const { return as_int(require(key), full(key)); }
    int integer(const char* key, int fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    std::uint64_t u64(const char* key) const {
        const auto& v = require(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(full(key) + " must be a non-negative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = require(key);
        if (!v.is_boolean()) throw ConfigError(full(key) + " must be a boolean");
        return v.get<bool>();
    }

    std::string text(const char* key) const {
        const auto& v = require(key);
        if (!v.is_string()) throw ConfigError(full(key) + " must be a string");
        return v.get<std::string>();
    }
    std::string text(const char* key, std::string fallback) const {
        return has(key) ? text(key) : std::move(fallback);
    }

    Dims3 dims3(const char* key, Dims3 fallback) const {
        if (!has(key)) return fallback;
        const auto& v = require(key);
        if (!v.is_array() || v.size() != 3)
            throw ConfigError(full(key) + " must be a [z, y, x] triple");
        return {as_int(v[0], full(key)), as_int(v[1], full(key)), as_int(v[2], full(key))};
    }

    Vec3 vec3(const char* key, Vec3 fallback) const {
        if (!has(key)) return fallback;
        const auto& v = require(key);
        if (!v.is_array() || v.size() != 3)
            throw ConfigError(full(key) + " must be a [z, y, x] triple");
        return {as_number(v[0], full(key)), as_number(v[1], full(key)),
                as_number(v[2], full(key))};
    }

    std::pair<int, int> int_pair(const char* key, std::pair<int, int> fallback) const {
        if (!has(key)) return fallback;
        const auto& v = require(key);
        if (!v.is_array() || v.size() != 2)
            throw ConfigError(full(key) + " must be a [lo, hi] pair");
        return {as_int(v[0], full(key)), as_int(v[1], full(key))};
    }

  private:
    std::string full(const char* key) const { return path_ + "." + key; }

    static double as_number(const nlohmann::json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path + " must be a number");
        return v.get<double>();
    }
    static int as_int(const nlohmann::json& v, const std::string& path) {
        if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
        return v.get<int>();
    }

    const nlohmann::json& j_;
    std::string path_;
};

}  // namespace detail

struct SeedsConfig {
    std::uint64_t cohort = 0;
    std::uint64_t split = 0;
    std::uint64_t init = 0;
    std::uint64_t shuffle = 0;
};

inline ModalityMode parse_modality(const std::string& s) {
    if (s == "dual") return ModalityMode::Dual;
    if (s == "ct_only") return ModalityMode::CtOnly;
    if (s == "pet_only") return ModalityMode::PetOnly;
    throw ConfigError("modality must be one of dual | ct_only | pet_only, got \"" + s + "\"");
}

inline std::string to_string(ModalityMode m) {
    switch (m) {
        case ModalityMode::Dual: return "dual";
        case ModalityMode::CtOnly: return "ct_only";
        default: return "pet_only";
    }
}

struct ExperimentConfig {
    PhantomConfig phantom;
    WindowSpec window;
    int input_size = 64;
    double norm_eps = 1e-8;
    AugmentationConfig augment;
    LossConfig loss;
    AdamConfig adam;
    ScheduleConfig schedule;
    int batch_size = 8;
    int patience = 10;
    int depth = 2;
    int base_channels = 8;
    ModalityMode modality = ModalityMode::Dual;
    SeedsConfig seeds;
    std::string out_dir;

    UNetConfig unet_config() const {
        return UNetConfig{channel_count(modality), 1, depth, base_channels, input_size};
    }

    DatasetBuildConfig data_config() const { return DatasetBuildConfig{window, norm_eps, input_size}; }

    EvalConfig eval_config() const {
        return EvalConfig{window, norm_eps, input_size, modality, batch_size};
    }

    TrainConfig train_config() const {
        TrainConfig cfg;
        cfg.model = unet_config();
        cfg.loss = loss;
        cfg.adam = adam;
        cfg.schedule = schedule;
        cfg.augment = augment;
        cfg.batch_size = batch_size;
        cfg.patience = patience;
        cfg.shuffle_seed = seeds.shuffle;
        cfg.modality = modality;
        return cfg;
    }

    void validate() const {
        auto tagged = [](const char* section, auto&& fn) {
            try {
                fn();
            } catch (const InvalidArgumentError& e) {
                throw ConfigError(std::string(section) + ": " + e.what());
            }
        };
        tagged("phantom", [&] { phantom.validate(); });
        tagged("preprocess", [&] {
            window.validate();
            if (input_size < 8) throw InvalidArgumentError("input_size must be >= 8");
            if (!(norm_eps > 0.0)) throw InvalidArgumentError("norm_eps must be positive");
        });
        tagged("augment", [&] { augment.validate(); });
        tagged("loss", [&] { loss.validate(); });
        tagged("optim", [&] {
            adam.validate();
            schedule.validate();
            if (batch_size < 1) throw InvalidArgumentError("batch_size must be >= 1");
            if (patience < 1) throw InvalidArgumentError("patience must be >= 1");
        });
        tagged("model", [&] { unet_config().validate(); });
    }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::Section root(j, "config",
                         {"phantom", "preprocess", "augment", "loss", "optim", "model",
                          "modality", "seeds", "out_dir"});

    {
        detail::Section phantom = root.section(
            "phantom", {"n_patients", "dims", "spacing_mm", "lesions_per_patient",
                        "implant_probability", "pet_misalignment_vox", "noise_sd_hu"});
        cfg.phantom.n_patients = phantom.integer("n_patients");
        cfg.phantom.dims = phantom.dims3("dims", {40, 64, 64});
        cfg.phantom.spacing_mm = phantom.vec3("spacing_mm", {1.0, 1.0, 1.0});
        const auto lesions = phantom.int_pair("lesions_per_patient", {1, 3});
        cfg.phantom.lesions_min = lesions.first;
        cfg.phantom.lesions_max = lesions.second;
        cfg.phantom.implant_probability = phantom.number("implant_probability", 0.25);
        cfg.phantom.misalignment_vox = phantom.dims3("pet_misalignment_vox", {3, 3, 3});
        cfg.phantom.noise_sd_hu = phantom.number("noise_sd_hu", 25.0);
    }
    if (root.has("preprocess")) {
        detail::Section pre = root.section(
            "preprocess", {"window_width_hu", "window_center_hu", "input_size", "norm_eps"});
        cfg.window.width_hu = pre.number("window_width_hu", 1500.0);
        cfg.window.center_hu = pre.number("window_center_hu", 350.0);
        cfg.input_size = pre.integer("input_size", 64);
        cfg.norm_eps = pre.number("norm_eps", 1e-8);
    }
    if (root.has("augment")) {
        detail::Section aug = root.section(
            "augment", {"p_flip", "rot_range_deg", "translate_frac", "scale_lo", "scale_hi",
                        "enabled"});
        cfg.augment.p_flip = aug.number("p_flip", 0.5);
        cfg.augment.rot_range_deg = aug.number("rot_range_deg", 15.0);
        cfg.augment.translate_frac = aug.number("translate_frac", 0.05);
        cfg.augment.scale_lo = aug.number("scale_lo", 0.95);
        cfg.augment.scale_hi = aug.number("scale_hi", 1.05);
        cfg.augment.enabled = aug.boolean("enabled", true);
    }
    if (root.has("loss")) {
        detail::Section loss = root.section("loss", {"lambda", "eps_dice", "bce_clamp"});
        cfg.loss.lambda = loss.number("lambda", 0.5);
        cfg.loss.eps_dice = loss.number("eps_dice", 1e-6);
        cfg.loss.bce_clamp = loss.number("bce_clamp", 1e-7);
    }
    if (root.has("optim")) {
        detail::Section optim = root.section(
            "optim", {"lr0", "t_max", "eta_min", "batch_size", "patience", "weight_decay",
                      "beta1", "beta2", "adam_eps"});
        cfg.schedule.lr0 = optim.number("lr0", 1e-4);
        cfg.schedule.t_max = optim.integer("t_max", 20);
        cfg.schedule.eta_min = optim.number("eta_min", 0.0);
        cfg.batch_size = optim.integer("batch_size", 8);
        cfg.patience = optim.integer("patience", 10);
        cfg.adam.weight_decay = optim.number("weight_decay", 1e-4);
        cfg.adam.beta1 = optim.number("beta1", 0.9);
        cfg.adam.beta2 = optim.number("beta2", 0.999);
        cfg.adam.eps = optim.number("adam_eps", 1e-8);
    }
    if (root.has("model")) {
        detail::Section model = root.section("model", {"depth", "base_channels"});
        cfg.depth = model.integer("depth", 2);
        cfg.base_channels = model.integer("base_channels", 8);
    }
    if (root.has("modality")) cfg.modality = parse_modality(root.text("modality"));
    {
        detail::Section seeds = root.section("seeds", {"cohort", "split", "init", "shuffle"});
        cfg.seeds.cohort = seeds.u64("cohort");
        cfg.seeds.split = seeds.u64("split");
        cfg.seeds.init = seeds.u64("init");
        cfg.seeds.shuffle = seeds.u64("shuffle");
    }
    cfg.out_dir = root.text("out_dir", "");
    cfg.phantom.seed = cfg.seeds.cohort;
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(detail::parse_json_file(path));
}

// All four pipeline seeds re-derived from one integer; roles are fixed tags so
// the streams stay decorrelated.
inline void apply_seed_override(ExperimentConfig& cfg, std::uint64_t n) {
    cfg.seeds.cohort = mix_seed(n, 1);
    cfg.seeds.split = mix_seed(n, 2);
    cfg.seeds.init = mix_seed(n, 3);
    cfg.seeds.shuffle = mix_seed(n, 4);
    cfg.phantom.seed = cfg.seeds.cohort;
}

struct ManifestEntry {
    std::string patient_id;
    std::string ct, pet, label_a, label_b;
};

struct CohortManifest {
    std::vector<ManifestEntry> patients;
};

inline void write_manifest(const std::filesystem::path& path, const CohortManifest& manifest) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["patients"] = nlohmann::json::array();
    for (const auto& e : manifest.patients)
        j["patients"].push_back({{"patient_id", e.patient_id},
                                 {"ct", e.ct},
                                 {"pet", e.pet},
                                 {"label_a", e.label_a},
                                 {"label_b", e.label_b}});
    detail::atomic_write(path, j.dump(2) + "\n");
}

inline CohortManifest read_manifest(const std::filesystem::path& path) {
    const nlohmann::json j = detail::parse_json_file(path);
    detail::Section root(j, "manifest", {"format_version", "patients"});
    if (root.integer("format_version") != 1)
        throw ConfigError("manifest.format_version must be 1");
    const auto& patients = root.require("patients");
    if (!patients.is_array()) throw ConfigError("manifest.patients must be an array");
    CohortManifest manifest;
    for (const auto& p : patients) {
        detail::Section entry(p, "manifest.patients[]",
                              {"patient_id", "ct", "pet", "label_a", "label_b"});
        manifest.patients.push_back({entry.text("patient_id"), entry.text("ct"),
                                     entry.text("pet"), entry.text("label_a"),
                                     entry.text("label_b")});
    }
    return manifest;
}

// Manifest paths resolve relative to the manifest file itself.
inline Study load_study(const ManifestEntry& entry, const std::filesystem::path& base_dir) {
    Study study;
    study.patient_id = entry.patient_id;
    study.ct = read_volume(base_dir / entry.ct);
    study.pet = read_volume(base_dir / entry.pet);
    study.label_a = read_mask_volume(base_dir / entry.label_a);
    study.label_b = read_mask_volume(base_dir / entry.label_b);
    study.validate();
    if (study.ct.modality != Modality::CT || study.pet.modality != Modality::PET)
        throw ConfigError("manifest assigns a volume to the wrong modality slot for " +
                          entry.patient_id);
    if (study.label_a.label_source != LabelSource::A ||
        study.label_b.label_source != LabelSource::B)
        throw ConfigError("manifest assigns a mask to the wrong label slot for " +
                          entry.patient_id);
    return study;
}

inline std::vector<Study> load_cohort(const std::filesystem::path& manifest_path) {
    const CohortManifest manifest = read_manifest(manifest_path);
    std::vector<Study> studies;
    for (const auto& entry : manifest.patients)
        studies.push_back(load_study(entry, manifest_path.parent_path()));
    return studies;
}

inline void write_split(const std::filesystem::path& path, const SplitAssignment& split,
                        std::uint64_t seed) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["seed"] = seed;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    detail::atomic_write(path, j.dump(2) + "\n");
}

inline SplitAssignment read_split(const std::filesystem::path& path) {
    const nlohmann::json j = detail::parse_json_file(path);
    detail::Section root(j, "split", {"format_version", "seed", "train", "val", "test"});
    if (root.integer("format_version") != 1) throw ConfigError("split.format_version must be 1");
    root.u64("seed");
    auto ids = [&](const char* key) {
        const auto& arr = root.require(key);
        if (!arr.is_array()) throw ConfigError(std::string("split.") + key + " must be an array");
        std::vector<std::string> out;
        for (const auto& v : arr) {
            if (!v.is_string())
                throw ConfigError(std::string("split.") + key + " must hold patient ids");
            out.push_back(v.get<std::string>());
        }
        return out;
    };
    SplitAssignment split{ids("train"), ids("val"), ids("test")};
    split.validate();
    return split;
}

}  // namespace omseg
