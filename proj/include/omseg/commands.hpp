#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "omseg/config.hpp"
#include "omseg/errors.hpp"
#include "omseg/evaluate.hpp"
#include "omseg/overlay.hpp"
#include "omseg/phantom.hpp"
#include "omseg/report.hpp"
#include "omseg/train.hpp"
#include "omseg/unet.hpp"
#include "omseg/volume_io.hpp"

namespace omseg {

// Stable exit codes: 0 ok, 2 config/argument, 3 I/O or unreadable data,
// 4 training diverged, 5 checkpoint/config shape mismatch, 1 anything else.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitDiverged = 4,
    kExitShapeMismatch = 5,
};

struct CommandOptions {
    std::string config_path;
    std::string out_dir;
    std::string precision = "f64";
    bool has_seed_override = false;
    std::uint64_t seed_override = 0;
    int overlay_z = -1;          // <0 picks the densest annotated plane per patient
    std::string overlay_patient;  // empty overlays every test patient
};

namespace detail {

template <class Fn>
inline int run_guarded(Fn&& body) {
    auto report = [](const char* kind, const std::exception& e) {
        std::fprintf(stderr, "error (%s): %s\n", kind, e.what());
    };
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        report("config", e);
        return kExitConfig;
    } catch (const InvalidArgumentError& e) {
        report("config", e);
        return kExitConfig;
    } catch (const TrainingDivergedError& e) {
        report("training", e);
        return kExitDiverged;
    } catch (const ShapeError& e) {
        report("shape", e);
        return kExitShapeMismatch;
    } catch (const IoError& e) {
        report("io", e);
        return kExitIo;
    } catch (const MalformedHeaderError& e) {
        report("io", e);
        return kExitIo;
    } catch (const PayloadLengthError& e) {
        report("io", e);
        return kExitIo;
    } catch (const NonFiniteVoxelError& e) {
        report("io", e);
        return kExitIo;
    } catch (const NonBinaryMaskError& e) {
        report("io", e);
        return kExitIo;
    } catch (const InvalidGeometryError& e) {
        report("io", e);
        return kExitIo;
    } catch (const Error& e) {
        report("runtime", e);
        return kExitFailure;
    } catch (const std::exception& e) {
        report("unexpected", e);
        return kExitFailure;
    }
}

inline ExperimentConfig load_config_for(const CommandOptions& opts) {
    if (opts.config_path.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = load_experiment_config(opts.config_path);
    if (opts.has_seed_override) apply_seed_override(cfg, opts.seed_override);
    return cfg;
}

inline std::filesystem::path resolve_out_dir(const CommandOptions& opts,
                                             const ExperimentConfig& cfg) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    throw ConfigError("no output directory: pass --out or set out_dir in the config");
}

inline bool parse_precision_f64(const std::string& s) {
    if (s == "f64") return true;
    if (s == "f32") return false;
    throw ConfigError("--precision must be f32 or f64, got \"" + s + "\"");
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <class T>
inline void run_train(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const std::vector<Study> studies = load_cohort(out / "cohort" / "manifest.json");
    std::vector<std::string> ids;
    for (const auto& s : studies) ids.push_back(s.patient_id);
    const SplitAssignment split = patient_split(ids, cfg.seeds.split);

    const std::filesystem::path train_dir = out / "train";
    ensure_dir(train_dir);
    write_split(train_dir / "split.json", split, cfg.seeds.split);

    DualTrainResult<T> result = train_dual<T>(studies, split, cfg.data_config(),
                                              cfg.train_config(), cfg.seeds.init);
    save_checkpoint(*result.model_a, train_dir / "model_A");
    save_checkpoint(*result.model_b, train_dir / "model_B");
    write_train_report_csv(train_dir / "report_A.csv", result.report_a);
    write_train_report_csv(train_dir / "report_B.csv", result.report_b);
}

template <class T>
inline void run_eval(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const std::vector<Study> studies = load_cohort(out / "cohort" / "manifest.json");
    const SplitAssignment split = read_split(out / "train" / "split.json");
    std::vector<Study> test;
    for (const Study* s : select_studies(studies, split.test)) test.push_back(*s);

    UNet<T> model_a(cfg.unet_config()), model_b(cfg.unet_config());
    load_checkpoint(model_a, out / "train" / "model_A");
    load_checkpoint(model_b, out / "train" / "model_B");
    model_a.set_mode(Mode::Eval);
    model_b.set_mode(Mode::Eval);

    const EvalConfig eval_cfg = cfg.eval_config();
    const std::filesystem::path eval_dir = out / "eval";
    ensure_dir(eval_dir);

    CrossEvalMatrix matrix;
    for (int row = 0; row < 2; ++row)
        for (int col = 0; col < 2; ++col) {
            const LabelSource gt = col == 0 ? LabelSource::A : LabelSource::B;
            PatientEvalResult r =
                row == 0 ? patient_level_eval<T>(model_a, test, gt, eval_cfg)
                         : patient_level_eval<T>(model_b, test, gt, eval_cfg);
            const std::string name = std::string("metrics_Model") + (row == 0 ? "A" : "B") +
                                     "_GT_" + (col == 0 ? "A" : "B") + ".csv";
            write_metrics_csv(eval_dir / name, r.per_patient);
            for (const auto& pm : r.per_patient)
                matrix.cell[row][col].per_patient_dsc.push_back(pm.dsc);
            matrix.cell[row][col].summary =
                mean_sd(matrix.cell[row][col].per_patient_dsc, "dsc");
            if (row == 0 && col == 0)
                for (const auto& pm : r.per_patient) matrix.patient_ids.push_back(pm.patient_id);
            if (row == col)
                for (std::size_t i = 0; i < r.predictions.size(); ++i)
                    write_volume(r.predictions[i],
                                 eval_dir / (r.per_patient[i].patient_id + "_pred_" +
                                             (row == 0 ? "A" : "B") + ".volhdr"));
        }
    write_cross_eval_csv(eval_dir / "cross_eval.csv", matrix);

    std::vector<std::pair<std::string, double>> kappa_rows;
    std::vector<const Study*> ordered;
    for (const auto& s : test) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const Study* a, const Study* b) { return a->patient_id < b->patient_id; });
    for (const Study* s : ordered)
        kappa_rows.emplace_back(s->patient_id, cohen_kappa(s->label_a, s->label_b));
    write_kappa_csv(eval_dir / "kappa.csv", kappa_rows);
}

}  // namespace detail

inline int cmd_phantom(const CommandOptions& opts) {
    return detail::run_guarded([&] {
        const ExperimentConfig cfg = detail::load_config_for(opts);
        const std::filesystem::path out = detail::resolve_out_dir(opts, cfg);
        const std::filesystem::path cohort_dir = out / "cohort";
        detail::ensure_dir(cohort_dir);

        CohortManifest manifest;
        for (const GeneratedPatient& patient : generate_cohort(cfg.phantom)) {
            const std::string& id = patient.study.patient_id;
            write_volume(patient.study.ct, cohort_dir / (id + "_ct.volhdr"));
            write_volume(patient.study.pet, cohort_dir / (id + "_pet.volhdr"));
            write_volume(patient.study.label_a, cohort_dir / (id + "_label_a.volhdr"));
            write_volume(patient.study.label_b, cohort_dir / (id + "_label_b.volhdr"));
            manifest.patients.push_back({id, id + "_ct.volhdr", id + "_pet.volhdr",
                                         id + "_label_a.volhdr", id + "_label_b.volhdr"});
        }
        write_manifest(cohort_dir / "manifest.json", manifest);
    });
}

inline int cmd_train(const CommandOptions& opts) {
    return detail::run_guarded([&] {
        const ExperimentConfig cfg = detail::load_config_for(opts);
        const std::filesystem::path out = detail::resolve_out_dir(opts, cfg);
        if (detail::parse_precision_f64(opts.precision))
            detail::run_train<double>(cfg, out);
        else
            detail::run_train<float>(cfg, out);
    });
}

inline int cmd_eval(const CommandOptions& opts) {
    return detail::run_guarded([&] {
        const ExperimentConfig cfg = detail::load_config_for(opts);
        const std::filesystem::path out = detail::resolve_out_dir(opts, cfg);
        if (detail::parse_precision_f64(opts.precision))
            detail::run_eval<double>(cfg, out);
        else
            detail::run_eval<float>(cfg, out);
    });
}

inline int cmd_overlay(const CommandOptions& opts) {
    return detail::run_guarded([&] {
        const ExperimentConfig cfg = detail::load_config_for(opts);
        const std::filesystem::path out = detail::resolve_out_dir(opts, cfg);
        const std::vector<Study> studies = load_cohort(out / "cohort" / "manifest.json");
        const SplitAssignment split = read_split(out / "train" / "split.json");
        const std::filesystem::path overlay_dir = out / "overlay";
        detail::ensure_dir(overlay_dir);

        bool matched = false;
        for (const Study* study : select_studies(studies, split.test)) {
            if (!opts.overlay_patient.empty() && study->patient_id != opts.overlay_patient)
                continue;
            matched = true;
            const MaskVolume pred_a =
                read_mask_volume(out / "eval" / (study->patient_id + "_pred_A.volhdr"));
            const MaskVolume pred_b =
                read_mask_volume(out / "eval" / (study->patient_id + "_pred_B.volhdr"));
            const int z = opts.overlay_z >= 0 ? opts.overlay_z : densest_label_plane(*study);
            const OverlayImage img =
                render_overlay(*study, &pred_a, &pred_b, z, cfg.window, cfg.norm_eps);
            char name[64];
            std::snprintf(name, sizeof(name), "%s_z%03d.ppm", study->patient_id.c_str(), z);
            write_overlay_ppm(overlay_dir / name, img);
        }
        if (!matched)
            throw InvalidArgumentError("no test patient matches \"" + opts.overlay_patient + "\"");
    });
}

}  // namespace omseg
