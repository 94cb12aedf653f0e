#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/image.hpp"
#include "omseg/metrics.hpp"
#include "omseg/preprocess.hpp"
#include "omseg/tensor.hpp"
#include "omseg/unet.hpp"
#include "omseg/volume.hpp"

namespace omseg {

enum class ModalityMode { Dual, CtOnly, PetOnly };

inline int channel_count(ModalityMode m) { return m == ModalityMode::Dual ? 2 : 1; }

// Stacks per-z binary planes into a volume; z indices left unsupplied fill with
// zeros (slices dropped by background filtering).
inline MaskVolume reconstruct_3d(const std::vector<std::pair<int, Mask2D>>& slices,
                                 const VolumeGeometry& geom,
                                 LabelSource source = LabelSource::Pred) {
    geom.validate();
    MaskVolume out(geom, source);
    std::vector<bool> seen(geom.dims.z, false);
    for (const auto& [z, mask] : slices) {
        if (z < 0 || z >= geom.dims.z)
            throw InvalidArgumentError("reconstruct_3d: slice z out of range");
        if (seen[z]) throw InvalidArgumentError("reconstruct_3d: duplicate slice z");
        seen[z] = true;
        if (mask.h != geom.dims.y || mask.w != geom.dims.x)
            throw ShapeError("reconstruct_3d: slice dims disagree with the reference");
        for (int j = 0; j < geom.dims.y; ++j)
            for (int i = 0; i < geom.dims.x; ++i) out.at(z, j, i) = mask.at(j, i) ? 1 : 0;
    }
    return out;
}

struct EvalConfig {
    WindowSpec window;
    double norm_eps = 1e-8;
    int input_size = 64;
    ModalityMode modality = ModalityMode::Dual;
    int chunk = 8;
};

template <class T>
inline Tensor<T> assemble_batch(const std::vector<const SliceSample*>& samples, ModalityMode mode) {
    if (samples.empty()) throw InvalidArgumentError("assemble_batch needs samples");
    const int h = samples[0]->image.h, w = samples[0]->image.w;
    const int c = channel_count(mode);
    Tensor<T> x({static_cast<int>(samples.size()), c, h, w});
    std::size_t at = 0;
    for (const auto* s : samples) {
        if (s->image.h != h || s->image.w != w) throw ShapeError("assemble_batch: ragged sample dims");
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        if (mode == ModalityMode::Dual) {
            for (std::size_t i = 0; i < 2 * plane; ++i) x.values[at++] = static_cast<T>(s->image.data[i]);
        } else {
            const std::size_t base = mode == ModalityMode::CtOnly ? 0 : plane;
            for (std::size_t i = 0; i < plane; ++i)
                x.values[at++] = static_cast<T>(s->image.data[base + i]);
        }
    }
    return x;
}

template <class T>
inline Tensor<T> assemble_masks(const std::vector<const SliceSample*>& samples) {
    if (samples.empty()) throw InvalidArgumentError("assemble_masks needs samples");
    const int h = samples[0]->mask.h, w = samples[0]->mask.w;
    Tensor<T> gt({static_cast<int>(samples.size()), 1, h, w});
    std::size_t at = 0;
    for (const auto* s : samples)
        for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
            gt.values[at++] = static_cast<T>(s->mask.data[i]);
    return gt;
}

// Slices one preprocessed study, resizes, predicts every plane in fixed-size
// chunks, binarizes, restores in-plane dims, and stacks the prediction volume.
template <class T, class M>
inline MaskVolume predict_study(M& model, const Study& study, const EvalConfig& cfg) {
    if (model.mode() != Mode::Eval) throw StateError("prediction requires a model in eval mode");
    const Study processed = preprocess_study(study, cfg.window, cfg.norm_eps);
    const std::vector<SliceSample> slices = slice_axial(processed, SliceSource::Union);
    std::vector<SliceSample> resized;
    resized.reserve(slices.size());
    for (const auto& s : slices) resized.push_back(resize(s, cfg.input_size, cfg.input_size));

    std::vector<std::pair<int, Mask2D>> planes;
    planes.reserve(resized.size());
    for (std::size_t start = 0; start < resized.size();
         start += static_cast<std::size_t>(cfg.chunk)) {
        const std::size_t end = std::min(resized.size(), start + static_cast<std::size_t>(cfg.chunk));
        std::vector<const SliceSample*> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&resized[i]);
        Tensor<T> prob = model.forward(assemble_batch<T>(chunk, cfg.modality));
        const std::size_t plane = static_cast<std::size_t>(cfg.input_size) * cfg.input_size;
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            Tensor<T> one({1, 1, cfg.input_size, cfg.input_size});
            std::copy_n(prob.values.data() + i * plane, plane, one.values.data());
            Mask2D m = binarize(one, cfg.input_size, cfg.input_size);
            planes.emplace_back(resized[start + i].z,
                                resize_mask(m, study.ct.geom.dims.y, study.ct.geom.dims.x));
        }
    }
    return reconstruct_3d(planes, study.ct.geom, LabelSource::Pred);
}

struct PatientEvalResult {
    std::vector<PatientMetrics> per_patient;
    std::vector<MaskVolume> predictions;
    CohortSummary dsc, iou, sensitivity, specificity;
};

template <class T, class M>
inline PatientEvalResult patient_level_eval(M& model, const std::vector<Study>& test_studies,
                                            LabelSource gt_source, const EvalConfig& cfg) {
    if (test_studies.empty()) throw InvalidArgumentError("patient_level_eval needs test patients");
    if (gt_source == LabelSource::Pred)
        throw InvalidArgumentError("ground truth source must be A or B");

    std::vector<const Study*> ordered;
    for (const auto& s : test_studies) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const Study* a, const Study* b) { return a->patient_id < b->patient_id; });

    PatientEvalResult out;
    std::vector<double> ds, is, se, sp;
    for (const Study* study : ordered) {
        MaskVolume pred = predict_study<T>(model, *study, cfg);
        const MaskVolume& gt = gt_source == LabelSource::A ? study->label_a : study->label_b;
        const ConfusionCounts c = confusion(pred, gt);
        PatientMetrics pm;
        pm.patient_id = study->patient_id;
        pm.dsc = dsc(c);
        pm.iou = iou(c);
        pm.sensitivity = sensitivity(c);
        pm.specificity = specificity(c);
        ds.push_back(pm.dsc);
        is.push_back(pm.iou);
        se.push_back(pm.sensitivity);
        sp.push_back(pm.specificity);
        out.per_patient.push_back(pm);
        out.predictions.push_back(std::move(pred));
    }
    out.dsc = mean_sd(ds, "dsc");
    out.iou = mean_sd(is, "iou");
    out.sensitivity = mean_sd(se, "sensitivity");
    out.specificity = mean_sd(sp, "specificity");
    return out;
}

struct CrossEvalCell {
    std::vector<double> per_patient_dsc;
    CohortSummary summary;
};

// rows: model A, model B; columns: GT A, GT B; identical patients in every cell.
struct CrossEvalMatrix {
    CrossEvalCell cell[2][2];
    std::vector<std::string> patient_ids;
};

template <class T, class MA, class MB>
inline CrossEvalMatrix cross_eval(MA& model_a, MB& model_b, const std::vector<Study>& test_studies,
                                  const EvalConfig& cfg) {
    CrossEvalMatrix m;
    for (int row = 0; row < 2; ++row)
        for (int col = 0; col < 2; ++col) {
            const LabelSource gt = col == 0 ? LabelSource::A : LabelSource::B;
            PatientEvalResult r = row == 0 ? patient_level_eval<T>(model_a, test_studies, gt, cfg)
                                           : patient_level_eval<T>(model_b, test_studies, gt, cfg);
            m.cell[row][col].per_patient_dsc = [&] {
                std::vector<double> v;
                for (const auto& pm : r.per_patient) v.push_back(pm.dsc);
                return v;
            }();
            m.cell[row][col].summary = mean_sd(m.cell[row][col].per_patient_dsc, "dsc");
            if (row == 0 && col == 0)
                for (const auto& pm : r.per_patient) m.patient_ids.push_back(pm.patient_id);
        }
    return m;
}

}  // namespace omseg
