#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "omseg/dataset.hpp"
#include "omseg/errors.hpp"
#include "omseg/evaluate.hpp"
#include "omseg/image.hpp"
#include "omseg/loss.hpp"
#include "omseg/optim.hpp"
#include "omseg/preprocess.hpp"
#include "omseg/rng.hpp"
#include "omseg/unet.hpp"
#include "omseg/volume.hpp"

namespace omseg {

struct TrainConfig {
    UNetConfig model;
    LossConfig loss;
    AdamConfig adam;
    ScheduleConfig schedule;
    AugmentationConfig augment;
    int batch_size = 8;
    int patience = 10;
    std::uint64_t shuffle_seed = 0;
    ModalityMode modality = ModalityMode::Dual;

    void validate() const {
        model.validate();
        loss.validate();
        adam.validate();
        schedule.validate();
        augment.validate();
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (model.in_channels != channel_count(modality))
            throw ConfigError("model in_channels disagrees with the modality mode");
    }
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    int stopped_epoch = -1;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double wall_seconds = 0.0;
};

template <class T>
struct TrainOutcome {
    std::unique_ptr<UNet<T>> model;
    TrainReport report;
};

struct DatasetBuildConfig {
    WindowSpec window;
    double norm_eps = 1e-8;
    int input_size = 64;
};

// Preprocess -> slice by the requested mask source -> drop union-background
// slices -> resize. The kept slice set is a function of the images alone, so
// the A and B datasets cover identical (patient, z) pairs.
inline std::vector<SliceSample> build_slice_dataset(const std::vector<const Study*>& studies,
                                                    LabelSource source,
                                                    const DatasetBuildConfig& cfg) {
    if (source == LabelSource::Pred)
        throw InvalidArgumentError("slice dataset needs mask source A or B");
    const SliceSource slice_source =
        source == LabelSource::A ? SliceSource::A : SliceSource::B;
    std::vector<SliceSample> out;
    for (const Study* study : studies) {
        const Study processed = preprocess_study(*study, cfg.window, cfg.norm_eps);
        const std::vector<SliceSample> labeled = slice_axial(processed, slice_source);
        const std::vector<SliceSample> uni = slice_axial(processed, SliceSource::Union);
        for (const SliceSample& kept : filter_background(labeled, uni))
            out.push_back(resize(kept, cfg.input_size, cfg.input_size));
    }
    return out;
}

inline std::vector<const Study*> select_studies(const std::vector<Study>& studies,
                                                const std::vector<std::string>& patient_ids) {
    std::map<std::string, const Study*> by_id;
    for (const auto& s : studies) by_id[s.patient_id] = &s;
    std::vector<const Study*> out;
    for (const auto& id : patient_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw InvalidArgumentError("split references unknown patient " + id);
        out.push_back(it->second);
    }
    return out;
}

namespace detail {

template <class T>
inline std::vector<std::vector<T>> snapshot_parameters(const UNet<T>& model) {
    std::vector<std::vector<T>> snap;
    for (const Parameter<T>* p : model.parameters()) snap.push_back(p->tensor.values);
    return snap;
}

template <class T>
inline void restore_parameters(UNet<T>& model, const std::vector<std::vector<T>>& snap) {
    const auto& params = model.parameters();
    if (snap.size() != params.size()) throw ShapeError("snapshot entry count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != params[i]->tensor.values.size())
            throw ShapeError("snapshot entry size mismatch");
        params[i]->tensor.values = snap[i];
    }
}

inline void check_label_sources(const std::vector<SliceSample>& samples, const char* what) {
    if (samples.empty())
        throw InvalidArgumentError(std::string(what) + " sample set is empty");
    for (const auto& s : samples)
        if (s.label_source != samples.front().label_source)
            throw InvalidArgumentError(std::string(what) + " samples mix label sources");
}

template <class T>
inline double validation_loss(UNet<T>& model, const std::vector<SliceSample>& val,
                              const TrainConfig& cfg) {
    model.set_mode(Mode::Eval);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < val.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(val.size(), start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const SliceSample*> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&val[i]);
        Tensor<T> prob = model.forward(assemble_batch<T>(chunk, cfg.modality));
        const double loss = hybrid_loss(prob, assemble_masks<T>(chunk), cfg.loss);
        weighted += loss * static_cast<double>(chunk.size());
        seen += chunk.size();
    }
    return weighted / static_cast<double>(seen);
}

}  // namespace detail

template <class T>
inline TrainOutcome<T> train_model(const std::vector<SliceSample>& train_samples,
                                   const std::vector<SliceSample>& val_samples,
                                   std::uint64_t init_seed, const TrainConfig& cfg) {
    cfg.validate();
    detail::check_label_sources(train_samples, "training");
    detail::check_label_sources(val_samples, "validation");
    for (const auto* set : {&train_samples, &val_samples})
        for (const auto& s : *set)
            if (s.image.h != cfg.model.input_hw || s.image.w != cfg.model.input_hw)
                throw ShapeError("sample dims disagree with the model input size");

    const auto t0 = std::chrono::steady_clock::now();
    TrainOutcome<T> out;
    out.model = std::make_unique<UNet<T>>(cfg.model);
    out.model->init_parameters(init_seed);
    UNet<T>& model = *out.model;

    AdamState<T> opt(model.trainable_parameters(), cfg.adam);
    std::vector<std::vector<T>> best_snapshot = detail::snapshot_parameters(model);
    double best_val = std::numeric_limits<double>::infinity();
    EarlyStopState stopper;
    stopper.patience = cfg.patience;
    TrainReport& report = out.report;

    for (int epoch = 0; epoch < cfg.schedule.t_max; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.schedule);
        model.set_mode(Mode::Train);
        double weighted = 0.0;
        std::size_t seen = 0;
        for (const std::vector<std::size_t>& batch :
             batch_indices(train_samples.size(), cfg.batch_size, cfg.shuffle_seed, epoch)) {
            std::vector<SliceSample> prepared;
            prepared.reserve(batch.size());
            for (std::size_t idx : batch) {
                if (cfg.augment.enabled) {
                    Rng rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(idx)));
                    prepared.push_back(augment(train_samples[idx], cfg.augment, rng));
                } else {
                    prepared.push_back(train_samples[idx]);
                }
            }
            std::vector<const SliceSample*> ptrs;
            for (const auto& s : prepared) ptrs.push_back(&s);
            Tensor<T> prob = model.forward(assemble_batch<T>(ptrs, cfg.modality));
            LossResult<T> res =
                hybrid_loss_with_grad(prob, assemble_masks<T>(ptrs), cfg.loss);
            if (!std::isfinite(res.value))
                throw TrainingDivergedError("non-finite training loss at epoch " +
                                            std::to_string(epoch));
            model.zero_grad();
            model.backward(res.grad);
            adam_step(model.trainable_parameters(), opt, lr);
            weighted += res.value * static_cast<double>(batch.size());
            seen += batch.size();
        }
        const double train_loss = weighted / static_cast<double>(seen);
        const double val_loss = detail::validation_loss(model, val_samples, cfg);
        if (!std::isfinite(val_loss))
            throw TrainingDivergedError("non-finite validation loss at epoch " +
                                        std::to_string(epoch));
        report.rows.push_back({epoch, train_loss, val_loss, lr});
        if (val_loss < best_val) {
            best_val = val_loss;
            report.best_epoch = epoch;
            best_snapshot = detail::snapshot_parameters(model);
        }
        report.stopped_epoch = epoch;
        if (stopper.update(val_loss)) break;
    }

    detail::restore_parameters(model, best_snapshot);
    model.set_mode(Mode::Eval);
    report.best_val_loss = best_val;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

template <class T>
struct DualTrainResult {
    std::unique_ptr<UNet<T>> model_a;
    std::unique_ptr<UNet<T>> model_b;
    TrainReport report_a;
    TrainReport report_b;
};

// Two fully independent optimizations over the identical image inventory; the
// runs share nothing but hyperparameters and the initialization seed.
template <class T>
inline DualTrainResult<T> train_dual(const std::vector<Study>& studies,
                                     const SplitAssignment& split,
                                     const DatasetBuildConfig& data_cfg,
                                     const TrainConfig& cfg, std::uint64_t init_seed) {
    split.validate();
    const std::vector<const Study*> train_set = select_studies(studies, split.train);
    const std::vector<const Study*> val_set = select_studies(studies, split.val);

    DualTrainResult<T> out;
    {
        TrainOutcome<T> a = train_model<T>(build_slice_dataset(train_set, LabelSource::A, data_cfg),
                                           build_slice_dataset(val_set, LabelSource::A, data_cfg),
                                           init_seed, cfg);
        out.model_a = std::move(a.model);
        out.report_a = std::move(a.report);
    }
    {
        TrainOutcome<T> b = train_model<T>(build_slice_dataset(train_set, LabelSource::B, data_cfg),
                                           build_slice_dataset(val_set, LabelSource::B, data_cfg),
                                           init_seed, cfg);
        out.model_b = std::move(b.model);
        out.report_b = std::move(b.report);
    }
    return out;
}

}  // namespace omseg
