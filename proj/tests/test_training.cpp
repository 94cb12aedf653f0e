#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "omseg/phantom.hpp"
#include "omseg/train.hpp"
#include "support.hpp"

using namespace omseg;

namespace {

Tensor<double> tensor_filled(const std::vector<int>& shape, double value) {
    Tensor<double> t(shape);
    for (auto& v : t.values) v = value;
    return t;
}

Tensor<double> tensor_from(const std::vector<int>& shape, const std::vector<double>& values) {
    Tensor<double> t(shape);
    t.values = values;
    return t;
}

Parameter<double> scalar_param(double value, double grad) {
    Parameter<double> p;
    p.tensor = Tensor<double>({1});
    p.tensor.values[0] = value;
    p.tensor.alloc_grad();
    p.tensor.grad[0] = grad;
    return p;
}

// Dense random slices with binary masks; enough structure for the optimizer
// to have gradients everywhere, deterministic in the seed.
SliceSample trace_sample(std::uint64_t seed, int z, const std::string& pid) {
    SliceSample s;
    s.image = DualChannelImage(8, 8);
    s.mask = Mask2D(8, 8);
    s.patient_id = pid;
    s.z = z;
    s.label_source = SliceSource::A;
    Rng rng(seed);
    for (auto& v : s.image.data) v = static_cast<float>(rng.uniform01());
    for (auto& v : s.mask.data) v = rng.bernoulli(0.35) ? 1 : 0;
    return s;
}

std::vector<SliceSample> trace_set(std::uint64_t base, int count, const std::string& pid) {
    std::vector<SliceSample> out;
    for (int i = 0; i < count; ++i)
        out.push_back(trace_sample(base + static_cast<std::uint64_t>(i), i, pid));
    return out;
}

TrainConfig trace_config() {
    TrainConfig tc;
    tc.model = UNetConfig{2, 1, 1, 2, 8};
    tc.schedule = ScheduleConfig{1e-4, 2, 0.0};
    tc.augment.enabled = false;
    tc.batch_size = 8;
    tc.patience = 10;
    tc.shuffle_seed = 77;
    tc.modality = ModalityMode::Dual;
    return tc;
}

std::vector<std::vector<double>> trainable_values(const UNet<double>& model) {
    std::vector<std::vector<double>> out;
    for (const Parameter<double>* p : model.trainable_parameters()) out.push_back(p->tensor.values);
    return out;
}

std::vector<std::vector<double>> all_values(const UNet<double>& model) {
    std::vector<std::vector<double>> out;
    for (const Parameter<double>* p : model.parameters()) out.push_back(p->tensor.values);
    return out;
}

// Four tiny studies with one synthetic focus each; label A is a wider disk
// than label B on the same planes.
Study tiny_study(int idx, bool identical_labels) {
    const Dims3 dims{6, 16, 16};
    const double cy = 8.0 + (idx % 2 == 1 ? 1.0 : -1.0);
    const double cx = 8.0 + (idx >= 2 ? 1.0 : -1.0);
    const auto radial = [&](int j, int i) {
        return std::sqrt((j - cy) * (j - cy) + (i - cx) * (i - cx));
    };
    const auto lesion_plane = [](int k) { return k >= 1 && k <= 4; };

    Study s;
    s.patient_id = "P00" + std::to_string(idx);
    s.ct = testsup::make_volume(dims, Modality::CT, [&](int k, int j, int i) {
        const double r = radial(j, i);
        if (lesion_plane(k) && r <= 2.0) return 270.0;
        if (r > 3.0 && r <= 5.0) return 1200.0;
        return 40.0;
    });
    s.pet = testsup::make_volume(dims, Modality::PET, [&](int k, int j, int i) {
        const double r = radial(j, i);
        const double dz = k - 2.5;
        return 0.2 + 3.5 * std::exp(-(r * r + dz * dz) / 12.5);
    });
    const double b_radius = 2.0;
    const double a_radius = identical_labels ? b_radius : 3.5;
    s.label_a = testsup::make_mask(dims, LabelSource::A, [&](int k, int j, int i) {
        return lesion_plane(k) && radial(j, i) <= a_radius;
    });
    s.label_b = testsup::make_mask(dims, LabelSource::B, [&](int k, int j, int i) {
        return lesion_plane(k) && radial(j, i) <= b_radius;
    });
    return s;
}

std::vector<Study> tiny_cohort(bool identical_labels, bool swap_labels) {
    std::vector<Study> out;
    for (int idx = 0; idx < 4; ++idx) {
        Study s = tiny_study(idx, identical_labels);
        if (swap_labels) {
            MaskVolume swapped_a(s.label_b.geom, LabelSource::A);
            swapped_a.voxels = s.label_b.voxels;
            MaskVolume swapped_b(s.label_a.geom, LabelSource::B);
            swapped_b.voxels = s.label_a.voxels;
            s.label_a = std::move(swapped_a);
            s.label_b = std::move(swapped_b);
        }
        out.push_back(std::move(s));
    }
    return out;
}

SplitAssignment tiny_split() {
    SplitAssignment split;
    split.train = {"P000", "P001"};
    split.val = {"P002"};
    split.test = {"P003"};
    return split;
}

TrainConfig tiny_dual_config() {
    TrainConfig tc;
    tc.model = UNetConfig{2, 1, 1, 2, 16};
    tc.schedule = ScheduleConfig{1e-4, 2, 0.0};
    tc.augment.enabled = false;
    tc.batch_size = 4;
    tc.patience = 10;
    tc.shuffle_seed = 9;
    tc.modality = ModalityMode::Dual;
    return tc;
}

DatasetBuildConfig tiny_data_config() {
    DatasetBuildConfig dc;
    dc.input_size = 16;
    return dc;
}

}  // namespace

TEST(DiceLoss, PerfectOverlapIsExactlyZero) {
    const Tensor<double> ones = tensor_filled({1, 1, 2, 2}, 1.0);
    EXPECT_EQ(dice_loss(ones, ones), 0.0);
}

TEST(DiceLoss, TotalMissApproachesOne) {
    const Tensor<double> pred = tensor_filled({1, 1, 2, 2}, 1.0);
    const Tensor<double> gt = tensor_filled({1, 1, 2, 2}, 0.0);
    EXPECT_DOUBLE_EQ(dice_loss(pred, gt), 1.0 - 1e-6 / (4.0 + 1e-6));
}

TEST(DiceLoss, UniformHalfAgainstOnesIsOneThird) {
    const Tensor<double> pred = tensor_filled({1, 1, 2, 2}, 0.5);
    const Tensor<double> gt = tensor_filled({1, 1, 2, 2}, 1.0);
    EXPECT_NEAR(dice_loss(pred, gt), 1.0 / 3.0, 1e-6);
}

TEST(DiceLoss, StaysInsideTheUnitInterval) {
    Rng rng(515);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor<double> pred({2, 1, 3, 3});
        testsup::fill_uniform(pred, rng, 0.0, 1.0);
        Tensor<double> gt({2, 1, 3, 3});
        for (auto& v : gt.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double d = dice_loss(pred, gt);
        EXPECT_GE(d, 0.0);
        EXPECT_LT(d, 1.0);
    }
}

TEST(DiceLoss, RejectsBadOperands) {
    const Tensor<double> pred = tensor_filled({1, 1, 2, 2}, 0.5);
    const Tensor<double> small = tensor_filled({1, 1, 2, 1}, 1.0);
    EXPECT_THROW(dice_loss(pred, small), ShapeError);

    const Tensor<double> hot = tensor_filled({1, 1, 2, 2}, 1.5);
    const Tensor<double> gt = tensor_filled({1, 1, 2, 2}, 1.0);
    EXPECT_THROW(dice_loss(hot, gt), InvalidArgumentError);

    const Tensor<double> soft_gt = tensor_filled({1, 1, 2, 2}, 0.5);
    EXPECT_THROW(dice_loss(pred, soft_gt), InvalidArgumentError);
}

TEST(BceLoss, HalfConfidenceOnAPositiveIsLnTwo) {
    const Tensor<double> pred = tensor_filled({1, 1, 1, 1}, 0.5);
    const Tensor<double> gt = tensor_filled({1, 1, 1, 1}, 1.0);
    EXPECT_DOUBLE_EQ(bce_loss(pred, gt), std::log(2.0));
}

TEST(BceLoss, MixedPairAveragesThePixelTerms) {
    const Tensor<double> pred = tensor_from({1, 1, 1, 2}, {0.9, 0.1});
    const Tensor<double> gt = tensor_from({1, 1, 1, 2}, {1.0, 0.0});
    EXPECT_DOUBLE_EQ(bce_loss(pred, gt), -std::log(0.9));
    EXPECT_NEAR(bce_loss(pred, gt), 0.105361, 1e-6);
}

TEST(BceLoss, ClampKeepsCertainPredictionsFinite) {
    const Tensor<double> sure = tensor_filled({1, 1, 1, 1}, 1.0);
    const Tensor<double> pos = tensor_filled({1, 1, 1, 1}, 1.0);
    EXPECT_DOUBLE_EQ(bce_loss(sure, pos), -std::log(1.0 - 1e-7));

    const Tensor<double> zero = tensor_filled({1, 1, 1, 1}, 0.0);
    const Tensor<double> neg = tensor_filled({1, 1, 1, 1}, 0.0);
    EXPECT_DOUBLE_EQ(bce_loss(zero, neg), -std::log(1.0 - 1e-7));

    const Tensor<double> wrong = tensor_filled({1, 1, 1, 1}, 0.0);
    const double loss = bce_loss(wrong, pos);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_DOUBLE_EQ(loss, -std::log(1e-7));
}

TEST(BceLoss, ClampBandHasZeroGradient) {
    const Tensor<double> pred = tensor_from({1, 1, 1, 3}, {1.0, 0.0, 0.5});
    const Tensor<double> gt = tensor_from({1, 1, 1, 3}, {1.0, 0.0, 1.0});
    const LossResult<double> res = bce_loss_with_grad(pred, gt);
    EXPECT_EQ(res.grad.values[0], 0.0);
    EXPECT_EQ(res.grad.values[1], 0.0);
    EXPECT_NE(res.grad.values[2], 0.0);
}

TEST(HybridLoss, EndpointsMatchTheComponents) {
    Rng rng(616);
    Tensor<double> pred({1, 1, 3, 3});
    testsup::fill_uniform(pred, rng, 0.05, 0.95);
    Tensor<double> gt({1, 1, 3, 3});
    for (auto& v : gt.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

    LossConfig all_dice;
    all_dice.lambda = 1.0;
    EXPECT_DOUBLE_EQ(hybrid_loss(pred, gt, all_dice), dice_loss(pred, gt));

    LossConfig all_bce;
    all_bce.lambda = 0.0;
    EXPECT_DOUBLE_EQ(hybrid_loss(pred, gt, all_bce), bce_loss(pred, gt));
}

TEST(HybridLoss, EqualBlendMatchesTheHandComputedValue) {
    const Tensor<double> pred = tensor_filled({1, 1, 2, 2}, 0.5);
    const Tensor<double> gt = tensor_filled({1, 1, 2, 2}, 1.0);
    const LossConfig cfg;
    const double h = hybrid_loss(pred, gt, cfg);
    EXPECT_DOUBLE_EQ(h, 0.5 * dice_loss(pred, gt) + 0.5 * bce_loss(pred, gt));
    EXPECT_NEAR(h, 0.513240, 5e-7);
}

TEST(HybridLoss, PerfectPredictionBeatsTheInvertedOne) {
    Rng rng(717);
    Tensor<double> gt({1, 1, 4, 4});
    do {
        for (auto& v : gt.values) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    } while (std::count(gt.values.begin(), gt.values.end(), 1.0) == 0 ||
             std::count(gt.values.begin(), gt.values.end(), 0.0) == 0);
    Tensor<double> inverted = gt;
    for (auto& v : inverted.values) v = 1.0 - v;
    EXPECT_LT(hybrid_loss(gt, gt, LossConfig{}), hybrid_loss(inverted, gt, LossConfig{}));
}

TEST(HybridLoss, ConfigValidationRejectsBadFields) {
    LossConfig cfg;
    cfg.lambda = -0.1;
    EXPECT_THROW(cfg.validate(), InvalidArgumentError);
    cfg = LossConfig{};
    cfg.lambda = 1.1;
    EXPECT_THROW(cfg.validate(), InvalidArgumentError);
    cfg = LossConfig{};
    cfg.eps_dice = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidArgumentError);
    cfg = LossConfig{};
    cfg.bce_clamp = 0.5;
    EXPECT_THROW(cfg.validate(), InvalidArgumentError);
}

TEST(Adam, FirstStepMovesByAboutTheLearningRate) {
    Parameter<double> p = scalar_param(0.3, 0.1);
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState<double> state({&p}, cfg);
    adam_step({&p}, state, 1e-4);
    const double delta = 0.3 - p.tensor.values[0];
    EXPECT_NEAR(delta, 1e-4, 1e-10);
    EXPECT_EQ(state.t, 1);

    Parameter<double> q = scalar_param(0.3, -0.1);
    AdamState<double> qstate({&q}, cfg);
    adam_step({&q}, qstate, 1e-4);
    EXPECT_NEAR(q.tensor.values[0] - 0.3, 1e-4, 1e-10);
}

TEST(Adam, ZeroGradientWithoutDecayIsAnIdentityThatCountsSteps) {
    Parameter<double> p;
    p.tensor = Tensor<double>({5});
    Rng rng(42);
    testsup::fill_uniform(p.tensor, rng, -1.0, 1.0);
    const std::vector<double> before = p.tensor.values;
    p.tensor.alloc_grad();
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState<double> state({&p}, cfg);
    adam_step({&p}, state, 1e-2);
    adam_step({&p}, state, 1e-2);
    EXPECT_EQ(p.tensor.values, before);
    EXPECT_EQ(state.t, 2);
}

TEST(Adam, WeightDecayAloneShrinksTheParameter) {
    Parameter<double> p = scalar_param(1.0, 0.0);
    AdamState<double> state({&p}, AdamConfig{});
    adam_step({&p}, state, 1e-4);
    const double expected = 1e-4 * (1e-4 / (1e-4 + 1e-8));
    EXPECT_NEAR(1.0 - p.tensor.values[0], expected, 1e-12);
}

TEST(Adam, RejectsMismatchedStateAndMissingGradients) {
    Parameter<double> p = scalar_param(0.0, 0.0);
    Parameter<double> q = scalar_param(0.0, 0.0);
    AdamState<double> state({&p}, AdamConfig{});
    EXPECT_THROW(adam_step({&p, &q}, state, 1e-4), ShapeError);

    Parameter<double> bare;
    bare.tensor = Tensor<double>({1});
    AdamState<double> bstate({&bare}, AdamConfig{});
    EXPECT_THROW(adam_step({&bare}, bstate, 1e-4), StateError);

    AdamConfig bad;
    bad.beta1 = 1.0;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
    bad = AdamConfig{};
    bad.eps = 0.0;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
    bad = AdamConfig{};
    bad.weight_decay = -1e-6;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
}

TEST(CosineSchedule, EndpointsAndMidpointMatchTheClosedForm) {
    const ScheduleConfig cfg{1e-4, 20, 0.0};
    EXPECT_DOUBLE_EQ(cosine_lr(0, cfg), 1e-4);
    EXPECT_NEAR(cosine_lr(10, cfg), 5e-5, 1e-15);
    EXPECT_NEAR(cosine_lr(20, cfg), 0.0, 1e-18);

    const ScheduleConfig floored{1e-4, 20, 1e-5};
    EXPECT_DOUBLE_EQ(cosine_lr(0, floored), 1e-4);
    EXPECT_NEAR(cosine_lr(20, floored), 1e-5, 1e-15);

    double prev = cosine_lr(0, cfg);
    for (int t = 1; t <= 20; ++t) {
        const double lr = cosine_lr(t, cfg);
        EXPECT_LE(lr, prev);
        prev = lr;
    }
}

TEST(CosineSchedule, RejectsEpochsOutsideTheWindowAndBadConfigs) {
    const ScheduleConfig cfg{1e-4, 20, 0.0};
    EXPECT_THROW(cosine_lr(-1, cfg), InvalidArgumentError);
    EXPECT_THROW(cosine_lr(21, cfg), InvalidArgumentError);

    ScheduleConfig bad = cfg;
    bad.t_max = 0;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
    bad = cfg;
    bad.lr0 = -1e-4;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
    bad = cfg;
    bad.eta_min = -1e-9;
    EXPECT_THROW(bad.validate(), InvalidArgumentError);
}

TEST(EarlyStop, ImprovementKeepsTraining) {
    EarlyStopState s;
    EXPECT_FALSE(s.update(1.0));
    EXPECT_FALSE(s.update(0.9));
    EXPECT_FALSE(s.update(0.8));
    EXPECT_EQ(s.since_improvement, 0);
    EXPECT_DOUBLE_EQ(s.best, 0.8);
}

TEST(EarlyStop, TenStalledEpochsTriggerTheStop) {
    EarlyStopState s;
    EXPECT_FALSE(s.update(1.0));
    for (int i = 0; i < 9; ++i) EXPECT_FALSE(s.update(1.0)) << "stall " << i;
    EXPECT_TRUE(s.update(1.0));
    EXPECT_EQ(s.since_improvement, 10);
    EXPECT_TRUE(s.stopped);
}

TEST(EarlyStop, ARecoveryAfterTheStopIsNeverSeen) {
    EarlyStopState s;
    s.update(1.0);
    for (int i = 0; i < 10; ++i) s.update(1.0);
    ASSERT_TRUE(s.stopped);
    EXPECT_THROW(s.update(0.5), StateError);
    EXPECT_DOUBLE_EQ(s.best, 1.0);
}

TEST(EarlyStop, EqualLossCountsAsAStall) {
    EarlyStopState s;
    s.patience = 2;
    EXPECT_FALSE(s.update(0.7));
    EXPECT_FALSE(s.update(0.7));
    EXPECT_TRUE(s.update(0.7));
}

TEST(EarlyStop, RejectsNonFiniteLosses) {
    EarlyStopState s;
    EXPECT_THROW(s.update(std::nan("")), InvalidArgumentError);
    EXPECT_THROW(s.update(std::numeric_limits<double>::infinity()), InvalidArgumentError);
}

TEST(TrainModel, TwoEpochTraceIsFrozen) {
    const TrainConfig tc = trace_config();
    const auto out =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    ASSERT_EQ(out.report.rows.size(), 2u);
    EXPECT_EQ(out.report.rows[0].train_loss, 0x1.52a59fc79a284p-1);
    EXPECT_EQ(out.report.rows[0].val_loss, 0x1.67742ba07c2c4p-1);
    EXPECT_EQ(out.report.rows[0].lr, 0x1.a36e2eb1c432dp-14);
    EXPECT_EQ(out.report.rows[1].train_loss, 0x1.5278b96efc7a7p-1);
    EXPECT_EQ(out.report.rows[1].val_loss, 0x1.652bf6242fe8fp-1);
    EXPECT_EQ(out.report.rows[1].lr, 0x1.a36e2eb1c432dp-15);
    EXPECT_EQ(out.report.best_epoch, 1);
    EXPECT_EQ(out.report.stopped_epoch, 1);
    EXPECT_EQ(out.report.best_val_loss, 0x1.652bf6242fe8fp-1);
}

TEST(TrainModel, RepeatedRunsAreBitIdentical) {
    const TrainConfig tc = trace_config();
    const auto first =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    const auto second =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    ASSERT_EQ(first.report.rows.size(), second.report.rows.size());
    for (std::size_t i = 0; i < first.report.rows.size(); ++i) {
        EXPECT_EQ(first.report.rows[i].train_loss, second.report.rows[i].train_loss);
        EXPECT_EQ(first.report.rows[i].val_loss, second.report.rows[i].val_loss);
    }
    EXPECT_EQ(all_values(*first.model), all_values(*second.model));
}

TEST(TrainModel, ReportStructureIsConsistent) {
    const TrainConfig tc = trace_config();
    const auto out =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    const TrainReport& r = out.report;
    ASSERT_FALSE(r.rows.empty());
    ASSERT_LE(r.rows.size(), static_cast<std::size_t>(tc.schedule.t_max));
    double min_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        EXPECT_EQ(r.rows[i].epoch, static_cast<int>(i));
        EXPECT_DOUBLE_EQ(r.rows[i].lr, cosine_lr(static_cast<int>(i), tc.schedule));
        min_val = std::min(min_val, r.rows[i].val_loss);
    }
    EXPECT_EQ(r.best_val_loss, min_val);
    EXPECT_EQ(r.rows[static_cast<std::size_t>(r.best_epoch)].val_loss, min_val);
    EXPECT_EQ(r.stopped_epoch, r.rows.back().epoch);
    EXPECT_GE(r.wall_seconds, 0.0);
}

TEST(TrainModel, ZeroLearningRateLeavesParametersAtInitialization) {
    TrainConfig tc = trace_config();
    tc.schedule = ScheduleConfig{0.0, 20, 0.0};
    const auto out =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    for (const auto& row : out.report.rows) EXPECT_EQ(row.lr, 0.0);

    UNet<double> fresh(tc.model);
    fresh.init_parameters(4242);
    EXPECT_EQ(trainable_values(*out.model), trainable_values(fresh));
}

TEST(TrainModel, AugmentedTrainingIsDeterministic) {
    TrainConfig tc = trace_config();
    tc.augment.enabled = true;
    const auto first =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    const auto second =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    ASSERT_EQ(first.report.rows.size(), second.report.rows.size());
    for (std::size_t i = 0; i < first.report.rows.size(); ++i)
        EXPECT_EQ(first.report.rows[i].train_loss, second.report.rows[i].train_loss);
    EXPECT_EQ(all_values(*first.model), all_values(*second.model));

    TrainConfig plain = trace_config();
    const auto unaugmented =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, plain);
    EXPECT_NE(first.report.rows[0].train_loss, unaugmented.report.rows[0].train_loss);
}

TEST(TrainModel, FinishedModelIsInEvalModeAndHoldsTheBestSnapshot) {
    const TrainConfig tc = trace_config();
    const auto out =
        train_model<double>(trace_set(100, 4, "T0"), trace_set(200, 2, "V0"), 4242, tc);
    EXPECT_EQ(out.model->mode(), Mode::Eval);

    std::vector<const SliceSample*> chunk;
    const auto val = trace_set(200, 2, "V0");
    for (const auto& s : val) chunk.push_back(&s);
    Tensor<double> prob = out.model->forward(assemble_batch<double>(chunk, tc.modality));
    const double loss = hybrid_loss(prob, assemble_masks<double>(chunk), tc.loss);
    EXPECT_DOUBLE_EQ(loss, out.report.best_val_loss);
}

TEST(TrainModel, ValidatesSampleSetsAndConfig) {
    const TrainConfig tc = trace_config();
    const auto train = trace_set(100, 4, "T0");
    const auto val = trace_set(200, 2, "V0");

    EXPECT_THROW(train_model<double>({}, val, 1, tc), InvalidArgumentError);
    EXPECT_THROW(train_model<double>(train, {}, 1, tc), InvalidArgumentError);

    auto mixed = train;
    mixed[1].label_source = SliceSource::B;
    EXPECT_THROW(train_model<double>(mixed, val, 1, tc), InvalidArgumentError);

    TrainConfig wrong_hw = tc;
    wrong_hw.model.input_hw = 16;
    EXPECT_THROW(train_model<double>(train, val, 1, wrong_hw), ShapeError);

    TrainConfig bad_batch = tc;
    bad_batch.batch_size = 0;
    EXPECT_THROW(train_model<double>(train, val, 1, bad_batch), ConfigError);

    TrainConfig bad_modality = tc;
    bad_modality.modality = ModalityMode::CtOnly;
    EXPECT_THROW(train_model<double>(train, val, 1, bad_modality), ConfigError);
}

TEST(TrainDual, IdenticalAnnotationsYieldBitIdenticalModels) {
    const auto studies = tiny_cohort(true, false);
    const auto out =
        train_dual<double>(studies, tiny_split(), tiny_data_config(), tiny_dual_config(), 3131);
    EXPECT_EQ(all_values(*out.model_a), all_values(*out.model_b));
    ASSERT_EQ(out.report_a.rows.size(), out.report_b.rows.size());
    for (std::size_t i = 0; i < out.report_a.rows.size(); ++i) {
        EXPECT_EQ(out.report_a.rows[i].train_loss, out.report_b.rows[i].train_loss);
        EXPECT_EQ(out.report_a.rows[i].val_loss, out.report_b.rows[i].val_loss);
    }
}

TEST(TrainDual, SwappingTheAnnotationsSwapsTheModels) {
    const auto straight = tiny_cohort(false, false);
    const auto swapped = tiny_cohort(false, true);
    const auto first =
        train_dual<double>(straight, tiny_split(), tiny_data_config(), tiny_dual_config(), 3131);
    const auto second =
        train_dual<double>(swapped, tiny_split(), tiny_data_config(), tiny_dual_config(), 3131);
    EXPECT_EQ(all_values(*first.model_a), all_values(*second.model_b));
    EXPECT_EQ(all_values(*first.model_b), all_values(*second.model_a));
}

TEST(TrainDual, DistinctAnnotationsProduceDistinctModels) {
    const auto studies = tiny_cohort(false, false);
    const auto out =
        train_dual<double>(studies, tiny_split(), tiny_data_config(), tiny_dual_config(), 3131);
    EXPECT_NE(all_values(*out.model_a), all_values(*out.model_b));
}

TEST(TrainDual, RejectsSplitsThatReferenceUnknownPatients) {
    const auto studies = tiny_cohort(false, false);
    SplitAssignment split = tiny_split();
    split.train = {"P000", "P999"};
    EXPECT_THROW(train_dual<double>(studies, split, DatasetBuildConfig{}, tiny_dual_config(), 1),
                 InvalidArgumentError);

    SplitAssignment overlapping = tiny_split();
    overlapping.val = {"P000"};
    EXPECT_THROW(
        train_dual<double>(studies, overlapping, DatasetBuildConfig{}, tiny_dual_config(), 1),
        InvalidArgumentError);
}

TEST(TrainModel, TinyCohortTrainLossDropsByHalf) {
    PhantomConfig pc;
    pc.n_patients = 3;
    pc.dims = {28, 64, 64};
    pc.seed = 31000;
    pc.lesions_min = pc.lesions_max = 1;
    pc.misalignment_vox = {2, 2, 2};
    const auto cohort = generate_cohort(pc);

    std::vector<const Study*> train_p{&cohort[0].study, &cohort[1].study};
    std::vector<const Study*> val_p{&cohort[2].study};
    const DatasetBuildConfig data_cfg;
    const auto train_s = build_slice_dataset(train_p, LabelSource::A, data_cfg);
    const auto val_s = build_slice_dataset(val_p, LabelSource::A, data_cfg);
    ASSERT_GE(train_s.size(), 8u);

    TrainConfig tc;
    tc.model = UNetConfig{2, 1, 2, 8, 64};
    tc.schedule = ScheduleConfig{1e-3, 20, 0.0};
    tc.augment.enabled = false;
    tc.batch_size = 2;
    tc.patience = 20;
    tc.shuffle_seed = 5150;
    tc.modality = ModalityMode::Dual;

    const auto out = train_model<double>(train_s, val_s, 8800, tc);
    ASSERT_FALSE(out.report.rows.empty());
    const double first = out.report.rows.front().train_loss;
    const double last = out.report.rows.back().train_loss;
    EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
}
