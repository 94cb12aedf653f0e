#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "omseg/phantom.hpp"
#include "omseg/preprocess.hpp"
#include "support.hpp"

using namespace omseg;

namespace {

Study normalized_study(Dims3 d) {
    Study s;
    s.patient_id = "N001";
    s.ct = testsup::make_volume(d, Modality::CT, [](int k, int j, int i) {
        return 0.01 * ((k * 31 + j * 7 + i * 3) % 97);
    });
    s.pet = testsup::make_volume(d, Modality::PET, [](int k, int j, int i) {
        return 0.01 * ((k * 13 + j * 5 + i * 11) % 89);
    });
    s.label_a = testsup::make_mask(d, LabelSource::A, [d](int k, int j, int i) {
        return k >= d.z / 2 && j < 2 && i < 3;
    });
    s.label_b = testsup::make_mask(d, LabelSource::B,
                                   [d](int k, int j, int i) { return k >= d.z / 2 && j < 1 && i < 2; });
    return s;
}

}  // namespace

TEST(Window, ClampExamples) {
    const WindowSpec spec;
    EXPECT_EQ(spec.lo(), -400.0);
    EXPECT_EQ(spec.hi(), 1100.0);
    const double in[] = {-1000.0, -400.0, 350.0, 1100.0, 3000.0};
    const double want[] = {-400.0, -400.0, 350.0, 1100.0, 1100.0};
    for (int i = 0; i < 5; ++i) EXPECT_EQ(window_value(in[i], spec), want[i]);
}

TEST(Window, IdempotentAndMonotone) {
    const WindowSpec spec;
    Rng rng(77);
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(rng.uniform(-2000.0, 4000.0));
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double once = window_value(xs[i], spec);
        EXPECT_EQ(window_value(once, spec), once);
        if (i > 0) {
            EXPECT_LE(window_value(xs[i - 1], spec), once);
        }
    }

    Volume v = testsup::make_volume({2, 3, 3}, Modality::CT,
                                    [](int k, int j, int i) { return -900.0 + 450.0 * (k + j + i); });
    const Volume once = window_ct(v, spec);
    const Volume twice = window_ct(once, spec);
    EXPECT_EQ(once.voxels, twice.voxels);
}

TEST(Window, RejectsNonCtAndBadWidth) {
    Volume pet = testsup::make_volume({1, 2, 2}, Modality::PET, [](int, int, int) { return 1.0; });
    EXPECT_THROW(window_ct(pet), InvalidArgumentError);
    EXPECT_THROW((WindowSpec{0.0, 350.0}.validate()), InvalidArgumentError);
    EXPECT_THROW((WindowSpec{-10.0, 0.0}.validate()), InvalidArgumentError);
}

TEST(Normalize, EndpointExamples) {
    const double eps = 1e-8;
    const auto out = min_max_normalize(std::vector<double>{-400.0, 350.0, 1100.0}, eps);
    EXPECT_EQ(out[0], 0.0);
    EXPECT_NEAR(out[1], 750.0 / (1500.0 + eps), 1e-9);
    EXPECT_NEAR(out[2], 1500.0 / (1500.0 + eps), 1e-9);
}

TEST(Normalize, ConstantMapsToZero) {
    const auto out = min_max_normalize(std::vector<double>{5.0, 5.0, 5.0});
    for (double x : out) EXPECT_EQ(x, 0.0);

    Volume v = testsup::make_volume({2, 2, 2}, Modality::CT, [](int, int, int) { return 5.0; });
    for (float x : min_max_normalize(v).voxels) EXPECT_EQ(x, 0.0f);
}

TEST(Normalize, UnitPairEpsExample) {
    const auto out = min_max_normalize(std::vector<double>{0.0, 1.0}, 1e-8);
    EXPECT_EQ(out[0], 0.0);
    EXPECT_DOUBLE_EQ(out[1], 1.0 / (1.0 + 1e-8));
}

TEST(Normalize, RangeAndMinZeroProperty) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs;
        for (int i = 0; i < 50; ++i) xs.push_back(rng.uniform(-1e3, 1e3));
        const auto out = min_max_normalize(xs);
        const auto min_at =
            static_cast<std::size_t>(std::min_element(xs.begin(), xs.end()) - xs.begin());
        EXPECT_EQ(out[min_at], 0.0);
        for (double x : out) {
            EXPECT_GE(x, 0.0);
            EXPECT_LT(x, 1.0);
        }
    }
}

TEST(Normalize, VolumeUsesGlobalExtrema) {
    // Slice 0 spans [0,10], slice 1 spans [20,40]: per-volume scaling leaves
    // slice 1's minimum far from zero.
    Volume v = testsup::make_volume({2, 1, 2}, Modality::PET, [](int k, int, int i) {
        return k == 0 ? (i == 0 ? 0.0 : 10.0) : (i == 0 ? 20.0 : 40.0);
    });
    const Volume out = min_max_normalize(v);
    EXPECT_EQ(out.at(0, 0, 0), 0.0f);
    EXPECT_NEAR(out.at(0, 0, 1), 0.25, 1e-6);
    EXPECT_NEAR(out.at(1, 0, 0), 0.5, 1e-6);
    EXPECT_NEAR(out.at(1, 0, 1), 1.0, 1e-6);
}

TEST(Preprocess, StudyWindowsCtOnly) {
    const Dims3 d{2, 2, 2};
    Study s;
    s.patient_id = "P1";
    s.ct = testsup::make_volume(d, Modality::CT, [](int k, int j, int i) {
        return k == 0 && j == 0 && i == 0 ? -1000.0 : (k == 1 && j == 1 && i == 1 ? 3000.0 : 100.0);
    });
    s.pet = testsup::make_volume(d, Modality::PET,
                                 [](int k, int j, int i) { return 1.0 * (4 * k + 2 * j + i); });
    s.label_a = testsup::make_mask(d, LabelSource::A, [](int, int, int) { return false; });
    s.label_b = testsup::make_mask(d, LabelSource::B, [](int, int, int) { return false; });

    const Study out = preprocess_study(s);
    // CT range after windowing is [-400, 1100]; 100 HU sits at 500/1500 of it.
    EXPECT_EQ(out.ct.at(0, 0, 0), 0.0f);
    EXPECT_NEAR(out.ct.at(1, 1, 1), 1.0, 1e-6);
    EXPECT_NEAR(out.ct.at(0, 1, 0), 500.0 / 1500.0, 1e-6);
    // PET keeps its own scale: min 0 -> 0, max 7 -> ~1, value 3 -> 3/7.
    EXPECT_EQ(out.pet.at(0, 0, 0), 0.0f);
    EXPECT_NEAR(out.pet.at(1, 1, 1), 1.0, 1e-6);
    EXPECT_NEAR(out.pet.at(0, 1, 1), 3.0 / 7.0, 1e-6);
}

TEST(Slice, CountOrderAndChannelIdentity) {
    const Dims3 d{32, 4, 5};
    const Study s = normalized_study(d);
    const auto samples = slice_axial(s, SliceSource::A);
    ASSERT_EQ(samples.size(), 32u);
    for (int k = 0; k < d.z; ++k) {
        EXPECT_EQ(samples[k].z, k);
        EXPECT_EQ(samples[k].patient_id, "N001");
        EXPECT_EQ(samples[k].label_source, SliceSource::A);
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                EXPECT_EQ(samples[k].image.at(0, j, i), s.ct.at(k, j, i));
                EXPECT_EQ(samples[k].image.at(1, j, i), s.pet.at(k, j, i));
                EXPECT_EQ(samples[k].mask.at(j, i), s.label_a.at(k, j, i));
            }
    }
}

TEST(Slice, SourceSelectsMask) {
    const Dims3 d{1, 2, 2};
    Study s = normalized_study(d);
    // (0,0) only A, (0,1) only B, (1,0) both, (1,1) neither.
    s.label_a.voxels = {1, 0, 1, 0};
    s.label_b.voxels = {0, 1, 1, 0};
    const auto a = slice_axial(s, SliceSource::A);
    const auto b = slice_axial(s, SliceSource::B);
    const auto u = slice_axial(s, SliceSource::Union);
    EXPECT_EQ(a[0].mask.data, (std::vector<std::uint8_t>{1, 0, 1, 0}));
    EXPECT_EQ(b[0].mask.data, (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_EQ(u[0].mask.data, (std::vector<std::uint8_t>{1, 1, 1, 0}));
}

TEST(Slice, ReassemblingMasksReproducesLabelA) {
    const Dims3 d{6, 5, 4};
    const Study s = normalized_study(d);
    const auto samples = slice_axial(s, SliceSource::A);
    MaskVolume stacked(s.label_a.geom, LabelSource::A);
    for (const auto& sample : samples)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) stacked.at(sample.z, j, i) = sample.mask.at(j, i);
    EXPECT_EQ(stacked.voxels, s.label_a.voxels);
}

TEST(Slice, RequiresNormalizedChannels) {
    const Dims3 d{2, 3, 3};
    Study s = normalized_study(d);
    s.ct.at(1, 2, 2) = 350.0f;
    EXPECT_THROW(slice_axial(s, SliceSource::Union), InvalidArgumentError);
}

TEST(FilterBackground, EmptyAndSinglePixel) {
    const Dims3 d{4, 3, 3};
    Study s = normalized_study(d);
    std::fill(s.label_a.voxels.begin(), s.label_a.voxels.end(), 0);
    std::fill(s.label_b.voxels.begin(), s.label_b.voxels.end(), 0);
    auto u = slice_axial(s, SliceSource::Union);
    EXPECT_TRUE(filter_background(u, u).empty());

    s.label_b.at(2, 1, 1) = 1;
    auto samples = slice_axial(s, SliceSource::A);
    u = slice_axial(s, SliceSource::Union);
    const auto kept = filter_background(samples, u);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].z, 2);
    EXPECT_EQ(kept[0].label_source, SliceSource::A);
}

TEST(FilterBackground, LesionSpanBruteCount) {
    PhantomConfig cfg;
    cfg.n_patients = 1;
    cfg.dims = {24, 32, 32};
    cfg.seed = 404;
    cfg.lesions_min = cfg.lesions_max = 1;
    cfg.misalignment_vox = {2, 2, 2};
    const Study study = generate_patient(cfg.seed, cfg, 0).study;

    int nonzero_planes = 0;
    for (int k = 0; k < cfg.dims.z; ++k) {
        bool any = false;
        for (int j = 0; j < cfg.dims.y && !any; ++j)
            for (int i = 0; i < cfg.dims.x && !any; ++i)
                any = study.label_a.at(k, j, i) != 0 || study.label_b.at(k, j, i) != 0;
        nonzero_planes += any;
    }
    ASSERT_GT(nonzero_planes, 0);
    ASSERT_LT(nonzero_planes, cfg.dims.z);

    const Study prepped = preprocess_study(study);
    const auto samples = slice_axial(prepped, SliceSource::B);
    const auto u = slice_axial(prepped, SliceSource::Union);
    const auto kept = filter_background(samples, u);
    EXPECT_EQ(static_cast<int>(kept.size()), nonzero_planes);
    for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_LT(kept[i - 1].z, kept[i].z);
}

TEST(FilterBackground, MisalignedCriterionRejected) {
    const Dims3 d{3, 3, 3};
    const Study s = normalized_study(d);
    const auto samples = slice_axial(s, SliceSource::A);
    auto u = slice_axial(s, SliceSource::Union);
    std::swap(u[0], u[1]);
    EXPECT_THROW(filter_background(samples, u), InvalidArgumentError);
    u = slice_axial(s, SliceSource::Union);
    u.pop_back();
    EXPECT_THROW(filter_background(samples, u), InvalidArgumentError);
}

TEST(Resize, IdentityIsExact) {
    const Dims3 d{3, 9, 7};
    const Study s = normalized_study(d);
    const auto samples = slice_axial(s, SliceSource::Union);
    const SliceSample out = resize(samples[1], 9, 7);
    EXPECT_EQ(out.image.data, samples[1].image.data);
    EXPECT_EQ(out.mask.data, samples[1].mask.data);
    EXPECT_EQ(out.z, samples[1].z);
}

TEST(Resize, MaskNearestBlockExample) {
    Mask2D m(2, 2);
    m.at(0, 0) = 1;
    const Mask2D out = resize_mask(m, 4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_EQ(out.at(r, c), (r < 2 && c < 2) ? 1 : 0);
}

TEST(Resize, BilinearCenterExample) {
    SliceSample s;
    s.image = DualChannelImage(2, 2);
    s.mask = Mask2D(2, 2);
    for (int r = 0; r < 2; ++r) {
        s.image.at(0, r, 0) = 0.0f;
        s.image.at(0, r, 1) = 1.0f;
    }
    const SliceSample out = resize(s, 3, 3);
    for (int r = 0; r < 3; ++r) {
        EXPECT_NEAR(out.image.at(0, r, 0), 0.0, 1e-9);
        EXPECT_NEAR(out.image.at(0, r, 1), 0.5, 1e-9);
        EXPECT_NEAR(out.image.at(0, r, 2), 1.0, 1e-9);
    }
}

TEST(Resize, DegenerateTargetsRejected) {
    Mask2D m(2, 2);
    EXPECT_THROW(resize_mask(m, 1, 4), InvalidArgumentError);
    EXPECT_THROW(resize_mask(m, 4, 0), InvalidArgumentError);
    SliceSample s;
    s.image = DualChannelImage(2, 2);
    s.mask = Mask2D(2, 2);
    EXPECT_THROW(resize(s, 1, 3), InvalidArgumentError);
}

TEST(Resize, MaskStaysBinaryAcrossScales) {
    Rng rng(9);
    Mask2D m(13, 11);
    for (auto& v : m.data) v = rng.bernoulli(0.3) ? 1 : 0;
    for (int target : {8, 16, 64, 5}) {
        const Mask2D out = resize_mask(m, target, target);
        for (auto v : out.data) EXPECT_LE(v, 1);
    }
}

TEST(Resize, ChainPreservesProvenance) {
    PhantomConfig cfg;
    cfg.n_patients = 1;
    cfg.dims = {24, 32, 32};
    cfg.seed = 71;
    cfg.lesions_min = cfg.lesions_max = 1;
    cfg.misalignment_vox = {2, 2, 2};
    const Study study = preprocess_study(generate_patient(cfg.seed, cfg, 0).study);
    const auto samples = slice_axial(study, SliceSource::A);
    const auto u = slice_axial(study, SliceSource::Union);
    auto kept = filter_background(samples, u);
    std::set<std::pair<std::string, int>> seen;
    for (auto& s : kept) {
        const SliceSample r = resize(s, 16, 16);
        EXPECT_EQ(r.patient_id, s.patient_id);
        EXPECT_EQ(r.z, s.z);
        EXPECT_EQ(r.label_source, s.label_source);
        EXPECT_TRUE(seen.emplace(r.patient_id, r.z).second);
        EXPECT_LT(r.z, cfg.dims.z);
    }
}
