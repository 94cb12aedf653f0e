#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "omseg/errors.hpp"
#include "omseg/resample.hpp"
#include "omseg/rng.hpp"
#include "omseg/volume.hpp"

namespace omseg {

struct LesionSpec {
    Vec3 center_vox;
    double core_radius_vox = 0.0;
    double halo_radius_vox = 0.0;
    double pet_peak = 0.0;
    double destruction_hu = 0.0;
};

struct PhantomConfig {
    int n_patients = 0;
    Dims3 dims;
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
    int lesions_min = 1;
    int lesions_max = 3;
    double implant_probability = 0.25;
    Dims3 misalignment_vox{3, 3, 3};
    double noise_sd_hu = 25.0;

    void validate() const {
        if (n_patients < 1) throw InvalidArgumentError("n_patients must be >= 1");
        VolumeGeometry{dims, spacing_mm, {}}.validate();
        if (lesions_min < 0 || lesions_max < lesions_min)
            throw InvalidArgumentError("lesions_per_patient range must satisfy 0 <= lo <= hi");
        if (implant_probability < 0.0 || implant_probability > 1.0)
            throw InvalidArgumentError("implant_probability must lie in [0, 1]");
        for (int r : {misalignment_vox.z, misalignment_vox.y, misalignment_vox.x})
            if (r < 0 || r > 4)
                throw InvalidArgumentError("pet_misalignment_vox ranges must lie within [0, 4]");
        if (noise_sd_hu < 0.0) throw InvalidArgumentError("noise_sd_hu must be >= 0");
    }
};

struct GeneratedPatient {
    Study study;
    RigidTransform pet_shift;
    std::vector<LesionSpec> lesions;
};

namespace detail {

constexpr double kSoftTissueHu = 40.0;
constexpr double kMarrowHu = 120.0;
constexpr double kCorticalHu = 1200.0;
constexpr double kImplantHu = 3000.0;
constexpr double kHuFloor = -1000.0;
constexpr double kHuCeil = 3100.0;
constexpr double kPetBaseline = 0.2;
// Uptake fraction of a lesion's peak that qualifies a halo voxel for Label A.
constexpr double kLabelAUptakeFraction = 0.4;
// PET hotspot sigma relative to halo; keeps the 40% isocontour strictly inside the halo.
constexpr double kHaloPerSigma = 1.6;
constexpr double kCoreFracLo = 0.11;
constexpr double kCoreFracHi = 0.145;
constexpr double kHaloFactorLo = 1.7;
constexpr double kHaloFactorHi = 1.9;
constexpr double kHaloCapFrac = 0.22;
// Minimum center distance between Gaussian sources, in units of their sigma sum.
// At 1.25 the pair never merges into one mode (1.25*(s1+s2) > 2*max(s1,s2)
// whenever sigma_min/sigma_max > 0.6; the halo cap keeps the ratio above 0.85),
// so the global PET argmax stays at the strongest center.
constexpr double kSeparationSigmas = 1.25;
constexpr int kFalseHotspots = 1;
constexpr int kPlacementAttempts = 240;
constexpr int kPatientRerolls = 12;
// Decoys may sit closer; an explicit peak-plus-tails bound keeps the argmax safe.
constexpr double kDecoySeparationSigmas = 1.25;
constexpr double kDecoyAxisLo = 0.85;
constexpr double kDecoyAxisHi = 1.2;
constexpr double kDecoyPeakLo = 0.80;
constexpr double kDecoyPeakHi = 0.90;
constexpr double kDecoyPeakBudget = 0.97;
constexpr double kDecoyBorderSigmas = 1.5;

inline double dist3(const Vec3& a, const Vec3& b) {
    const double dz = a.z - b.z, dy = a.y - b.y, dx = a.x - b.x;
    return std::sqrt(dz * dz + dy * dy + dx * dx);
}

inline double lesion_sigma(const LesionSpec& l) { return l.halo_radius_vox / kHaloPerSigma; }

}  // namespace detail

namespace detail {

// One draw of a full patient from an already-derived stream. Throws
// PhantomGenerationError when the drawn anatomy leaves no room for a
// well-separated lesion set or decoy.
inline GeneratedPatient generate_patient_attempt(std::uint64_t stream_seed,
                                                 const PhantomConfig& config, int index) {
    const Dims3 d = config.dims;
    const double m = static_cast<double>(std::min(d.y, d.x));
    Rng rng(stream_seed);

    const double cy = 0.5 * (d.y - 1) + rng.uniform(-0.07, 0.07) * m;
    const double cx = 0.5 * (d.x - 1) + rng.uniform(-0.07, 0.07) * m;
    const double outer_r = rng.uniform(0.17, 0.20) * m;
    const double inner_r = rng.uniform(0.095, 0.115) * m;

    const bool implant_rolled = rng.bernoulli(config.implant_probability);
    const double implant_r_drawn = rng.uniform(0.025, 0.035) * m;

    const int n_lesions = rng.uniform_int(config.lesions_min, config.lesions_max);

    const int max_shift_z = config.misalignment_vox.z;
    // A lesion core must survive the shift/realign round trip, whose zero strips
    // eat max_shift_z planes at each z face.
    const int min_core_margin = static_cast<int>(std::ceil(detail::kCoreFracLo * m));
    if (n_lesions > 0 &&
        max_shift_z + min_core_margin + 1 > d.z - 2 - max_shift_z - min_core_margin)
        throw PhantomGenerationError("volume too thin for lesions at this misalignment range");

    std::vector<LesionSpec> lesions;
    for (int li = 0; li < n_lesions; ++li) {
        bool placed = false;
        for (int attempt = 0; attempt < detail::kPlacementAttempts && !placed; ++attempt) {
            const double angle = rng.uniform(0.0, 2.0 * std::acos(-1.0));
            const double core = rng.uniform(detail::kCoreFracLo, detail::kCoreFracHi) * m;
            const double halo = std::min(
                core * rng.uniform(detail::kHaloFactorLo, detail::kHaloFactorHi),
                detail::kHaloCapFrac * m);
            const int z_margin = max_shift_z + static_cast<int>(std::ceil(core));
            const int z_lo = z_margin + 1;
            const int z_hi = d.z - 2 - z_margin;
            if (z_lo > z_hi) continue;
            const int zc = rng.uniform_int(z_lo, z_hi);
            const double peak = rng.uniform(3.0, 5.0);
            // Destruction replaces bone with infected-tissue density, a CT band
            // no healthy tissue occupies.
            const double hu = rng.uniform(220.0, 320.0);
            const double radial = 0.5 * (inner_r + outer_r) + rng.uniform(-1.0, 1.0);
            LesionSpec cand{{static_cast<double>(zc), cy + radial * std::sin(angle),
                             cx + radial * std::cos(angle)},
                            core, halo, peak, hu};
            bool clear = true;
            for (const auto& l : lesions)
                if (detail::dist3(cand.center_vox, l.center_vox) <
                    detail::kSeparationSigmas *
                        (detail::lesion_sigma(cand) + detail::lesion_sigma(l)))
                    clear = false;
            if (clear) {
                lesions.push_back(cand);
                placed = true;
            }
        }
        if (!placed) throw PhantomGenerationError("could not place a well-separated lesion");
    }

    double max_peak = 0.0;
    for (const auto& l : lesions) max_peak = std::max(max_peak, l.pet_peak);

    // Decoy uptake foci: extraskeletal hotspots drawn from the same size and
    // near the same brightness distribution as the lesions, straddling the
    // cortical shell the way lesions straddle the marrow cavity, and no closer
    // to the volume faces than lesions get. Their PET signature matches real
    // disease; the intact cortex under the blob center is what gives them away,
    // and only the CT channel carries that.
    std::vector<Vec3> hot_centers;
    std::vector<double> hot_sigmas, hot_peaks;
    for (int hi = 0; hi < detail::kFalseHotspots; ++hi) {
        bool placed = false;
        for (int attempt = 0; attempt < detail::kPlacementAttempts && !placed; ++attempt) {
            const double angle = rng.uniform(0.0, 2.0 * std::acos(-1.0));
            int hz;
            if (!lesions.empty()) {
                const int li = rng.uniform_int(0, static_cast<int>(lesions.size()) - 1);
                const int dz = rng.uniform_int(-3, 3);
                hz = std::clamp(static_cast<int>(lesions[li].center_vox.z) + dz, 1, d.z - 2);
            } else {
                hz = rng.uniform_int(std::min(1 + max_shift_z, d.z - 2), d.z - 2);
            }
            const double axis_dist =
                outer_r * rng.uniform(detail::kDecoyAxisLo, detail::kDecoyAxisHi);
            const double halo_like = std::min(
                rng.uniform(detail::kCoreFracLo, detail::kCoreFracHi) * m *
                    rng.uniform(detail::kHaloFactorLo, detail::kHaloFactorHi),
                detail::kHaloCapFrac * m);
            const double sigma = halo_like / detail::kHaloPerSigma;
            const double peak = lesions.empty()
                                    ? rng.uniform(2.5, 3.5)
                                    : rng.uniform(detail::kDecoyPeakLo, detail::kDecoyPeakHi) *
                                          max_peak;
            Vec3 cand{static_cast<double>(hz), cy + axis_dist * std::sin(angle),
                      cx + axis_dist * std::cos(angle)};
            const double face_margin = detail::kDecoyBorderSigmas * sigma;
            bool clear = cand.y >= face_margin && cand.y <= d.y - 1 - face_margin &&
                         cand.x >= face_margin && cand.x <= d.x - 1 - face_margin;
            double lesion_tails = 0.0;
            for (const auto& l : lesions) {
                const double dist = detail::dist3(cand, l.center_vox);
                const double s = detail::lesion_sigma(l);
                if (dist < detail::kDecoySeparationSigmas * (s + sigma)) clear = false;
                lesion_tails += l.pet_peak * std::exp(-dist * dist / (2.0 * s * s));
            }
            // The decoy center must stay strictly below the strongest lesion
            // center so the global PET argmax never lands on it.
            if (!lesions.empty() && peak + lesion_tails > detail::kDecoyPeakBudget * max_peak)
                clear = false;
            for (std::size_t b = 0; b < hot_centers.size(); ++b)
                if (detail::dist3(cand, hot_centers[b]) <
                    detail::kDecoySeparationSigmas * (hot_sigmas[b] + sigma))
                    clear = false;
            if (clear) {
                hot_centers.push_back(cand);
                hot_sigmas.push_back(sigma);
                hot_peaks.push_back(peak);
                placed = true;
            }
        }
        if (!placed) throw PhantomGenerationError("could not place the false hotspot");
    }

    RigidTransform shift;
    shift.translation_mm = {
        rng.uniform_int(-config.misalignment_vox.z, config.misalignment_vox.z) * config.spacing_mm.z,
        rng.uniform_int(-config.misalignment_vox.y, config.misalignment_vox.y) * config.spacing_mm.y,
        rng.uniform_int(-config.misalignment_vox.x, config.misalignment_vox.x) * config.spacing_mm.x};

    const VolumeGeometry geom{d, config.spacing_mm, {0.0, 0.0, 0.0}};
    GeneratedPatient out;
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "P%03d", index);
    out.study.patient_id = idbuf;
    out.pet_shift = shift;
    out.lesions = lesions;

    Volume ct(geom, Modality::CT);
    Volume pet(geom, Modality::PET);
    MaskVolume label_a(geom, LabelSource::A);
    MaskVolume label_b(geom, LabelSource::B);

    double implant_r = implant_rolled ? implant_r_drawn : 0.0;
    if (implant_rolled) {
        for (const auto& l : lesions) {
            const double dy = l.center_vox.y - cy, dx = l.center_vox.x - cx;
            const double axial = std::sqrt(dy * dy + dx * dx);
            implant_r = std::min(implant_r, axial - l.core_radius_vox - 1.0);
        }
        if (implant_r < 0.8) implant_r = 0.0;
    }

    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const double ry = j - cy, rx = i - cx;
                const double axial = std::sqrt(ry * ry + rx * rx);
                double hu = detail::kSoftTissueHu;
                if (axial < inner_r)
                    hu = detail::kMarrowHu;
                else if (axial < outer_r)
                    hu = detail::kCorticalHu;
                if (axial < implant_r) hu = detail::kImplantHu;

                const Vec3 p{static_cast<double>(k), static_cast<double>(j),
                             static_cast<double>(i)};
                double uptake = detail::kPetBaseline;
                bool in_a = false, in_b = false;
                for (const auto& l : lesions) {
                    const double dist = detail::dist3(p, l.center_vox);
                    if (dist <= l.core_radius_vox) {
                        hu = l.destruction_hu;
                        in_b = true;
                    }
                    const double s = detail::lesion_sigma(l);
                    uptake += l.pet_peak * std::exp(-dist * dist / (2.0 * s * s));
                }
                for (std::size_t b = 0; b < hot_centers.size(); ++b) {
                    const double hd = detail::dist3(p, hot_centers[b]);
                    uptake += hot_peaks[b] * std::exp(-hd * hd / (2.0 * hot_sigmas[b] * hot_sigmas[b]));
                }
                for (const auto& l : lesions)
                    if (detail::dist3(p, l.center_vox) <= l.halo_radius_vox &&
                        uptake > detail::kLabelAUptakeFraction * l.pet_peak)
                        in_a = true;

                ct.at(k, j, i) = static_cast<float>(hu);
                pet.at(k, j, i) = static_cast<float>(uptake);
                label_a.at(k, j, i) = (in_a || in_b) ? 1 : 0;
                label_b.at(k, j, i) = in_b ? 1 : 0;
            }

    for (auto& v : ct.voxels) {
        const double noisy = v + rng.normal(0.0, config.noise_sd_hu);
        v = static_cast<float>(std::clamp(noisy, detail::kHuFloor, detail::kHuCeil));
    }

    Volume shifted = resample_to_reference(pet, geom, shift, Interp::Trilinear);
    out.study.pet = resample_to_reference(shifted, geom, shift.inverse(), Interp::Trilinear);
    out.study.ct = std::move(ct);
    out.study.label_a = std::move(label_a);
    out.study.label_b = std::move(label_b);
    out.study.validate();
    return out;
}

}  // namespace detail

// One synthetic patient, fully determined by (seed, config, index). CT holds a
// cortical tube with carved lesion cores and an optional intramedullary implant;
// PET holds Gaussian hotspots per lesion plus one extraskeletal false hotspot.
// Label B marks lesion cores; Label A additionally takes halo voxels whose PET
// uptake clears 40% of the lesion peak, so A is a strict superset of B.
// The PET stored in the Study went through shift-by-pet_shift and realignment,
// leaving zero strips at the volume faces.
// Draws whose anatomy cannot host a well-separated source set are redrawn from
// a derived stream, so generation stays deterministic in (seed, config, index).
inline GeneratedPatient generate_patient(std::uint64_t seed, const PhantomConfig& config,
                                         int index) {
    config.validate();
    if (index < 0 || index >= config.n_patients)
        throw InvalidArgumentError("patient index out of range");
    std::exception_ptr last;
    for (int round = 0; round < detail::kPatientRerolls; ++round) {
        try {
            return detail::generate_patient_attempt(mix_seed(seed, static_cast<std::uint64_t>(round)),
                                                    config, index);
        } catch (const PhantomGenerationError&) {
            last = std::current_exception();
        }
    }
    std::rethrow_exception(last);
}

inline std::vector<GeneratedPatient> generate_cohort(const PhantomConfig& config) {
    config.validate();
    std::vector<GeneratedPatient> cohort;
    cohort.reserve(config.n_patients);
    for (int i = 0; i < config.n_patients; ++i)
        cohort.push_back(generate_patient(config.seed + static_cast<std::uint64_t>(i), config, i));
    return cohort;
}

}  // namespace omseg
