#pragma once

// Synthetic 3D head phantoms with independently plantable class signals:
// a texture cue (gray-white intensity gap) and a morphology cue
// (ventricle size), inside a brain ellipsoid wrapped by a CSF-like gap and
// a bright spherical shell that stands in for the skull. The brain mask is
// exact by construction, so mask-based preprocessing has no estimation
// error. Intensities are anchored so the white-matter compartment is the
// histogram peak at 1.0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/rng.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::phantom {

enum class SignalMode { texture_only, morphology_only, both };

inline SignalMode signal_mode_from_string(const std::string& s) {
    if (s == "texture_only") return SignalMode::texture_only;
    if (s == "morphology_only") return SignalMode::morphology_only;
    if (s == "both") return SignalMode::both;
    throw std::invalid_argument("unknown signal_mode: " + s);
}

inline std::string to_string(SignalMode m) {
    switch (m) {
        case SignalMode::texture_only: return "texture_only";
        case SignalMode::morphology_only: return "morphology_only";
        default: return "both";
    }
}

// Fixed tissue intensities. Background and ventricle are exactly zero so
// interior nonzero-voxel counts read out the planted morphology directly.
constexpr double kWhiteIntensity = 1.0;
constexpr double kCsfIntensity = 0.08;
constexpr double kShellIntensity = 1.25;
constexpr double kVentricleIntensity = 0.0;
// Outer fraction of the brain radius occupied by gray matter.
constexpr double kWhiteOuterFrac = 0.85;
// CSF gap between brain surface and shell, in voxels.
constexpr double kCsfGapVox = 1.5;
// Mild anisotropy so the brain is an actual ellipsoid on cubic grids.
constexpr double kAnisotropy[3] = {1.0, 0.95, 0.88};

struct PhantomSpec {
    int nx = 16, ny = 16, nz = 16;
    double spacing_mm = 1.0;
    double brain_radius_frac = 0.8;            // of the half grid extent
    int shell_thickness_vox = 1;
    std::array<double, 2> ventricle_radius_frac = {0.30, 0.45};  // [NC, AD]
    std::array<double, 2> texture_contrast = {0.30, 0.12};       // [NC, AD]
    double noise_sigma = 0.05;
    SignalMode signal_mode = SignalMode::both;

    void validate() const {
        if (nx <= 0 || ny <= 0 || nz <= 0)
            throw std::invalid_argument("PhantomSpec: dims must be positive");
        if (spacing_mm <= 0.0)
            throw std::invalid_argument("PhantomSpec: spacing must be positive");
        if (brain_radius_frac <= 0.0 || brain_radius_frac >= 1.0)
            throw std::invalid_argument("PhantomSpec: brain_radius_frac must be in (0,1)");
        for (double v : ventricle_radius_frac)
            if (v <= 0.0 || v >= 1.0)
                throw std::invalid_argument(
                    "PhantomSpec: ventricle must lie strictly inside the brain");
        for (double c : texture_contrast)
            if (c <= 0.0 || c >= 1.0)
                throw std::invalid_argument("PhantomSpec: texture_contrast must be in (0,1)");
        if (noise_sigma < 0.0)
            throw std::invalid_argument("PhantomSpec: noise_sigma must be >= 0");
        if (shell_thickness_vox < 0)
            throw std::invalid_argument("PhantomSpec: shell thickness must be >= 0");
    }

    // Per-class parameters after applying the signal mode: the suppressed
    // cue collapses to the class-0 value for both classes.
    double effective_ventricle_frac(int label) const {
        if (signal_mode == SignalMode::texture_only) return ventricle_radius_frac[0];
        return ventricle_radius_frac[static_cast<std::size_t>(label)];
    }
    double effective_texture_contrast(int label) const {
        if (signal_mode == SignalMode::morphology_only) return texture_contrast[0];
        return texture_contrast[static_cast<std::size_t>(label)];
    }
};

struct SubjectRecord {
    std::string subject_id;
    std::string image_id;
    int label = 0;  // 0 = NC, 1 = AD
    std::uint64_t seed = 0;
    Volume image;
    Volume brain_mask;
};

/// Deterministic phantom for one (seed, class): concentric ventricle, white
/// matter, gray matter inside the brain mask; CSF gap and shell outside it;
/// truncated additive Gaussian noise on top.
inline SubjectRecord generate_phantom(const PhantomSpec& spec, std::uint64_t subject_seed,
                                      int label) {
    spec.validate();
    if (label != 0 && label != 1)
        throw std::invalid_argument("generate_phantom: label must be 0 or 1");

    SubjectRecord record;
    record.label = label;
    record.seed = subject_seed;
    record.image = Volume(spec.nx, spec.ny, spec.nz, spec.spacing_mm);
    record.brain_mask = Volume(spec.nx, spec.ny, spec.nz, spec.spacing_mm);

    const double cx = (spec.nx - 1) / 2.0;
    const double cy = (spec.ny - 1) / 2.0;
    const double cz = (spec.nz - 1) / 2.0;
    const double half[3] = {cx, cy, cz};
    double semi[3];
    for (int a = 0; a < 3; ++a)
        semi[a] = spec.brain_radius_frac * half[a] * kAnisotropy[a];
    const double max_semi = std::max({semi[0], semi[1], semi[2]});
    const double shell_inner = max_semi + kCsfGapVox;
    const double shell_outer = shell_inner + spec.shell_thickness_vox;

    const double vent_frac = spec.effective_ventricle_frac(label);
    const double gray = kWhiteIntensity - spec.effective_texture_contrast(label);

    Rng rng(mix_seed(subject_seed, static_cast<std::uint64_t>(label)));
    for (int z = 0; z < spec.nz; ++z) {
        for (int y = 0; y < spec.ny; ++y) {
            for (int x = 0; x < spec.nx; ++x) {
                const double dx = x - cx, dy = y - cy, dz = z - cz;
                const double ex = dx / semi[0], ey = dy / semi[1], ez = dz / semi[2];
                const double rho = std::sqrt(ex * ex + ey * ey + ez * ez);
                const double r = std::sqrt(dx * dx + dy * dy + dz * dz);

                double value = 0.0;
                bool in_brain = false;
                if (rho <= vent_frac) {
                    value = kVentricleIntensity;
                    in_brain = true;
                } else if (rho <= kWhiteOuterFrac) {
                    value = kWhiteIntensity;
                    in_brain = true;
                } else if (rho <= 1.0) {
                    value = gray;
                    in_brain = true;
                } else if (r <= shell_inner) {
                    value = kCsfIntensity;
                } else if (r <= shell_outer) {
                    value = kShellIntensity;
                }

                if (spec.noise_sigma > 0.0)
                    value = std::max(0.0, value + rng.normal(0.0, spec.noise_sigma));

                const std::size_t idx = record.image.index(x, y, z);
                record.image.voxels[idx] = static_cast<float>(value);
                record.brain_mask.voxels[idx] = in_brain ? 1.0f : 0.0f;
            }
        }
    }
    return record;
}

/// Balanced cohort of labeled subjects; subject i gets a seed derived from
/// base_seed and alternating class labels. Multiple images per subject share
/// the subject's class and differ only in noise.
inline std::vector<SubjectRecord> generate_cohort(const PhantomSpec& spec, int n_subjects,
                                                  std::uint64_t base_seed,
                                                  int images_per_subject = 1) {
    if (n_subjects <= 0 || images_per_subject <= 0)
        throw std::invalid_argument("generate_cohort: counts must be positive");
    std::vector<SubjectRecord> records;
    records.reserve(static_cast<std::size_t>(n_subjects) * images_per_subject);
    for (int s = 0; s < n_subjects; ++s) {
        const int label = s % 2;
        char subject_id[16];
        std::snprintf(subject_id, sizeof subject_id, "s%04d", s);
        for (int r = 0; r < images_per_subject; ++r) {
            auto record = generate_phantom(
                spec, mix_seed(base_seed, static_cast<std::uint64_t>(s) * 1000 + r), label);
            record.subject_id = subject_id;
            record.image_id = std::string(subject_id) + "_r" + std::to_string(r);
            records.push_back(std::move(record));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Subject-level stratified 70:15:15 split with largest-remainder rounding.
// ---------------------------------------------------------------------------

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;  // record indices
    std::uint64_t seed = 0;
};

namespace detail {

inline std::array<int, 3> largest_remainder(int n, const std::array<double, 3>& ratios) {
    std::array<int, 3> counts{};
    std::array<double, 3> remainders{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double quota = n * ratios[s];
        counts[s] = static_cast<int>(quota);
        remainders[s] = quota - counts[s];
        assigned += counts[s];
    }
    while (assigned < n) {
        int best = 0;
        for (int s = 1; s < 3; ++s)
            if (remainders[s] > remainders[best]) best = s;
        counts[best] += 1;
        remainders[best] = -1.0;
        ++assigned;
    }
    return counts;
}

} // namespace detail

inline DatasetSplit split_dataset(const std::vector<SubjectRecord>& records,
                                  std::uint64_t seed,
                                  const std::array<double, 3>& ratios = {0.70, 0.15, 0.15}) {
    // collect subjects and their record indices, preserving first appearance
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<std::size_t>> by_subject;
    std::map<std::string, int> subject_label;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!by_subject.count(r.subject_id)) subject_order.push_back(r.subject_id);
        by_subject[r.subject_id].push_back(i);
        auto it = subject_label.find(r.subject_id);
        if (it == subject_label.end())
            subject_label[r.subject_id] = r.label;
        else if (it->second != r.label)
            throw std::invalid_argument("split_dataset: subject with inconsistent labels");
    }
    const int n_subjects = static_cast<int>(subject_order.size());
    if (n_subjects < 10)
        throw std::invalid_argument("split_dataset: need at least 10 subjects");

    std::array<std::vector<std::string>, 2> per_class;
    for (const auto& id : subject_order)
        per_class[static_cast<std::size_t>(subject_label[id])].push_back(id);
    if (per_class[0].empty() || per_class[1].empty())
        throw std::invalid_argument("split_dataset: both classes must be present");

    Rng rng(seed);
    for (auto& ids : per_class) rng.shuffle(ids);

    const auto set_sizes = detail::largest_remainder(n_subjects, ratios);

    // Fill train and val by per-set largest remainder over classes; the test
    // set takes the remaining subjects, which match its size by construction.
    std::array<std::array<int, 3>, 2> alloc{};
    std::array<int, 2> remaining = {static_cast<int>(per_class[0].size()),
                                    static_cast<int>(per_class[1].size())};
    for (int s = 0; s < 2; ++s) {
        std::array<double, 2> rem_frac{};
        int filled = 0;
        for (int c = 0; c < 2; ++c) {
            const double quota =
                static_cast<double>(per_class[c].size()) * set_sizes[s] / n_subjects;
            alloc[c][s] = std::min(static_cast<int>(quota), remaining[c]);
            rem_frac[c] = quota - alloc[c][s];
            filled += alloc[c][s];
        }
        while (filled < set_sizes[s]) {
            int best = rem_frac[1] > rem_frac[0] ? 1 : 0;
            if (remaining[best] - alloc[best][s] == 0) best = 1 - best;
            alloc[best][s] += 1;
            rem_frac[best] = -1.0;
            ++filled;
        }
        for (int c = 0; c < 2; ++c) remaining[c] -= alloc[c][s];
    }
    alloc[0][2] = remaining[0];
    alloc[1][2] = remaining[1];

    DatasetSplit split;
    split.seed = seed;
    for (int c = 0; c < 2; ++c) {
        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s) {
            if (alloc[c][s] == 0)
                throw std::invalid_argument(
                    "split_dataset: class " + std::to_string(c) +
                    " absent from a split set; dataset too small to stratify");
            auto& target = s == 0 ? split.train : (s == 1 ? split.val : split.test);
            for (int k = 0; k < alloc[c][s]; ++k) {
                const auto& subject = per_class[c][cursor++];
                for (std::size_t idx : by_subject[subject]) target.push_back(idx);
            }
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

// ---------------------------------------------------------------------------
// Session descriptors: n_samplings data splits x n_inits weight seeds.
// ---------------------------------------------------------------------------

struct Sampling {
    int sampling_idx = 0;
    int init_idx = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    DatasetSplit split;
};

inline std::vector<Sampling> make_samplings(const std::vector<SubjectRecord>& records,
                                            int n_samplings, int n_inits,
                                            std::uint64_t base_split_seed,
                                            std::uint64_t base_init_seed) {
    if (n_samplings < 1 || n_inits < 1)
        throw std::invalid_argument("make_samplings: counts must be >= 1");
    std::vector<Sampling> sessions;
    sessions.reserve(static_cast<std::size_t>(n_samplings) * n_inits);
    for (int s = 0; s < n_samplings; ++s) {
        const std::uint64_t split_seed = mix_seed(base_split_seed, static_cast<std::uint64_t>(s));
        DatasetSplit split = split_dataset(records, split_seed);
        for (int i = 0; i < n_inits; ++i) {
            Sampling session;
            session.sampling_idx = s;
            session.init_idx = i;
            session.split_seed = split_seed;
            session.init_seed = mix_seed(base_init_seed, static_cast<std::uint64_t>(i));
            session.split = split;
            sessions.push_back(std::move(session));
        }
    }
    return sessions;
}

} // namespace cleverscan::phantom
