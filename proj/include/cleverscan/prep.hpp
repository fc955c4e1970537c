#pragma once

// The eight input configurations: white-matter-peak intensity normalization
// shared by all of them, optional skull-stripping by the brain mask, and
// optional binarization at a fixed fraction of the normalized peak.
//
//   A1 aligned            A2 skull-stripped
//   B1 aligned + 13.75%   B2 skull-stripped + 13.75%
//   C1 aligned + 27.5%    C2 skull-stripped + 27.5%
//   D1 aligned + 41.25%   D2 skull-stripped + 41.25%

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/volume.hpp"

namespace cleverscan::prep {

constexpr double kThresholdB = 0.1375;
constexpr double kThresholdC = 0.275;
constexpr double kThresholdD = 0.4125;
// Voxels at or below this fraction of the image maximum are background and
// excluded from the peak histogram.
constexpr double kBackgroundFrac = 0.05;

struct PrepConfig {
    std::string id;
    bool skull_strip = false;
    std::optional<double> binarize_frac;
};

inline const std::array<PrepConfig, 8>& all_configs() {
    static const std::array<PrepConfig, 8> configs = {{
        {"A1", false, std::nullopt},
        {"B1", false, kThresholdB},
        {"C1", false, kThresholdC},
        {"D1", false, kThresholdD},
        {"A2", true, std::nullopt},
        {"B2", true, kThresholdB},
        {"C2", true, kThresholdC},
        {"D2", true, kThresholdD},
    }};
    return configs;
}

inline const PrepConfig& config_from_id(const std::string& id) {
    for (const auto& cfg : all_configs())
        if (cfg.id == id) return cfg;
    throw std::invalid_argument("unknown preprocessing config id: " + id);
}

/// Modal intensity of the foreground histogram (196 bins over the foreground
/// range). Returns the center of the highest-count bin; ties break toward
/// higher intensity.
inline double wm_peak(const Volume& image, int bins = 196) {
    if (bins <= 0) throw std::invalid_argument("wm_peak: bins must be positive");
    const float max_value = image.max_value();
    const double background = kBackgroundFrac * static_cast<double>(max_value);

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t n_foreground = 0;
    for (float v : image.voxels) {
        if (v <= background) continue;
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
        ++n_foreground;
    }
    if (n_foreground == 0)
        throw std::runtime_error("wm_peak: no foreground voxels above background");
    if (hi <= lo) return lo;  // constant foreground

    const double width = (hi - lo) / bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (float v : image.voxels) {
        if (v <= background) continue;
        int bin = static_cast<int>((static_cast<double>(v) - lo) / width);
        bin = std::clamp(bin, 0, bins - 1);
        ++counts[static_cast<std::size_t>(bin)];
    }
    int best = 0;
    for (int b = 1; b < bins; ++b)
        if (counts[static_cast<std::size_t>(b)] >= counts[static_cast<std::size_t>(best)])
            best = b;  // >= keeps the higher-intensity bin on ties
    return lo + (best + 0.5) * width;
}

/// Divides all voxels by the white-matter peak so the peak lands at ~1.
inline Volume normalize_to_wm_peak(const Volume& image, int bins = 196) {
    const double peak = wm_peak(image, bins);
    if (peak <= 0.0)
        throw std::runtime_error("normalize_to_wm_peak: non-positive peak");
    Volume out = image;
    const float inv = static_cast<float>(1.0 / peak);
    for (auto& v : out.voxels) v *= inv;
    return out;
}

/// Applies one configuration to a peak-normalized image: strip first, then
/// binarize at the configured fraction of the (unit) peak.
inline Volume apply_config(const Volume& normalized, const Volume& mask,
                           const PrepConfig& cfg) {
    if (!normalized.same_dims(mask))
        throw std::invalid_argument("apply_config: image/mask dimension mismatch");
    Volume out = normalized;
    if (cfg.skull_strip) {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (mask.voxels[i] < 0.5f) out.voxels[i] = 0.0f;
    }
    if (cfg.binarize_frac) {
        const float threshold = static_cast<float>(*cfg.binarize_frac);
        for (auto& v : out.voxels) v = v >= threshold ? 1.0f : 0.0f;
    }
    return out;
}

/// For each threshold: fraction of in-mask voxels at or above it.
/// Non-increasing by construction.
inline std::vector<double> residual_fraction_curve(const Volume& image, const Volume& mask,
                                                   const std::vector<double>& thresholds) {
    if (!image.same_dims(mask))
        throw std::invalid_argument("residual_fraction_curve: dimension mismatch");
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        if (thresholds[t] < 0.0 || thresholds[t] > 1.0)
            throw std::invalid_argument("residual_fraction_curve: thresholds must be in [0,1]");
        if (t > 0 && thresholds[t] < thresholds[t - 1])
            throw std::invalid_argument("residual_fraction_curve: thresholds must ascend");
    }
    std::size_t mask_count = 0;
    for (float m : mask.voxels)
        if (m >= 0.5f) ++mask_count;
    if (mask_count == 0)
        throw std::runtime_error("residual_fraction_curve: empty mask");

    std::vector<double> fractions;
    fractions.reserve(thresholds.size());
    for (double t : thresholds) {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < image.size(); ++i)
            if (mask.voxels[i] >= 0.5f &&
                static_cast<double>(image.voxels[i]) >= t)
                ++kept;
        fractions.push_back(static_cast<double>(kept) / static_cast<double>(mask_count));
    }
    return fractions;
}

} // namespace cleverscan::prep
