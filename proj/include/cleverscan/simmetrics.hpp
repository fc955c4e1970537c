#pragma once

// Heatmap comparison measures: RMSE, Pearson correlation, mean SSIM over
// dense 7^3 windows, Earth Mover's Distance as the mean of exact axis-
// marginal 1D Wasserstein-1 distances, and IoU of binary top-relevance
// masks. All of them expect min-max normalized inputs.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/volume.hpp"

namespace cleverscan::sim {

/// Raised for maps that cannot be compared (constant, empty mass); callers
/// flag and exclude the pair instead of aborting the aggregate.
struct degenerate_map_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimilarityReport {
    std::string pair_a, pair_b;
    double rmse = 0.0;
    double pearson = 0.0;
    double mssim = 0.0;
    double emd = 0.0;
    double iou_top40 = 0.0;
    double iou_top10 = 0.0;
};

/// Affine rescale onto [0,1]; a constant map has no min-max image.
inline Volume minmax_normalize(const Volume& map) {
    const float lo = map.min_value();
    const float hi = map.max_value();
    if (!(hi > lo)) throw degenerate_map_error("minmax_normalize: constant map");
    Volume out = map;
    const float scale = 1.0f / (hi - lo);
    for (auto& v : out.voxels) v = (v - lo) * scale;
    return out;
}

namespace detail {

inline void require_same_dims(const Volume& a, const Volume& b, const char* who) {
    if (!a.same_dims(b))
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

} // namespace detail

inline double rmse(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b, "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.voxels[i]) - b.voxels[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double pearson(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b, "pearson");
    const std::size_t n = a.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a.voxels[i];
        mean_b += b.voxels[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.voxels[i] - mean_a;
        const double db = b.voxels[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0)
        throw degenerate_map_error("pearson: zero variance");
    return cov / std::sqrt(var_a * var_b);
}

// ---------------------------------------------------------------------------
// MSSIM: SSIM per dense 7^3 uniform window, averaged. Window statistics come
// from 3D summed-area tables so the cost stays linear in the volume.
// ---------------------------------------------------------------------------

namespace detail {

// inclusive-prefix sums with a zero border: S(x,y,z) = sum over [0..x)^3
struct Sat3 {
    int nx, ny, nz;
    std::vector<double> s;

    explicit Sat3(const Volume& v, const Volume* other = nullptr, bool square = false)
        : nx(v.nx + 1), ny(v.ny + 1), nz(v.nz + 1),
          s(static_cast<std::size_t>(nx) * ny * nz, 0.0) {
        for (int z = 0; z < v.nz; ++z)
            for (int y = 0; y < v.ny; ++y)
                for (int x = 0; x < v.nx; ++x) {
                    double value = v.at(x, y, z);
                    if (other) value *= other->at(x, y, z);
                    else if (square) value *= v.at(x, y, z);
                    at(x + 1, y + 1, z + 1) = value + at(x, y + 1, z + 1) +
                        at(x + 1, y, z + 1) + at(x + 1, y + 1, z) -
                        at(x, y, z + 1) - at(x, y + 1, z) - at(x + 1, y, z) +
                        at(x, y, z);
                }
    }

    double& at(int x, int y, int z) {
        return s[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    double at(int x, int y, int z) const {
        return s[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }

    // sum over the cube [x0, x0+w) x [y0, y0+w) x [z0, z0+w)
    double window(int x0, int y0, int z0, int w) const {
        const int x1 = x0 + w, y1 = y0 + w, z1 = z0 + w;
        return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) +
               at(x0, y0, z1) + at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
    }
};

} // namespace detail

inline double mssim(const Volume& a, const Volume& b, int window = 7, double k1 = 0.01,
                    double k2 = 0.03, double dynamic_range = 1.0) {
    detail::require_same_dims(a, b, "mssim");
    if (a.nx < window || a.ny < window || a.nz < window)
        throw std::invalid_argument("mssim: volume smaller than the window");

    const detail::Sat3 sum_a(a), sum_b(b);
    const detail::Sat3 sum_aa(a, nullptr, true), sum_bb(b, nullptr, true);
    const detail::Sat3 sum_ab(a, &b);

    const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
    const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
    const double n = static_cast<double>(window) * window * window;

    double total = 0.0;
    std::size_t count = 0;
    for (int z = 0; z + window <= a.nz; ++z)
        for (int y = 0; y + window <= a.ny; ++y)
            for (int x = 0; x + window <= a.nx; ++x) {
                const double mu_a = sum_a.window(x, y, z, window) / n;
                const double mu_b = sum_b.window(x, y, z, window) / n;
                const double var_a = sum_aa.window(x, y, z, window) / n - mu_a * mu_a;
                const double var_b = sum_bb.window(x, y, z, window) / n - mu_b * mu_b;
                const double cov = sum_ab.window(x, y, z, window) / n - mu_a * mu_b;
                const double ssim =
                    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                    ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += ssim;
                ++count;
            }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// EMD: mass-normalize both maps, take the exact 1D Wasserstein-1 distance
// between the marginal distributions of each axis, and average the three.
// Units are voxels.
// ---------------------------------------------------------------------------

namespace detail {

inline std::array<std::vector<double>, 3> axis_marginals(const Volume& v, double total) {
    std::array<std::vector<double>, 3> marg = {
        std::vector<double>(static_cast<std::size_t>(v.nx), 0.0),
        std::vector<double>(static_cast<std::size_t>(v.ny), 0.0),
        std::vector<double>(static_cast<std::size_t>(v.nz), 0.0)};
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                const double m = v.at(x, y, z) / total;
                marg[0][static_cast<std::size_t>(x)] += m;
                marg[1][static_cast<std::size_t>(y)] += m;
                marg[2][static_cast<std::size_t>(z)] += m;
            }
    return marg;
}

inline double wasserstein1(const std::vector<double>& p, const std::vector<double>& q) {
    double cum_p = 0.0, cum_q = 0.0, dist = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        cum_p += p[i];
        cum_q += q[i];
        dist += std::abs(cum_p - cum_q);
    }
    return dist;
}

} // namespace detail

inline double emd(const Volume& a, const Volume& b) {
    detail::require_same_dims(a, b, "emd");
    if (a.min_value() < 0.0f || b.min_value() < 0.0f)
        throw std::invalid_argument("emd: negative mass");
    const double total_a = a.sum();
    const double total_b = b.sum();
    if (total_a <= 0.0 || total_b <= 0.0)
        throw degenerate_map_error("emd: zero mass");
    const auto marg_a = detail::axis_marginals(a, total_a);
    const auto marg_b = detail::axis_marginals(b, total_b);
    double acc = 0.0;
    for (int axis = 0; axis < 3; ++axis)
        acc += detail::wasserstein1(marg_a[static_cast<std::size_t>(axis)],
                                    marg_b[static_cast<std::size_t>(axis)]);
    return acc / 3.0;
}

/// Intersection over union of two binary masks.
inline double iou(const Volume& mask_a, const Volume& mask_b) {
    detail::require_same_dims(mask_a, mask_b, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < mask_a.size(); ++i) {
        const bool a = mask_a.voxels[i] >= 0.5f;
        const bool b = mask_b.voxels[i] >= 0.5f;
        if (a && b) ++inter;
        if (a || b) ++uni;
    }
    if (uni == 0) throw degenerate_map_error("iou: empty union");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace cleverscan::sim
