#pragma once

// Spectral relevance analysis: block-mean downsampling, kNN-Gaussian
// affinity, normalized symmetric Laplacian with a dense cyclic-Jacobi
// eigendecomposition, eigengap cluster-count selection, seeded k-means on
// row-normalized spectral embeddings, exact t-SNE seeded from the Laplacian
// eigenvectors, and per-cluster mean heatmaps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/rng.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::spray {

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// Downsampling to the analysis resolution (block mean pooling).
// ---------------------------------------------------------------------------

inline Volume downsample(const Volume& map, double target_spacing = 2.0) {
    const double exact = target_spacing / map.spacing_mm;
    const int factor = static_cast<int>(std::lround(exact));
    if (factor < 1 || std::abs(exact - factor) > 1e-9)
        throw std::invalid_argument("downsample: non-integer downsampling factor");
    if (factor == 1) return map;

    const int onx = (map.nx + factor - 1) / factor;
    const int ony = (map.ny + factor - 1) / factor;
    const int onz = (map.nz + factor - 1) / factor;
    Volume out(onx, ony, onz, target_spacing);
    for (int oz = 0; oz < onz; ++oz)
        for (int oy = 0; oy < ony; ++oy)
            for (int ox = 0; ox < onx; ++ox) {
                double acc = 0.0;
                int count = 0;
                for (int dz = 0; dz < factor; ++dz)
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx) {
                            const int x = ox * factor + dx;
                            const int y = oy * factor + dy;
                            const int z = oz * factor + dz;
                            if (x >= map.nx || y >= map.ny || z >= map.nz) continue;
                            acc += map.at(x, y, z);
                            ++count;
                        }
                out.at(ox, oy, oz) = static_cast<float>(acc / count);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Affinity graph: symmetric kNN with Gaussian weights, bandwidth = median
// kNN distance.
// ---------------------------------------------------------------------------

inline Matrix affinity(const std::vector<std::vector<double>>& points, int k_neighbors = 10) {
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(k_neighbors) + 1)
        throw std::invalid_argument("affinity: need at least k+1 points");
    for (const auto& p : points)
        if (p.size() != points.front().size())
            throw std::invalid_argument("affinity: inconsistent vector lengths");

    Matrix dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t f = 0; f < points[i].size(); ++f) {
                const double d = points[i][f] - points[j][f];
                d2 += d * d;
            }
            dist[i][j] = dist[j][i] = std::sqrt(d2);
        }

    // k nearest per row (stable order on ties) and the pooled kNN distances
    std::vector<std::vector<std::size_t>> knn(n);
    std::vector<double> pooled;
    pooled.reserve(n * static_cast<std::size_t>(k_neighbors));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> idx;
        idx.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) idx.push_back(j);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return dist[i][a] < dist[i][b];
        });
        idx.resize(static_cast<std::size_t>(k_neighbors));
        for (std::size_t j : idx) pooled.push_back(dist[i][j]);
        knn[i] = std::move(idx);
    }
    std::sort(pooled.begin(), pooled.end());
    const double sigma = pooled[pooled.size() / 2];

    Matrix w(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : knn[i]) {
            const double d = dist[i][j];
            const double weight =
                d == 0.0 ? 1.0
                         : (sigma > 0.0 ? std::exp(-d * d / (2.0 * sigma * sigma)) : 0.0);
            w[i][j] = std::max(w[i][j], weight);
            w[j][i] = w[i][j];  // symmetrize by maximum
        }
    for (std::size_t i = 0; i < n; ++i) w[i][i] = 0.0;
    return w;
}

// ---------------------------------------------------------------------------
// Dense symmetric eigendecomposition (cyclic Jacobi) and the normalized
// Laplacian spectrum.
// ---------------------------------------------------------------------------

struct EigenDecomposition {
    std::vector<double> values;   // ascending
    Matrix vectors;               // vectors[r] is the eigenvector of values[r]
};

inline EigenDecomposition jacobi_symmetric(Matrix a, int max_sweeps = 64) {
    const std::size_t n = a.size();
    for (const auto& row : a)
        if (row.size() != n)
            throw std::invalid_argument("jacobi_symmetric: matrix must be square");
    Matrix v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    EigenDecomposition decomposition;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a[x][x] < a[y][y]; });
    for (std::size_t r : order) {
        decomposition.values.push_back(a[r][r]);
        std::vector<double> vec(n);
        for (std::size_t i = 0; i < n; ++i) vec[i] = v[i][r];
        decomposition.vectors.push_back(std::move(vec));
    }
    return decomposition;
}

/// Spectrum of L_sym = I - D^{-1/2} W D^{-1/2}; eigenvalues land in [0, 2].
inline EigenDecomposition laplacian_spectrum(const Matrix& w) {
    const std::size_t n = w.size();
    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        degree[i] = std::accumulate(w[i].begin(), w[i].end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (degree[i] <= 0.0)
            throw std::runtime_error("laplacian_spectrum: isolated vertex " +
                                     std::to_string(i));
    Matrix l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        l[i][i] = 1.0;
        for (std::size_t j = 0; j < n; ++j)
            if (w[i][j] != 0.0)
                l[i][j] -= w[i][j] / std::sqrt(degree[i] * degree[j]);
    }
    return jacobi_symmetric(std::move(l));
}

/// k at the largest ascending eigenvalue gap lambda_{k+1} - lambda_k
/// (1-indexed); ties resolve to the smaller k.
inline int eigengap_k(const std::vector<double>& eigenvalues, int k_max = 10) {
    if (eigenvalues.size() < 2)
        throw std::invalid_argument("eigengap_k: need at least two eigenvalues");
    const int limit = std::min<int>(k_max, static_cast<int>(eigenvalues.size()) - 1);
    int best_k = 1;
    double best_gap = -1.0;
    for (int i = 1; i <= limit; ++i) {
        const double gap = eigenvalues[static_cast<std::size_t>(i)] -
                           eigenvalues[static_cast<std::size_t>(i - 1)];
        if (gap > best_gap) {
            best_gap = gap;
            best_k = i;
        }
    }
    return best_k;
}

// ---------------------------------------------------------------------------
// Seeded k-means (k-means++ init, 20 restarts, best inertia).
// ---------------------------------------------------------------------------

struct KMeansResult {
    std::vector<int> labels;
    double inertia = 0.0;
};

inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                           std::uint64_t seed, int restarts = 20, int max_iters = 100) {
    const std::size_t n = points.size();
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("kmeans: k exceeds the number of points");
    const std::size_t dim = points.front().size();

    const auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t f = 0; f < dim; ++f) {
            const double d = a[f] - b[f];
            acc += d * d;
        }
        return acc;
    };

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < restarts; ++restart) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(restart)));

        // k-means++ seeding
        std::vector<std::vector<double>> centers;
        centers.push_back(points[rng.below(n)]);
        std::vector<double> d2(n);
        while (centers.size() < static_cast<std::size_t>(k)) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double m = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) m = std::min(m, dist2(points[i], c));
                d2[i] = m;
                total += m;
            }
            if (total <= 0.0) {
                centers.push_back(points[rng.below(n)]);
                continue;
            }
            double pick = rng.uniform01() * total;
            std::size_t chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                pick -= d2[i];
                if (pick <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            centers.push_back(points[chosen]);
        }

        std::vector<int> labels(n, 0);
        for (int iter = 0; iter < max_iters; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                double m = dist2(points[i], centers[0]);
                for (int c = 1; c < k; ++c) {
                    const double d = dist2(points[i], centers[static_cast<std::size_t>(c)]);
                    if (d < m) {
                        m = d;
                        arg = c;
                    }
                }
                if (labels[i] != arg) {
                    labels[i] = arg;
                    changed = true;
                }
            }
            std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                                  std::vector<double>(dim, 0.0));
            std::vector<int> counts(static_cast<std::size_t>(k), 0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t f = 0; f < dim; ++f)
                    sums[static_cast<std::size_t>(labels[i])][f] += points[i][f];
                ++counts[static_cast<std::size_t>(labels[i])];
            }
            for (int c = 0; c < k; ++c)
                if (counts[static_cast<std::size_t>(c)] > 0)
                    for (std::size_t f = 0; f < dim; ++f)
                        centers[static_cast<std::size_t>(c)][f] =
                            sums[static_cast<std::size_t>(c)][f] /
                            counts[static_cast<std::size_t>(c)];
            if (!changed && iter > 0) break;
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += dist2(points[i], centers[static_cast<std::size_t>(labels[i])]);
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = labels;
        }
    }
    return best;
}

/// Cluster the rows of the first k eigenvectors after unit row normalization.
inline std::vector<int> spectral_cluster(const Matrix& eigenvectors, int k,
                                         std::uint64_t seed) {
    if (eigenvectors.empty())
        throw std::invalid_argument("spectral_cluster: no eigenvectors");
    const std::size_t n = eigenvectors.front().size();
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("spectral_cluster: invalid k");
    std::vector<std::vector<double>> rows(n, std::vector<double>(static_cast<std::size_t>(k)));
    for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (int c = 0; c < k; ++c) {
            rows[i][static_cast<std::size_t>(c)] = eigenvectors[static_cast<std::size_t>(c)][i];
            norm2 += rows[i][static_cast<std::size_t>(c)] * rows[i][static_cast<std::size_t>(c)];
        }
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (auto& value : rows[i]) value *= inv;
        }
    }
    return kmeans(rows, k, seed).labels;
}

// ---------------------------------------------------------------------------
// Exact t-SNE with Laplacian-eigenvector initialization.
// ---------------------------------------------------------------------------

struct TsneResult {
    std::vector<std::array<double, 2>> coords;
    bool jittered = false;  // degenerate input distances were perturbed
};

inline TsneResult tsne_embed(const std::vector<std::vector<double>>& points,
                             const std::vector<std::array<double, 2>>& init,
                             double perplexity = 15.0, std::uint64_t seed = 0,
                             int iterations = 1000) {
    const std::size_t n = points.size();
    if (n < 3) throw std::invalid_argument("tsne_embed: need at least 3 points");
    if (init.size() != n)
        throw std::invalid_argument("tsne_embed: init coordinate count mismatch");

    TsneResult result;
    Matrix d2(n, std::vector<double>(n, 0.0));
    double max_d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t f = 0; f < points[i].size(); ++f) {
                const double d = points[i][f] - points[j][f];
                acc += d * d;
            }
            d2[i][j] = d2[j][i] = acc;
            max_d2 = std::max(max_d2, acc);
        }
    if (max_d2 <= 0.0) {
        // all points identical: jitter deterministically and flag
        result.jittered = true;
        Rng rng(mix_seed(seed, 0x6a697474ULL));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double jitter = 1e-8 * (1.0 + rng.uniform01());
                d2[i][j] = d2[j][i] = jitter;
            }
    }

    const double target_perplexity =
        std::min(perplexity, (static_cast<double>(n) - 1.0) / 3.0);
    const double log_perp = std::log(std::max(2.0, target_perplexity));

    // conditional gaussians via per-point binary search on beta
    Matrix p(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0,
               beta_hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double e = std::exp(-beta * d2[i][j]);
                sum += e;
                weighted += beta * d2[i][j] * e;
            }
            const double entropy = sum > 0.0 ? std::log(sum) + weighted / sum : 0.0;
            const double diff = entropy - log_perp;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : (beta + beta_hi) / 2.0;
            } else {
                beta_hi = beta;
                beta = (beta + beta_lo) / 2.0;
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum += std::exp(-beta * d2[i][j]);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && sum > 0.0) p[i][j] = std::exp(-beta * d2[i][j]) / sum;
    }
    // symmetrize and floor
    double p_total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p_total += p[i][j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double value = std::max((p[i][j] + p[j][i]) / p_total, 1e-12);
            p[i][j] = p[j][i] = value;
        }

    result.coords = init;
    std::vector<std::array<double, 2>> velocity(n, {0.0, 0.0});
    std::vector<std::array<double, 2>> gains(n, {1.0, 1.0});
    const double lr = 200.0;
    const int exaggeration_until = std::min(250, iterations / 4);
    const double exaggeration = 12.0;

    Matrix q(n, std::vector<double>(n, 0.0));
    for (int iter = 0; iter < iterations; ++iter) {
        const double p_scale = iter < exaggeration_until ? exaggeration : 1.0;
        const double momentum = iter < 250 ? 0.5 : 0.8;

        double q_total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = result.coords[i][0] - result.coords[j][0];
                const double dy = result.coords[i][1] - result.coords[j][1];
                const double value = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i][j] = q[j][i] = value;
                q_total += 2.0 * value;
            }

        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double dx = result.coords[i][0] - result.coords[j][0];
                const double dy = result.coords[i][1] - result.coords[j][1];
                const double mult =
                    (p_scale * p[i][j] - q[i][j] / q_total) * q[i][j];
                gx += 4.0 * mult * dx;
                gy += 4.0 * mult * dy;
            }
            for (int axis = 0; axis < 2; ++axis) {
                const double g = axis == 0 ? gx : gy;
                gains[i][axis] = (g > 0.0) == (velocity[i][axis] > 0.0)
                                     ? std::max(0.01, gains[i][axis] * 0.8)
                                     : gains[i][axis] + 0.2;
                velocity[i][axis] =
                    momentum * velocity[i][axis] - lr * gains[i][axis] * g;
            }
        }
        double mean_x = 0.0, mean_y = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            result.coords[i][0] += velocity[i][0];
            result.coords[i][1] += velocity[i][1];
            mean_x += result.coords[i][0];
            mean_y += result.coords[i][1];
        }
        mean_x /= static_cast<double>(n);
        mean_y /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            result.coords[i][0] -= mean_x;
            result.coords[i][1] -= mean_y;
        }
    }
    return result;
}

/// The canonical initialization: first two nontrivial Laplacian eigenvectors
/// rescaled to standard deviation 1e-4.
inline std::vector<std::array<double, 2>> laplacian_init(const EigenDecomposition& spectrum) {
    if (spectrum.vectors.size() < 3)
        throw std::invalid_argument("laplacian_init: need at least three eigenvectors");
    const std::size_t n = spectrum.vectors.front().size();
    std::vector<std::array<double, 2>> init(n, {0.0, 0.0});
    for (int axis = 0; axis < 2; ++axis) {
        const auto& vec = spectrum.vectors[static_cast<std::size_t>(axis + 1)];
        double mean = std::accumulate(vec.begin(), vec.end(), 0.0) /
                      static_cast<double>(n);
        double var = 0.0;
        for (double v : vec) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double scale = var > 0.0 ? 1e-4 / std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < n; ++i)
            init[i][static_cast<std::size_t>(axis)] = (vec[i] - mean) * scale;
    }
    return init;
}

// ---------------------------------------------------------------------------
// Cluster products and partition agreement.
// ---------------------------------------------------------------------------

struct GroupMeans {
    std::vector<Volume> means;   // empty Volume when a cluster has no members
    std::vector<int> counts;
    std::vector<int> skipped;    // cluster ids with no members
};

inline GroupMeans group_mean_heatmaps(const std::vector<Volume>& maps,
                                      const std::vector<int>& labels) {
    if (maps.size() != labels.size())
        throw std::invalid_argument("group_mean_heatmaps: label count mismatch");
    if (maps.empty()) throw std::invalid_argument("group_mean_heatmaps: empty input");
    int k = 0;
    for (int label : labels) {
        if (label < 0) throw std::invalid_argument("group_mean_heatmaps: negative label");
        k = std::max(k, label + 1);
    }
    GroupMeans result;
    result.means.resize(static_cast<std::size_t>(k));
    result.counts.assign(static_cast<std::size_t>(k), 0);
    std::vector<std::vector<double>> acc(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        if (acc[c].empty()) acc[c].assign(maps[i].size(), 0.0);
        if (!maps[i].same_dims(maps.front()))
            throw std::invalid_argument("group_mean_heatmaps: dimension mismatch");
        for (std::size_t v = 0; v < maps[i].size(); ++v)
            acc[c][v] += static_cast<double>(maps[i].voxels[v]);
        ++result.counts[c];
    }
    for (int c = 0; c < k; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        if (result.counts[cc] == 0) {
            result.skipped.push_back(c);
            continue;
        }
        Volume mean(maps.front().nx, maps.front().ny, maps.front().nz,
                    maps.front().spacing_mm);
        for (std::size_t v = 0; v < mean.size(); ++v)
            mean.voxels[v] = static_cast<float>(acc[cc][v] / result.counts[cc]);
        result.means[cc] = std::move(mean);
    }
    return result;
}

/// Adjusted Rand index between two partitions of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("adjusted_rand_index: size mismatch");
    if (a.empty()) throw std::invalid_argument("adjusted_rand_index: empty partitions");
    const auto relabel = [](const std::vector<int>& labels) {
        std::vector<int> out(labels.size());
        std::vector<int> seen;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto it = std::find(seen.begin(), seen.end(), labels[i]);
            if (it == seen.end()) {
                seen.push_back(labels[i]);
                out[i] = static_cast<int>(seen.size()) - 1;
            } else {
                out[i] = static_cast<int>(it - seen.begin());
            }
        }
        return std::pair{out, static_cast<int>(seen.size())};
    };
    const auto [la, ka] = relabel(a);
    const auto [lb, kb] = relabel(b);

    std::vector<std::vector<long long>> table(static_cast<std::size_t>(ka),
                                              std::vector<long long>(static_cast<std::size_t>(kb), 0));
    for (std::size_t i = 0; i < la.size(); ++i)
        ++table[static_cast<std::size_t>(la[i])][static_cast<std::size_t>(lb[i])];

    const auto choose2 = [](long long x) { return x * (x - 1) / 2; };
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < ka; ++i) {
        long long row = 0;
        for (int j = 0; j < kb; ++j) {
            index += static_cast<double>(choose2(table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
            row += table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        sum_a += static_cast<double>(choose2(row));
    }
    for (int j = 0; j < kb; ++j) {
        long long col = 0;
        for (int i = 0; i < ka; ++i) col += table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        sum_b += static_cast<double>(choose2(col));
    }
    const double total = static_cast<double>(choose2(static_cast<long long>(la.size())));
    const double expected = sum_a * sum_b / total;
    const double max_index = (sum_a + sum_b) / 2.0;
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Composed analysis.
// ---------------------------------------------------------------------------

struct SprayParams {
    double target_spacing = 2.0;
    int k_neighbors = 10;
    int k_max = 10;
    double perplexity = 15.0;
    int tsne_iterations = 1000;
    std::uint64_t seed = 7;
};

struct SpectralResult {
    Matrix affinity;
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
    int chosen_k = 1;
    std::vector<int> labels;
    std::vector<std::array<double, 2>> embedding;
    bool tsne_jittered = false;
};

/// Full chain on flattened (already downsampled) vectors: affinity,
/// Laplacian spectrum, eigengap k, spectral clustering, t-SNE embedding.
inline SpectralResult spray_analyze(const std::vector<std::vector<double>>& vectors,
                                    const SprayParams& params = {}) {
    SpectralResult result;
    const int k_nn =
        std::min<int>(params.k_neighbors, static_cast<int>(vectors.size()) - 1);
    result.affinity = affinity(vectors, k_nn);
    auto spectrum = laplacian_spectrum(result.affinity);
    result.eigenvalues = spectrum.values;
    result.eigenvectors = spectrum.vectors;
    result.chosen_k = eigengap_k(result.eigenvalues, params.k_max);
    result.labels = spectral_cluster(result.eigenvectors, result.chosen_k, params.seed);
    const auto tsne = tsne_embed(vectors, laplacian_init(spectrum), params.perplexity,
                                 params.seed, params.tsne_iterations);
    result.embedding = tsne.coords;
    result.tsne_jittered = tsne.jittered;
    return result;
}

inline std::vector<double> flatten_volume(const Volume& v) {
    return std::vector<double>(v.voxels.begin(), v.voxels.end());
}

} // namespace cleverscan::spray
