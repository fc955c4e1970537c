#pragma once

// Layer-wise relevance propagation with the alpha/beta rule (alpha=1, beta=0
// by default), mean heatmaps, the top-relevance histogram threshold, binary
// relevance masks and the boundary-focus readout used to expose
// skull-strip-induced shortcut cues.
//
// Propagation starts at the target class's pre-softmax score and splits each
// layer's contributions tap by tap into positive and negative parts; biases
// enter the denominators through their positive (resp. negative) parts, so a
// positive bias absorbs relevance while non-positive biases conserve it up
// to the stabilizer.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cleverscan/net.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::lrp {

struct LRPParams {
    double alpha = 1.0;
    double beta = 0.0;
    double epsilon = 1e-9;

    void validate() const {
        if (std::abs(alpha - beta - 1.0) > 1e-12)
            throw std::invalid_argument("LRPParams: alpha - beta must equal 1");
        if (beta < 0.0 || epsilon < 0.0)
            throw std::invalid_argument("LRPParams: beta and epsilon must be >= 0");
    }
};

struct LrpResult {
    Volume relevance;                  // input-layer relevance map
    double output_relevance = 0.0;     // seed: target pre-softmax score
    std::vector<double> layer_totals;  // total relevance at each layer input,
                                       // index 0 = network input
};

namespace detail {

using net::kKernel;
using net::kPad;

// One alpha/beta step through a conv layer: given relevance at the layer
// output, redistribute onto the layer input.
template <typename T>
cleverscan::Tensor4<double> conv_lrp(const Tensor4<T>& input, const net::LayerSpec& spec,
                                     const std::vector<T>& weights,
                                     const std::vector<T>& biases,
                                     const Tensor4<double>& relevance,
                                     const LRPParams& params) {
    const int s = spec.stride;
    const int onx = relevance.nx, ony = relevance.ny, onz = relevance.nz;
    const std::size_t in_plane = static_cast<std::size_t>(input.nx) * input.ny;
    const std::size_t out_plane = static_cast<std::size_t>(onx) * ony;

    Tensor4<double> result(spec.in_channels, input.nx, input.ny, input.nz);

    // sign = +1: positive contributions weighted by alpha;
    // sign = -1: negative contributions weighted by beta.
    const auto run_side = [&](double side, double factor) {
        if (factor == 0.0) return;
        std::vector<double> z_side(relevance.spatial_size());
        for (int oc = 0; oc < spec.out_channels; ++oc) {
            const double b_part = side * std::max(0.0, side * static_cast<double>(biases[oc]));
            std::fill(z_side.begin(), z_side.end(), b_part);
            // pass 1: per-output sums of the signed contribution parts
            for (int ic = 0; ic < spec.in_channels; ++ic) {
                const T* in_ch = input.channel_data(ic);
                const T* w_base = weights.data() +
                    (static_cast<std::size_t>(oc) * spec.in_channels + ic) * 27;
                for (int kz = 0; kz < kKernel; ++kz) {
                    int oz_lo, oz_hi;
                    net::detail::kernel_bounds(kz, s, input.nz, onz, oz_lo, oz_hi);
                    for (int ky = 0; ky < kKernel; ++ky) {
                        int oy_lo, oy_hi;
                        net::detail::kernel_bounds(ky, s, input.ny, ony, oy_lo, oy_hi);
                        for (int kx = 0; kx < kKernel; ++kx) {
                            int ox_lo, ox_hi;
                            net::detail::kernel_bounds(kx, s, input.nx, onx, ox_lo, ox_hi);
                            const double w =
                                static_cast<double>(w_base[(kz * 3 + ky) * 3 + kx]);
                            for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                                const int iz = oz * s + kz - kPad;
                                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                    const int iy = oy * s + ky - kPad;
                                    const T* in_row = in_ch + iz * in_plane +
                                        static_cast<std::size_t>(iy) * input.nx;
                                    double* z_row = z_side.data() + oz * out_plane +
                                        static_cast<std::size_t>(oy) * onx;
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                        const double z = w *
                                            static_cast<double>(in_row[ox * s + kx - kPad]);
                                        const double part = side * z;
                                        if (part > 0.0) z_row[ox] += z;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            // scale factors per output voxel
            const double* rel_ch = relevance.channel_data(oc);
            for (std::size_t i = 0; i < z_side.size(); ++i) {
                const double denom = z_side[i] + side * params.epsilon;
                z_side[i] = denom != 0.0 ? factor * rel_ch[i] / denom : 0.0;
            }
            // pass 2: scatter the scaled contributions back onto the input
            for (int ic = 0; ic < spec.in_channels; ++ic) {
                const T* in_ch = input.channel_data(ic);
                double* res_ch = result.channel_data(ic);
                const T* w_base = weights.data() +
                    (static_cast<std::size_t>(oc) * spec.in_channels + ic) * 27;
                for (int kz = 0; kz < kKernel; ++kz) {
                    int oz_lo, oz_hi;
                    net::detail::kernel_bounds(kz, s, input.nz, onz, oz_lo, oz_hi);
                    for (int ky = 0; ky < kKernel; ++ky) {
                        int oy_lo, oy_hi;
                        net::detail::kernel_bounds(ky, s, input.ny, ony, oy_lo, oy_hi);
                        for (int kx = 0; kx < kKernel; ++kx) {
                            int ox_lo, ox_hi;
                            net::detail::kernel_bounds(kx, s, input.nx, onx, ox_lo, ox_hi);
                            const double w =
                                static_cast<double>(w_base[(kz * 3 + ky) * 3 + kx]);
                            for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                                const int iz = oz * s + kz - kPad;
                                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                    const int iy = oy * s + ky - kPad;
                                    const T* in_row = in_ch + iz * in_plane +
                                        static_cast<std::size_t>(iy) * input.nx;
                                    double* res_row = res_ch + iz * in_plane +
                                        static_cast<std::size_t>(iy) * input.nx;
                                    const double* s_row = z_side.data() + oz * out_plane +
                                        static_cast<std::size_t>(oy) * onx;
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                        const int ix = ox * s + kx - kPad;
                                        const double z = w *
                                            static_cast<double>(in_row[ix]);
                                        if (side * z > 0.0) res_row[ix] += z * s_row[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };

    run_side(+1.0, params.alpha);
    run_side(-1.0, -params.beta);  // beta side subtracts
    return result;
}

template <typename T>
cleverscan::Tensor4<double> dense_lrp(const Tensor4<T>& input, const net::LayerSpec& spec,
                                      const std::vector<T>& weights,
                                      const std::vector<T>& biases,
                                      const Tensor4<double>& relevance,
                                      const LRPParams& params) {
    Tensor4<double> result(spec.in_channels, 1, 1, 1);
    const auto run_side = [&](double side, double factor) {
        if (factor == 0.0) return;
        for (int o = 0; o < spec.out_channels; ++o) {
            if (relevance.values[o] == 0.0) continue;
            const T* w_row = weights.data() + static_cast<std::size_t>(o) * spec.in_channels;
            double z_sum = side * std::max(0.0, side * static_cast<double>(biases[o]));
            for (int i = 0; i < spec.in_channels; ++i) {
                const double z = static_cast<double>(w_row[i]) *
                                 static_cast<double>(input.values[i]);
                if (side * z > 0.0) z_sum += z;
            }
            const double denom = z_sum + side * params.epsilon;
            if (denom == 0.0) continue;
            const double scale = factor * relevance.values[o] / denom;
            for (int i = 0; i < spec.in_channels; ++i) {
                const double z = static_cast<double>(w_row[i]) *
                                 static_cast<double>(input.values[i]);
                if (side * z > 0.0) result.values[i] += z * scale;
            }
        }
    };
    run_side(+1.0, params.alpha);
    run_side(-1.0, -params.beta);
    return result;
}

inline double total(const Tensor4<double>& t) {
    double acc = 0.0;
    for (double v : t.values) acc += v;
    return acc;
}

} // namespace detail

/// Relevance propagation from an existing forward trace. The softmax is not
/// propagated: the seed is the target class's pre-softmax score.
template <typename T>
LrpResult lrp_from_trace(const net::Model<T>& model, const net::Trace<T>& trace,
                         int target_class, const LRPParams& params = {}) {
    params.validate();
    const std::size_t n_layers = model.layers.size();
    if (trace.inputs.size() != n_layers || trace.preacts.size() != n_layers)
        throw std::invalid_argument("lrp: trace does not match model");
    const auto& out = trace.preacts.back();
    if (target_class < 0 || target_class >= static_cast<int>(out.size()))
        throw std::invalid_argument("lrp: target class out of range");

    LrpResult result;
    result.output_relevance = static_cast<double>(out.values[static_cast<std::size_t>(target_class)]);
    result.layer_totals.assign(n_layers, 0.0);

    Tensor4<double> relevance(out.channels, 1, 1, 1);
    relevance.values[static_cast<std::size_t>(target_class)] = result.output_relevance;

    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& spec = model.layers[li];
        Tensor4<double> lower = spec.is_conv()
            ? detail::conv_lrp(trace.inputs[li], spec, model.weights[li],
                               model.biases[li], relevance, params)
            : detail::dense_lrp(trace.inputs[li], spec, model.weights[li],
                                model.biases[li], relevance, params);
        result.layer_totals[li] = detail::total(lower);
        if (li > 0 && lower.size() == trace.inputs[li - 1].size() &&
            lower.channels != trace.inputs[li - 1].channels) {
            // undo the flatten between conv stack and dense head
            const auto& shape = trace.inputs[li - 1];
            Tensor4<double> reshaped(shape.channels, shape.nx, shape.ny, shape.nz);
            reshaped.values = std::move(lower.values);
            lower = std::move(reshaped);
        }
        relevance = std::move(lower);
    }

    result.relevance = Volume(relevance.nx, relevance.ny, relevance.nz);
    // multi-channel inputs collapse by sum; the classifier input has one channel
    for (int c = 0; c < relevance.channels; ++c) {
        const double* src = relevance.channel_data(c);
        for (std::size_t i = 0; i < result.relevance.size(); ++i)
            result.relevance.voxels[i] += static_cast<float>(src[i]);
    }
    return result;
}

template <typename T>
LrpResult lrp(const net::Model<T>& model, const Volume& image, int target_class,
              const LRPParams& params = {}) {
    const auto fwd = net::forward(model, image);
    return lrp_from_trace(model, fwd.trace, target_class, params);
}

// ---------------------------------------------------------------------------
// Heatmap aggregation and top-relevance windowing
// ---------------------------------------------------------------------------

inline Volume mean_heatmap(const std::vector<Volume>& maps) {
    if (maps.empty()) throw std::invalid_argument("mean_heatmap: empty input");
    for (const auto& m : maps)
        if (!m.same_dims(maps.front()))
            throw std::invalid_argument("mean_heatmap: dimension mismatch");
    Volume mean(maps.front().nx, maps.front().ny, maps.front().nz,
                maps.front().spacing_mm);
    std::vector<double> acc(mean.size(), 0.0);
    for (const auto& m : maps)
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += static_cast<double>(m.voxels[i]);
    for (std::size_t i = 0; i < acc.size(); ++i)
        mean.voxels[i] = static_cast<float>(acc[i] / static_cast<double>(maps.size()));
    return mean;
}

/// Histogram-based lower bound of the top-`fraction` relevance window: bins
/// over [0, max], accumulate bin mass from the highest bin down until the
/// target fraction of total relevance is covered, return that bin's lower
/// edge.
inline double top_relevance_threshold(const Volume& map, double fraction = 0.4,
                                      int bins = 256) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("top_relevance_threshold: fraction must be in (0,1]");
    if (bins <= 0) throw std::invalid_argument("top_relevance_threshold: bins must be positive");
    if (map.min_value() < 0.0f)
        throw std::invalid_argument("top_relevance_threshold: map must be non-negative");
    const double total = map.sum();
    if (total <= 0.0)
        throw std::runtime_error("top_relevance_threshold: zero total relevance");

    const double max_value = static_cast<double>(map.max_value());
    const double width = max_value / bins;
    std::vector<double> mass(static_cast<std::size_t>(bins), 0.0);
    for (float v : map.voxels) {
        int bin = width > 0.0 ? static_cast<int>(static_cast<double>(v) / width) : 0;
        bin = std::clamp(bin, 0, bins - 1);
        mass[static_cast<std::size_t>(bin)] += static_cast<double>(v);
    }
    const double target = fraction * total;
    double cumulative = 0.0;
    for (int b = bins - 1; b >= 0; --b) {
        cumulative += mass[static_cast<std::size_t>(b)];
        if (cumulative >= target) return b * width;
    }
    return 0.0;  // float accumulation shortfall: everything is included
}

/// Binary mask of voxels at or above the top-fraction threshold.
inline Volume relevance_mask(const Volume& map, double fraction) {
    const double threshold = top_relevance_threshold(map, fraction);
    Volume mask(map.nx, map.ny, map.nz, map.spacing_mm);
    for (std::size_t i = 0; i < map.size(); ++i)
        mask.voxels[i] = static_cast<double>(map.voxels[i]) >= threshold ? 1.0f : 0.0f;
    return mask;
}

// ---------------------------------------------------------------------------
// Boundary focus: how much of a relevance mask hugs the brain-mask surface.
// ---------------------------------------------------------------------------

/// In-mask voxels with at least one 6-neighbor outside the mask.
inline std::vector<std::array<int, 3>> mask_boundary(const Volume& mask) {
    std::vector<std::array<int, 3>> boundary;
    const auto inside = [&](int x, int y, int z) {
        if (x < 0 || x >= mask.nx || y < 0 || y >= mask.ny || z < 0 || z >= mask.nz)
            return false;
        return mask.at(x, y, z) >= 0.5f;
    };
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                if (mask.at(x, y, z) < 0.5f) continue;
                if (!inside(x - 1, y, z) || !inside(x + 1, y, z) ||
                    !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
                    !inside(x, y, z - 1) || !inside(x, y, z + 1))
                    boundary.push_back({x, y, z});
            }
    return boundary;
}

/// Fraction of set voxels in `relevance_mask` lying within `distance_vox`
/// (Euclidean) of the brain-mask boundary surface.
inline double boundary_focus_fraction(const Volume& relevance_mask, const Volume& brain_mask,
                                      double distance_vox = 2.0) {
    if (!relevance_mask.same_dims(brain_mask))
        throw std::invalid_argument("boundary_focus_fraction: dimension mismatch");
    const auto boundary = mask_boundary(brain_mask);
    if (boundary.empty())
        throw std::runtime_error("boundary_focus_fraction: empty brain mask");
    const double d2_limit = distance_vox * distance_vox;

    std::size_t total = 0, near = 0;
    for (int z = 0; z < relevance_mask.nz; ++z)
        for (int y = 0; y < relevance_mask.ny; ++y)
            for (int x = 0; x < relevance_mask.nx; ++x) {
                if (relevance_mask.at(x, y, z) < 0.5f) continue;
                ++total;
                for (const auto& b : boundary) {
                    const double dx = x - b[0], dy = y - b[1], dz = z - b[2];
                    if (dx * dx + dy * dy + dz * dz <= d2_limit) {
                        ++near;
                        break;
                    }
                }
            }
    if (total == 0)
        throw std::runtime_error("boundary_focus_fraction: empty relevance mask");
    return static_cast<double>(near) / static_cast<double>(total);
}

} // namespace cleverscan::lrp
