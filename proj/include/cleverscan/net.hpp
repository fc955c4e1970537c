#pragma once

// Minimal deterministic 3D network engine: 3x3x3 convolutions (plain and
// strided), dense layers, ReLU/softmax, reverse-mode gradients and a binary
// checkpoint format. The fixed classifier built here stacks four
// [conv3d + strided conv3d] blocks (8 channels each) followed by dense
// layers of 16 and 2 units; all biases are kept non-positive by the
// optimizer, which sparsifies activations and keeps relevance propagation
// well-behaved.
//
// Numerics: parameters and activations are stored in T (float in training,
// double in gradient-check mode); every reduction accumulates in double.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/rng.hpp"
#include "cleverscan/tensor.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::net {

enum class LayerKind : std::uint8_t { conv3d = 0, conv3d_strided = 1, dense = 2 };
enum class Activation : std::uint8_t { relu = 0, softmax = 1, none = 2 };

constexpr int kKernel = 3;  // conv kernels are fixed 3x3x3
constexpr int kPad = 1;     // zero padding of one voxel per side

struct LayerSpec {
    LayerKind kind = LayerKind::conv3d;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    Activation activation = Activation::relu;

    bool is_conv() const { return kind != LayerKind::dense; }

    std::size_t weight_count() const {
        const std::size_t per_out = is_conv()
            ? static_cast<std::size_t>(in_channels) * kKernel * kKernel * kKernel
            : static_cast<std::size_t>(in_channels);
        return per_out * out_channels;
    }
    std::size_t bias_count() const { return static_cast<std::size_t>(out_channels); }
};

/// Output extent of a padded 3x3x3 conv along one axis: floor((n+2-3)/s)+1.
inline int conv_out_extent(int n, int stride) {
    return (n - 1) / stride + 1;
}

template <typename T>
struct Model {
    std::vector<LayerSpec> layers;
    std::vector<std::vector<T>> weights;
    std::vector<std::vector<T>> biases;
    int input_channels = 1;
    // Expected input grid; 0 means unknown (e.g. checkpoint loaded) and the
    // dense flatten boundary becomes the effective shape check.
    int input_nx = 0, input_ny = 0, input_nz = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& spec : layers) n += spec.weight_count() + spec.bias_count();
        return n;
    }

    template <typename U>
    Model<U> cast() const {
        Model<U> out;
        out.layers = layers;
        out.input_channels = input_channels;
        out.input_nx = input_nx;
        out.input_ny = input_ny;
        out.input_nz = input_nz;
        out.weights.resize(weights.size());
        out.biases.resize(biases.size());
        for (std::size_t l = 0; l < weights.size(); ++l) {
            out.weights[l].assign(weights[l].begin(), weights[l].end());
            out.biases[l].assign(biases[l].begin(), biases[l].end());
        }
        return out;
    }
};

inline void validate_spec(const std::vector<LayerSpec>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& spec = layers[l];
        if (spec.in_channels <= 0 || spec.out_channels <= 0)
            throw std::invalid_argument("LayerSpec: channel counts must be positive");
        if (spec.is_conv() && spec.stride != 1 && spec.stride != 2)
            throw std::invalid_argument("LayerSpec: conv stride must be 1 or 2");
        if (spec.kind == LayerKind::conv3d && spec.stride != 1)
            throw std::invalid_argument("LayerSpec: conv3d requires stride 1");
        if (spec.kind == LayerKind::conv3d_strided && spec.stride != 2)
            throw std::invalid_argument("LayerSpec: conv3d_strided requires stride 2");
        if (spec.activation == Activation::softmax &&
            (l + 1 != layers.size() || spec.kind != LayerKind::dense))
            throw std::invalid_argument("LayerSpec: softmax only on the final dense layer");
    }
}

/// Builds the standard classifier for a given input grid: four
/// [conv3d(8) + conv3d_strided(8)] blocks, then dense(16) and dense(2).
template <typename T = float>
Model<T> make_classifier(int nx, int ny, int nz, int conv_channels = 8,
                         int hidden_units = 16) {
    Model<T> model;
    model.input_channels = 1;
    model.input_nx = nx;
    model.input_ny = ny;
    model.input_nz = nz;

    int cx = nx, cy = ny, cz = nz;
    int channels = 1;
    for (int block = 0; block < 4; ++block) {
        model.layers.push_back({LayerKind::conv3d, channels, conv_channels, 1,
                                Activation::relu});
        channels = conv_channels;
        model.layers.push_back({LayerKind::conv3d_strided, channels, conv_channels, 2,
                                Activation::relu});
        cx = conv_out_extent(cx, 2);
        cy = conv_out_extent(cy, 2);
        cz = conv_out_extent(cz, 2);
    }
    const int flattened = conv_channels * cx * cy * cz;
    model.layers.push_back({LayerKind::dense, flattened, hidden_units, 1,
                            Activation::relu});
    model.layers.push_back({LayerKind::dense, hidden_units, 2, 1,
                            Activation::softmax});
    validate_spec(model.layers);

    model.weights.resize(model.layers.size());
    model.biases.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        model.weights[l].assign(model.layers[l].weight_count(), T(0));
        model.biases[l].assign(model.layers[l].bias_count(), T(0));
    }
    return model;
}

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
template <typename T>
void init_weights(Model<T>& model, std::uint64_t seed) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& spec = model.layers[l];
        const int receptive = spec.is_conv() ? kKernel * kKernel * kKernel : 1;
        const double fan_in = static_cast<double>(spec.in_channels) * receptive;
        const double fan_out = static_cast<double>(spec.out_channels) * receptive;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(mix_seed(seed, l));
        for (auto& w : model.weights[l]) w = static_cast<T>(rng.uniform(-limit, limit));
        for (auto& b : model.biases[l]) b = T(0);
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace detail {

// Loop bounds such that iz = oz*stride + k - kPad stays inside [0, n).
inline void kernel_bounds(int k, int stride, int n_in, int n_out, int& lo, int& hi) {
    lo = (k >= kPad) ? 0 : (stride == 1 ? kPad - k : (kPad - k + stride - 1) / stride);
    const int num = n_in - k;  // oz*stride <= n_in - k
    const int max_from_input = num >= 0 ? num / stride : -1;
    hi = std::min(n_out - 1, max_from_input);
}

template <typename T>
void check_finite_params(const std::vector<T>& weights, const std::vector<T>& biases) {
    for (const T& w : weights)
        if (!std::isfinite(static_cast<double>(w)))
            throw std::invalid_argument("conv3d: non-finite weight in model");
    for (const T& b : biases)
        if (!std::isfinite(static_cast<double>(b)))
            throw std::invalid_argument("conv3d: non-finite bias in model");
}

} // namespace detail

/// 3x3x3 convolution with zero padding 1 and stride from the spec. The inner
/// loop is a shifted row accumulation so the x axis vectorizes; sums are
/// accumulated in double and stored back in T.
template <typename T>
Tensor4<T> conv3d_forward(const Tensor4<T>& input, const LayerSpec& spec,
                          const std::vector<T>& weights, const std::vector<T>& biases) {
    if (!spec.is_conv())
        throw std::invalid_argument("conv3d_forward: layer is not convolutional");
    if (input.channels != spec.in_channels)
        throw std::invalid_argument("conv3d_forward: input channel mismatch");
    if (weights.size() != spec.weight_count() || biases.size() != spec.bias_count())
        throw std::invalid_argument("conv3d_forward: parameter size mismatch");
    detail::check_finite_params(weights, biases);

    const int s = spec.stride;
    const int onx = conv_out_extent(input.nx, s);
    const int ony = conv_out_extent(input.ny, s);
    const int onz = conv_out_extent(input.nz, s);
    Tensor4<T> output(spec.out_channels, onx, ony, onz);

    std::vector<double> scratch(static_cast<std::size_t>(onx) * ony * onz);
    const std::size_t in_plane = static_cast<std::size_t>(input.nx) * input.ny;
    const std::size_t out_plane = static_cast<std::size_t>(onx) * ony;

    for (int oc = 0; oc < spec.out_channels; ++oc) {
        std::fill(scratch.begin(), scratch.end(), static_cast<double>(biases[oc]));
        for (int ic = 0; ic < spec.in_channels; ++ic) {
            const T* in_ch = input.channel_data(ic);
            const T* w_base = weights.data() +
                (static_cast<std::size_t>(oc) * spec.in_channels + ic) * 27;
            for (int kz = 0; kz < kKernel; ++kz) {
                int oz_lo, oz_hi;
                detail::kernel_bounds(kz, s, input.nz, onz, oz_lo, oz_hi);
                for (int ky = 0; ky < kKernel; ++ky) {
                    int oy_lo, oy_hi;
                    detail::kernel_bounds(ky, s, input.ny, ony, oy_lo, oy_hi);
                    for (int kx = 0; kx < kKernel; ++kx) {
                        int ox_lo, ox_hi;
                        detail::kernel_bounds(kx, s, input.nx, onx, ox_lo, ox_hi);
                        const double w = static_cast<double>(w_base[(kz * 3 + ky) * 3 + kx]);
                        for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                            const int iz = oz * s + kz - kPad;
                            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                const int iy = oy * s + ky - kPad;
                                const T* in_row = in_ch + iz * in_plane +
                                    static_cast<std::size_t>(iy) * input.nx;
                                double* out_row = scratch.data() + oz * out_plane +
                                    static_cast<std::size_t>(oy) * onx;
                                if (s == 1) {
                                    const T* shifted = in_row + (kx - kPad);
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                        out_row[ox] += w * static_cast<double>(shifted[ox]);
                                } else {
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                        out_row[ox] += w *
                                            static_cast<double>(in_row[ox * 2 + kx - kPad]);
                                }
                            }
                        }
                    }
                }
            }
        }
        T* out_ch = output.channel_data(oc);
        for (std::size_t i = 0; i < scratch.size(); ++i)
            out_ch[i] = static_cast<T>(scratch[i]);
    }
    return output;
}

template <typename T>
Tensor4<T> dense_forward(const Tensor4<T>& input, const LayerSpec& spec,
                         const std::vector<T>& weights, const std::vector<T>& biases) {
    if (static_cast<int>(input.size()) != spec.in_channels)
        throw std::invalid_argument("dense_forward: flattened input size mismatch");
    detail::check_finite_params(weights, biases);
    Tensor4<T> output(spec.out_channels, 1, 1, 1);
    for (int o = 0; o < spec.out_channels; ++o) {
        double acc = static_cast<double>(biases[o]);
        const T* w_row = weights.data() + static_cast<std::size_t>(o) * spec.in_channels;
        for (int i = 0; i < spec.in_channels; ++i)
            acc += static_cast<double>(w_row[i]) * static_cast<double>(input.values[i]);
        output.values[o] = static_cast<T>(acc);
    }
    return output;
}

template <typename T>
void relu_inplace(Tensor4<T>& t) {
    for (auto& v : t.values)
        if (v < T(0)) v = T(0);
}

/// Numerically shifted softmax over a flat vector, computed in double.
template <typename T>
std::vector<double> softmax(const std::vector<T>& logits) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const T& v : logits) max_logit = std::max(max_logit, static_cast<double>(v));
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits[i]) - max_logit);
        total += probs[i];
    }
    for (auto& p : probs) p /= total;
    return probs;
}

/// Per-layer activation record kept for gradient and relevance passes:
/// the input seen by each layer and its pre-activation response.
template <typename T>
struct Trace {
    std::vector<Tensor4<T>> inputs;
    std::vector<Tensor4<T>> preacts;
};

template <typename T>
struct ForwardResult {
    std::vector<double> probs;   // softmax output, sums to 1
    std::vector<double> logits;  // final pre-activation scores
    Trace<T> trace;
};

template <typename T>
Tensor4<T> flatten(Tensor4<T> t) {
    const int total = static_cast<int>(t.size());
    t.channels = total;
    t.nx = t.ny = t.nz = 1;
    return t;
}

template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Volume& image) {
    if (model.input_nx > 0 &&
        (image.nx != model.input_nx || image.ny != model.input_ny ||
         image.nz != model.input_nz))
        throw std::invalid_argument("forward: image dims do not match model input dims");

    ForwardResult<T> result;
    Tensor4<T> current = Tensor4<T>::from_volume(image);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LayerSpec& spec = model.layers[l];
        if (!spec.is_conv() && current.nx * current.ny * current.nz != 1)
            current = flatten(std::move(current));
        result.trace.inputs.push_back(current);
        Tensor4<T> pre = spec.is_conv()
            ? conv3d_forward(current, spec, model.weights[l], model.biases[l])
            : dense_forward(current, spec, model.weights[l], model.biases[l]);
        result.trace.preacts.push_back(pre);
        if (spec.activation == Activation::relu) relu_inplace(pre);
        current = std::move(pre);
    }

    const Tensor4<T>& out = result.trace.preacts.back();
    result.logits.assign(out.values.begin(), out.values.end());
    std::vector<T> logit_t(out.values.begin(), out.values.end());
    result.probs = softmax(logit_t);
    return result;
}

// ---------------------------------------------------------------------------
// Backward (reverse-mode, softmax+cross-entropy fused at the output)
// ---------------------------------------------------------------------------

template <typename T>
struct Gradients {
    std::vector<std::vector<T>> weights;
    std::vector<std::vector<T>> biases;

    void accumulate(const Gradients& other) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i)
                weights[l][i] += other.weights[l][i];
            for (std::size_t i = 0; i < biases[l].size(); ++i)
                biases[l][i] += other.biases[l][i];
        }
    }

    void scale(T factor) {
        for (auto& layer : weights)
            for (auto& g : layer) g *= factor;
        for (auto& layer : biases)
            for (auto& g : layer) g *= factor;
    }
};

template <typename T>
Gradients<T> zero_gradients(const Model<T>& model) {
    Gradients<T> grads;
    grads.weights.resize(model.layers.size());
    grads.biases.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        grads.weights[l].assign(model.layers[l].weight_count(), T(0));
        grads.biases[l].assign(model.layers[l].bias_count(), T(0));
    }
    return grads;
}

namespace detail {

// delta: gradient w.r.t. the conv pre-activation. Produces parameter
// gradients and the gradient w.r.t. the layer input.
template <typename T>
Tensor4<double> conv3d_backward(const Tensor4<T>& input, const LayerSpec& spec,
                                const std::vector<T>& weights,
                                const Tensor4<double>& delta,
                                std::vector<T>& w_grad, std::vector<T>& b_grad) {
    const int s = spec.stride;
    const int onx = delta.nx, ony = delta.ny, onz = delta.nz;
    Tensor4<double> input_grad(spec.in_channels, input.nx, input.ny, input.nz);
    const std::size_t in_plane = static_cast<std::size_t>(input.nx) * input.ny;
    const std::size_t out_plane = static_cast<std::size_t>(onx) * ony;

    for (int oc = 0; oc < spec.out_channels; ++oc) {
        const double* d_ch = delta.channel_data(oc);
        double bias_acc = 0.0;
        for (std::size_t i = 0; i < delta.spatial_size(); ++i) bias_acc += d_ch[i];
        b_grad[oc] += static_cast<T>(bias_acc);

        for (int ic = 0; ic < spec.in_channels; ++ic) {
            const T* in_ch = input.channel_data(ic);
            double* g_ch = input_grad.channel_data(ic);
            const std::size_t w_off =
                (static_cast<std::size_t>(oc) * spec.in_channels + ic) * 27;
            for (int kz = 0; kz < kKernel; ++kz) {
                int oz_lo, oz_hi;
                kernel_bounds(kz, s, input.nz, onz, oz_lo, oz_hi);
                for (int ky = 0; ky < kKernel; ++ky) {
                    int oy_lo, oy_hi;
                    kernel_bounds(ky, s, input.ny, ony, oy_lo, oy_hi);
                    for (int kx = 0; kx < kKernel; ++kx) {
                        int ox_lo, ox_hi;
                        kernel_bounds(kx, s, input.nx, onx, ox_lo, ox_hi);
                        const double w =
                            static_cast<double>(weights[w_off + (kz * 3 + ky) * 3 + kx]);
                        double wg = 0.0;
                        for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                            const int iz = oz * s + kz - kPad;
                            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                const int iy = oy * s + ky - kPad;
                                const T* in_row = in_ch + iz * in_plane +
                                    static_cast<std::size_t>(iy) * input.nx;
                                double* g_row = g_ch + iz * in_plane +
                                    static_cast<std::size_t>(iy) * input.nx;
                                const double* d_row = d_ch + oz * out_plane +
                                    static_cast<std::size_t>(oy) * onx;
                                if (s == 1) {
                                    const int shift = kx - kPad;
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                        const double d = d_row[ox];
                                        wg += d * static_cast<double>(in_row[ox + shift]);
                                        g_row[ox + shift] += w * d;
                                    }
                                } else {
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                        const int ix = ox * 2 + kx - kPad;
                                        const double d = d_row[ox];
                                        wg += d * static_cast<double>(in_row[ix]);
                                        g_row[ix] += w * d;
                                    }
                                }
                            }
                        }
                        w_grad[w_off + (kz * 3 + ky) * 3 + kx] += static_cast<T>(wg);
                    }
                }
            }
        }
    }
    return input_grad;
}

template <typename T>
Tensor4<double> dense_backward(const Tensor4<T>& input, const LayerSpec& spec,
                               const std::vector<T>& weights,
                               const Tensor4<double>& delta,
                               std::vector<T>& w_grad, std::vector<T>& b_grad) {
    Tensor4<double> input_grad(spec.in_channels, 1, 1, 1);
    for (int o = 0; o < spec.out_channels; ++o) {
        const double d = delta.values[o];
        b_grad[o] += static_cast<T>(d);
        const T* w_row = weights.data() + static_cast<std::size_t>(o) * spec.in_channels;
        T* g_row = w_grad.data() + static_cast<std::size_t>(o) * spec.in_channels;
        for (int i = 0; i < spec.in_channels; ++i) {
            g_row[i] += static_cast<T>(d * static_cast<double>(input.values[i]));
            input_grad.values[i] += static_cast<double>(w_row[i]) * d;
        }
    }
    return input_grad;
}

} // namespace detail

/// Gradients of the cross-entropy loss (softmax fused) for one image.
/// The trace must come from forward() on the same model.
template <typename T>
Gradients<T> backward(const Model<T>& model, const Trace<T>& trace, int label) {
    const std::size_t n_layers = model.layers.size();
    if (trace.inputs.size() != n_layers || trace.preacts.size() != n_layers)
        throw std::invalid_argument("backward: trace does not match model layer count");
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerSpec& spec = model.layers[l];
        const bool input_ok = spec.is_conv()
            ? trace.inputs[l].channels == spec.in_channels
            : trace.inputs[l].size() == static_cast<std::size_t>(spec.in_channels);
        if (!input_ok || trace.preacts[l].channels != spec.out_channels)
            throw std::invalid_argument("backward: stale trace (shape mismatch)");
    }
    if (label != 0 && label != 1)
        throw std::invalid_argument("backward: label must be 0 or 1");

    Gradients<T> grads = zero_gradients(model);

    // dL/dlogit = p - onehot(label)
    const auto& logits = trace.preacts.back();
    std::vector<T> logit_copy(logits.values.begin(), logits.values.end());
    const std::vector<double> probs = softmax(logit_copy);
    Tensor4<double> delta(static_cast<int>(probs.size()), 1, 1, 1);
    for (std::size_t k = 0; k < probs.size(); ++k)
        delta.values[k] = probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0);

    for (std::size_t li = n_layers; li-- > 0;) {
        const LayerSpec& spec = model.layers[li];
        Tensor4<double> input_grad = spec.is_conv()
            ? detail::conv3d_backward(trace.inputs[li], spec, model.weights[li], delta,
                                      grads.weights[li], grads.biases[li])
            : detail::dense_backward(trace.inputs[li], spec, model.weights[li], delta,
                                     grads.weights[li], grads.biases[li]);
        if (li == 0) break;
        // Route through the previous layer's activation; hidden layers are ReLU.
        const Tensor4<T>& prev_pre = trace.preacts[li - 1];
        if (input_grad.size() != prev_pre.size())
            throw std::invalid_argument("backward: stale trace (shape mismatch)");
        delta = Tensor4<double>(prev_pre.channels, prev_pre.nx, prev_pre.ny, prev_pre.nz);
        if (model.layers[li - 1].activation == Activation::relu) {
            for (std::size_t i = 0; i < prev_pre.size(); ++i)
                delta.values[i] = prev_pre.values[i] > T(0) ? input_grad.values[i] : 0.0;
        } else {
            for (std::size_t i = 0; i < prev_pre.size(); ++i)
                delta.values[i] = input_grad.values[i];
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint format SPM1: magic "SPM1", u32 layer count, per layer
// (kind u8, in u32, out u32, stride u8), then per layer the weights followed
// by the biases as little-endian f32.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const Model<float>& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write("SPM1", 4);
    const std::uint32_t count = static_cast<std::uint32_t>(model.layers.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& spec : model.layers) {
        const std::uint8_t kind = static_cast<std::uint8_t>(spec.kind);
        const std::uint32_t in_ch = static_cast<std::uint32_t>(spec.in_channels);
        const std::uint32_t out_ch = static_cast<std::uint32_t>(spec.out_channels);
        const std::uint8_t stride = static_cast<std::uint8_t>(spec.stride);
        out.write(reinterpret_cast<const char*>(&kind), 1);
        out.write(reinterpret_cast<const char*>(&in_ch), 4);
        out.write(reinterpret_cast<const char*>(&out_ch), 4);
        out.write(reinterpret_cast<const char*>(&stride), 1);
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        out.write(reinterpret_cast<const char*>(model.weights[l].data()),
                  static_cast<std::streamsize>(model.weights[l].size() * 4));
        out.write(reinterpret_cast<const char*>(model.biases[l].data()),
                  static_cast<std::streamsize>(model.biases[l].size() * 4));
    }
    if (!out) throw std::runtime_error("save_checkpoint: short write to " + path);
}

inline Model<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "SPM1")
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    if (!in || count == 0 || count > 1024)
        throw std::runtime_error("load_checkpoint: implausible layer count");

    Model<float> model;
    for (std::uint32_t l = 0; l < count; ++l) {
        std::uint8_t kind = 0, stride = 0;
        std::uint32_t in_ch = 0, out_ch = 0;
        in.read(reinterpret_cast<char*>(&kind), 1);
        in.read(reinterpret_cast<char*>(&in_ch), 4);
        in.read(reinterpret_cast<char*>(&out_ch), 4);
        in.read(reinterpret_cast<char*>(&stride), 1);
        if (!in) throw std::runtime_error("load_checkpoint: truncated layer table");
        if (kind > 2) throw std::runtime_error("load_checkpoint: unknown layer kind");
        LayerSpec spec;
        spec.kind = static_cast<LayerKind>(kind);
        spec.in_channels = static_cast<int>(in_ch);
        spec.out_channels = static_cast<int>(out_ch);
        spec.stride = static_cast<int>(stride);
        spec.activation = spec.is_conv() ? Activation::relu
                         : (l + 1 == count ? Activation::softmax : Activation::relu);
        model.layers.push_back(spec);
    }
    validate_spec(model.layers);
    model.input_channels = model.layers.front().in_channels;
    for (const auto& spec : model.layers) {
        std::vector<float> w(spec.weight_count());
        std::vector<float> b(spec.bias_count());
        in.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(w.size() * 4));
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * 4));
        if (!in) throw std::runtime_error("load_checkpoint: truncated parameters");
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

} // namespace cleverscan::net
