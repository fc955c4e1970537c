#pragma once

// Adam training of the classifier on labeled volumes: binary cross entropy
// on the softmax output, shuffled mini-batches, per-epoch curves, and the
// non-positive bias constraint applied after every update.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cleverscan/net.hpp"
#include "cleverscan/rng.hpp"
#include "cleverscan/volume.hpp"

namespace cleverscan::net {

/// -log p(true class), clamped at 1e-12.
inline double bce_loss(const std::vector<double>& probs, int label) {
    if (label != 0 && label != 1)
        throw std::invalid_argument("bce_loss: label must be 0 or 1");
    if (probs.size() != 2)
        throw std::invalid_argument("bce_loss: expected two class probabilities");
    const double p = std::max(probs[static_cast<std::size_t>(label)], 1e-12);
    return -std::log(p);
}

struct Hyperparams {
    int epochs = 30;
    int batch = 20;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter first/second moments; moments are kept in double regardless
/// of the model's storage type.
struct AdamState {
    std::int64_t t = 0;
    std::vector<std::vector<double>> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;

    template <typename T>
    static AdamState for_model(const Model<T>& model) {
        AdamState state;
        state.m_weights.resize(model.layers.size());
        state.v_weights.resize(model.layers.size());
        state.m_biases.resize(model.layers.size());
        state.v_biases.resize(model.layers.size());
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            state.m_weights[l].assign(model.layers[l].weight_count(), 0.0);
            state.v_weights[l].assign(model.layers[l].weight_count(), 0.0);
            state.m_biases[l].assign(model.layers[l].bias_count(), 0.0);
            state.v_biases[l].assign(model.layers[l].bias_count(), 0.0);
        }
        return state;
    }
};

namespace detail {

template <typename T>
void adam_update(std::vector<T>& params, const std::vector<T>& grads,
                 std::vector<double>& m, std::vector<double>& v,
                 const Hyperparams& hp, double bc1, double bc2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] = static_cast<T>(static_cast<double>(params[i]) -
                                   hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps));
    }
}

} // namespace detail

/// One Adam step over all parameters, followed by the bias clamp b = min(b, 0).
template <typename T>
void adam_step(Model<T>& model, const Gradients<T>& grads, AdamState& state,
               const Hyperparams& hp) {
    if (hp.lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        detail::adam_update(model.weights[l], grads.weights[l], state.m_weights[l],
                            state.v_weights[l], hp, bc1, bc2);
        detail::adam_update(model.biases[l], grads.biases[l], state.m_biases[l],
                            state.v_biases[l], hp, bc1, bc2);
        for (auto& b : model.biases[l])
            if (b > T(0)) b = T(0);
    }
}

struct TrainCurves {
    std::vector<double> train_loss, train_acc, val_loss, val_acc;
};

/// Reference to one preprocessed labeled image; the volume is owned elsewhere.
struct LabeledImage {
    std::string id;
    int label = 0;  // 0 = NC, 1 = AD (AD is the positive class)
    const Volume* image = nullptr;
};

struct Prediction {
    std::string image_id;
    int true_label = 0;
    int predicted = 0;
    double score1 = 0.0;  // class-1 (AD) probability
};

struct TrainResult {
    Model<float> model;
    TrainCurves curves;
    std::vector<Prediction> test_predictions;
    bool hit_non_finite = false;
};

namespace detail {

inline void evaluate(const Model<float>& model, const std::vector<LabeledImage>& images,
                     double& loss_out, double& acc_out) {
    double loss = 0.0;
    int correct = 0;
    for (const auto& item : images) {
        const auto fwd = forward(model, *item.image);
        loss += bce_loss(fwd.probs, item.label);
        const int pred = fwd.probs[1] > fwd.probs[0] ? 1 : 0;
        if (pred == item.label) ++correct;
    }
    loss_out = loss / static_cast<double>(images.size());
    acc_out = static_cast<double>(correct) / static_cast<double>(images.size());
}

} // namespace detail

/// Trains a fresh classifier. Deterministic given (init_seed, shuffle_seed)
/// and fixed input order. A non-finite loss stops training and flags the
/// result instead of aborting.
inline TrainResult train(const std::vector<LabeledImage>& train_set,
                         const std::vector<LabeledImage>& val_set,
                         const std::vector<LabeledImage>& test_set,
                         int nx, int ny, int nz, const Hyperparams& hp,
                         std::uint64_t init_seed, std::uint64_t shuffle_seed) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: empty train or validation set");
    if (hp.batch <= 0 || hp.batch > static_cast<int>(train_set.size()))
        throw std::invalid_argument("train: batch size must be in [1, train size]");
    if (hp.epochs <= 0) throw std::invalid_argument("train: epochs must be positive");

    TrainResult result;
    result.model = make_classifier<float>(nx, ny, nz);
    init_weights(result.model, init_seed);
    AdamState state = AdamState::for_model(result.model);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int n_batches = static_cast<int>(train_set.size()) / hp.batch;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        int epoch_correct = 0, epoch_seen = 0;
        for (int b = 0; b < n_batches && !result.hit_non_finite; ++b) {
            Gradients<float> batch_grads = zero_gradients(result.model);
            double batch_loss = 0.0;
            for (int k = 0; k < hp.batch; ++k) {
                const LabeledImage& item = train_set[order[b * hp.batch + k]];
                const auto fwd = forward(result.model, *item.image);
                batch_loss += bce_loss(fwd.probs, item.label);
                const int pred = fwd.probs[1] > fwd.probs[0] ? 1 : 0;
                if (pred == item.label) ++epoch_correct;
                ++epoch_seen;
                batch_grads.accumulate(backward(result.model, fwd.trace, item.label));
            }
            batch_loss /= hp.batch;
            if (!std::isfinite(batch_loss)) {
                result.hit_non_finite = true;
                break;
            }
            batch_grads.scale(1.0f / static_cast<float>(hp.batch));
            adam_step(result.model, batch_grads, state, hp);
            epoch_loss += batch_loss;
        }

        if (result.hit_non_finite) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            while (static_cast<int>(result.curves.train_loss.size()) < hp.epochs) {
                result.curves.train_loss.push_back(nan);
                result.curves.train_acc.push_back(nan);
                result.curves.val_loss.push_back(nan);
                result.curves.val_acc.push_back(nan);
            }
            break;
        }

        result.curves.train_loss.push_back(epoch_loss / std::max(1, n_batches));
        result.curves.train_acc.push_back(
            epoch_seen > 0 ? static_cast<double>(epoch_correct) / epoch_seen : 0.0);
        double val_loss = 0.0, val_acc = 0.0;
        detail::evaluate(result.model, val_set, val_loss, val_acc);
        result.curves.val_loss.push_back(val_loss);
        result.curves.val_acc.push_back(val_acc);
    }

    for (const auto& item : test_set) {
        const auto fwd = forward(result.model, *item.image);
        Prediction p;
        p.image_id = item.id;
        p.true_label = item.label;
        p.predicted = fwd.probs[1] > fwd.probs[0] ? 1 : 0;
        p.score1 = fwd.probs[1];
        result.test_predictions.push_back(p);
    }
    return result;
}

} // namespace cleverscan::net
