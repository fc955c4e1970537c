#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cleverscan/train.hpp"

using namespace cleverscan;
using namespace cleverscan::net;

namespace {

// Two-class set of 8^3 volumes, linearly separable by mean intensity.
struct ToySet {
    std::vector<Volume> storage;
    std::vector<LabeledImage> train, val, test;

    ToySet(int n_per_class, int n_val_per_class, int n_test_per_class,
           std::uint64_t seed, double mean0 = 0.3, double mean1 = 0.7) {
        Rng rng(seed);
        const int total = 2 * (n_per_class + n_val_per_class + n_test_per_class);
        storage.reserve(total);
        auto make = [&](int label) -> LabeledImage {
            Volume v(8, 8, 8);
            const double mean = label == 0 ? mean0 : mean1;
            for (auto& x : v.voxels)
                x = static_cast<float>(std::max(0.0, rng.normal(mean, 0.05)));
            storage.push_back(std::move(v));
            return {"img" + std::to_string(storage.size()), label, &storage.back()};
        };
        for (int i = 0; i < n_per_class; ++i) {
            train.push_back(make(0));
            train.push_back(make(1));
        }
        for (int i = 0; i < n_val_per_class; ++i) {
            val.push_back(make(0));
            val.push_back(make(1));
        }
        for (int i = 0; i < n_test_per_class; ++i) {
            test.push_back(make(0));
            test.push_back(make(1));
        }
    }
};

} // namespace

TEST_CASE("bce_loss analytic values", "[train]") {
    CHECK(bce_loss({0.0, 1.0}, 1) == Catch::Approx(0.0).margin(1e-12));
    CHECK(bce_loss({0.5, 0.5}, 0) == Catch::Approx(0.693147).margin(1e-6));
    const double e_inv = std::exp(-1.0);
    CHECK(bce_loss({e_inv, 1.0 - e_inv}, 0) == Catch::Approx(1.0).margin(1e-6));
    // clamp keeps a zero score finite
    CHECK(std::isfinite(bce_loss({0.0, 1.0}, 0)));
}

TEST_CASE("single Adam step matches the closed form", "[train]") {
    Model<double> model;
    model.layers.push_back({LayerKind::dense, 1, 1, 1, Activation::none});
    model.weights.push_back({1.0});
    model.biases.push_back({-1.0});
    auto state = AdamState::for_model(model);
    Hyperparams hp;
    hp.lr = 1e-3;

    Gradients<double> grads;
    grads.weights.push_back({2.0});
    grads.biases.push_back({0.0});
    adam_step(model, grads, state, hp);

    // t=1: m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    const double expected_step = 1e-3 * 2.0 / (2.0 + 1e-8);
    CHECK(model.weights[0][0] == Catch::Approx(1.0 - expected_step).margin(1e-12));
    CHECK(std::abs((1.0 - model.weights[0][0]) - 9.99999996e-4) < 1e-11);
    CHECK(state.t == 1);
}

TEST_CASE("zero gradients leave parameters unchanged", "[train]") {
    Model<float> model;
    model.layers.push_back({LayerKind::dense, 2, 1, 1, Activation::none});
    model.weights.push_back({0.5f, -0.25f});
    model.biases.push_back({-0.125f});
    auto state = AdamState::for_model(model);
    Gradients<float> grads;
    grads.weights.push_back({0.0f, 0.0f});
    grads.biases.push_back({0.0f});
    adam_step(model, grads, state, Hyperparams{});
    CHECK(model.weights[0][0] == 0.5f);
    CHECK(model.weights[0][1] == -0.25f);
    CHECK(model.biases[0][0] == -0.125f);
}

TEST_CASE("bias clamp forces non-positive biases after the update", "[train]") {
    Model<float> model;
    model.layers.push_back({LayerKind::dense, 1, 1, 1, Activation::none});
    model.weights.push_back({1.0f});
    model.biases.push_back({0.5f});  // would stay positive without the clamp
    auto state = AdamState::for_model(model);
    Gradients<float> grads;
    grads.weights.push_back({0.0f});
    grads.biases.push_back({-1.0f});  // pushes the bias further up
    adam_step(model, grads, state, Hyperparams{});
    CHECK(model.biases[0][0] == 0.0f);
}

TEST_CASE("training on separable volumes converges", "[train][slow]") {
    ToySet data(20, 6, 6, 91);
    Hyperparams hp;
    hp.epochs = 30;
    hp.batch = 10;
    hp.lr = 1e-3;
    const auto result = train(data.train, data.val, data.test, 8, 8, 8, hp, 11, 22);
    REQUIRE_FALSE(result.hit_non_finite);
    REQUIRE(result.curves.train_acc.size() == 30);
    CHECK(result.curves.train_acc.back() >= 0.95);
    // bias constraint holds after the full run
    for (const auto& layer : result.model.biases)
        for (float b : layer) CHECK(b <= 0.0f);
}

TEST_CASE("identical seeds give bit-identical curves and weights", "[train][slow]") {
    ToySet data(10, 4, 4, 17);
    Hyperparams hp;
    hp.epochs = 5;
    hp.batch = 5;
    hp.lr = 1e-3;
    const auto a = train(data.train, data.val, data.test, 8, 8, 8, hp, 7, 13);
    const auto b = train(data.train, data.val, data.test, 8, 8, 8, hp, 7, 13);
    REQUIRE(a.curves.train_loss == b.curves.train_loss);
    REQUIRE(a.curves.val_acc == b.curves.val_acc);
    for (std::size_t l = 0; l < a.model.weights.size(); ++l)
        REQUIRE(a.model.weights[l] == b.model.weights[l]);
    // different init seed must change the outcome
    const auto c = train(data.train, data.val, data.test, 8, 8, 8, hp, 8, 13);
    CHECK(a.curves.train_loss != c.curves.train_loss);
}

TEST_CASE("permuted labels hover at chance on validation", "[train][slow]") {
    ToySet data(20, 15, 4, 23);
    // destroy the signal: reassign labels by a fixed permutation
    Rng rng(5);
    std::vector<int> labels;
    for (const auto& item : data.train) labels.push_back(item.label);
    rng.shuffle(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) data.train[i].label = labels[i];

    Hyperparams hp;
    hp.epochs = 12;
    hp.batch = 10;
    hp.lr = 1e-3;
    double acc_sum = 0.0;
    for (std::uint64_t seed : {100ULL, 200ULL}) {
        const auto result = train(data.train, data.val, data.test, 8, 8, 8, hp,
                                  seed, seed + 1);
        acc_sum += result.curves.val_acc.back();
    }
    CHECK(std::abs(acc_sum / 2.0 - 0.5) <= 0.12);
}

TEST_CASE("train rejects bad inputs", "[train]") {
    ToySet data(3, 2, 2, 3);
    Hyperparams hp;
    hp.batch = 100;  // larger than the train set
    CHECK_THROWS_AS(train(data.train, data.val, data.test, 8, 8, 8, hp, 1, 2),
                    std::invalid_argument);
    std::vector<LabeledImage> empty;
    CHECK_THROWS_AS(train(empty, data.val, data.test, 8, 8, 8, Hyperparams{}, 1, 2),
                    std::invalid_argument);
}
