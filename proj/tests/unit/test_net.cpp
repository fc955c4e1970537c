#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cleverscan/net.hpp"
#include "cleverscan/train.hpp"

using namespace cleverscan;
using namespace cleverscan::net;

namespace {

// Reference convolution: voxel-by-voxel direct summation with explicit
// zero-padding guards. Deliberately structured unlike the production kernel.
template <typename T>
Tensor4<T> conv3d_reference(const Tensor4<T>& in, const LayerSpec& spec,
                            const std::vector<T>& w, const std::vector<T>& b) {
    const int s = spec.stride;
    const int onx = conv_out_extent(in.nx, s);
    const int ony = conv_out_extent(in.ny, s);
    const int onz = conv_out_extent(in.nz, s);
    Tensor4<T> out(spec.out_channels, onx, ony, onz);
    for (int oc = 0; oc < spec.out_channels; ++oc)
        for (int oz = 0; oz < onz; ++oz)
            for (int oy = 0; oy < ony; ++oy)
                for (int ox = 0; ox < onx; ++ox) {
                    double acc = static_cast<double>(b[oc]);
                    for (int ic = 0; ic < spec.in_channels; ++ic)
                        for (int kz = 0; kz < 3; ++kz)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int ix = ox * s + kx - 1;
                                    const int iy = oy * s + ky - 1;
                                    const int iz = oz * s + kz - 1;
                                    if (ix < 0 || ix >= in.nx || iy < 0 ||
                                        iy >= in.ny || iz < 0 || iz >= in.nz)
                                        continue;
                                    const std::size_t wi =
                                        ((static_cast<std::size_t>(oc) * spec.in_channels +
                                          ic) * 3 + kz) * 9 + ky * 3 + kx;
                                    acc += static_cast<double>(w[wi]) *
                                           static_cast<double>(in.at(ic, ix, iy, iz));
                                }
                    out.at(oc, ox, oy, oz) = static_cast<T>(acc);
                }
    return out;
}

template <typename T>
Tensor4<T> random_tensor(int c, int nx, int ny, int nz, Rng& rng) {
    Tensor4<T> t(c, nx, ny, nz);
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return t;
}

double loss_of(const Model<double>& model, const Volume& image, int label) {
    const auto fwd = forward(model, image);
    return bce_loss(fwd.probs, label);
}

} // namespace

TEST_CASE("conv3d all-ones 3x3x3 input sums the full kernel at the center", "[net]") {
    Tensor4<float> in(1, 3, 3, 3, 1.0f);
    LayerSpec spec{LayerKind::conv3d, 1, 1, 1, Activation::none};
    std::vector<float> w(27, 1.0f), b(1, 0.0f);
    const auto out = conv3d_forward(in, spec, w, b);
    CHECK(out.at(0, 1, 1, 1) == Catch::Approx(27.0));
    // corner sees only the 2x2x2 overlap
    CHECK(out.at(0, 0, 0, 0) == Catch::Approx(8.0));
}

TEST_CASE("conv3d identity kernel reproduces the input", "[net]") {
    Rng rng(42);
    auto in = random_tensor<float>(1, 4, 5, 3, rng);
    LayerSpec spec{LayerKind::conv3d, 1, 1, 1, Activation::none};
    std::vector<float> w(27, 0.0f), b(1, 0.0f);
    w[(1 * 3 + 1) * 3 + 1] = 1.0f;  // center tap
    const auto out = conv3d_forward(in, spec, w, b);
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(out.values[i] == Catch::Approx(in.values[i]).margin(1e-6));
}

TEST_CASE("strided conv output extents follow floor((n-1)/2)+1", "[net]") {
    CHECK(conv_out_extent(160, 2) == 80);
    CHECK(conv_out_extent(16, 2) == 8);
    CHECK(conv_out_extent(3, 2) == 2);
    CHECK(conv_out_extent(2, 2) == 1);
    CHECK(conv_out_extent(1, 2) == 1);
    CHECK(conv_out_extent(7, 1) == 7);
}

TEST_CASE("conv3d matches the direct-summation reference", "[net]") {
    Rng rng(7);
    for (int stride : {1, 2}) {
        for (int trial = 0; trial < 4; ++trial) {
            const int ic = 1 + static_cast<int>(rng.below(3));
            const int oc = 1 + static_cast<int>(rng.below(3));
            const int nx = 2 + static_cast<int>(rng.below(6));
            const int ny = 2 + static_cast<int>(rng.below(6));
            const int nz = 2 + static_cast<int>(rng.below(6));
            LayerSpec spec{stride == 1 ? LayerKind::conv3d : LayerKind::conv3d_strided,
                           ic, oc, stride, Activation::none};
            auto in = random_tensor<float>(ic, nx, ny, nz, rng);
            std::vector<float> w(spec.weight_count()), b(spec.bias_count());
            for (auto& v : w) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            for (auto& v : b) v = static_cast<float>(rng.uniform(-1.0, 0.0));
            const auto got = conv3d_forward(in, spec, w, b);
            const auto want = conv3d_reference(in, spec, w, b);
            REQUIRE(got.same_shape(want));
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(got.values[i] == Catch::Approx(want.values[i]).margin(1e-4));
        }
    }
}

TEST_CASE("conv3d rejects shape mismatches and non-finite weights", "[net]") {
    Tensor4<float> in(2, 3, 3, 3, 1.0f);
    LayerSpec spec{LayerKind::conv3d, 1, 1, 1, Activation::none};
    std::vector<float> w(27, 1.0f), b(1, 0.0f);
    CHECK_THROWS_AS(conv3d_forward(in, spec, w, b), std::invalid_argument);

    Tensor4<float> ok(1, 3, 3, 3, 1.0f);
    w[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(conv3d_forward(ok, spec, w, b), std::invalid_argument);
}

TEST_CASE("softmax of equal logits gives (0.5, 0.5); zero model too", "[net]") {
    const auto probs = softmax(std::vector<double>{0.0, 0.0});
    CHECK(probs[0] == Catch::Approx(0.5));
    CHECK(probs[1] == Catch::Approx(0.5));

    auto model = make_classifier<float>(8, 8, 8);  // all-zero weights and biases
    Volume image(8, 8, 8, 1.0, 0.37f);
    const auto fwd = forward(model, image);
    CHECK(fwd.probs[0] == Catch::Approx(0.5).margin(1e-9));
    CHECK(fwd.probs[1] == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("forward scores are probabilities and match a per-layer replay", "[net]") {
    auto model = make_classifier<float>(8, 6, 7);
    init_weights(model, 99);
    Rng rng(3);
    Volume image(8, 6, 7);
    for (auto& v : image.voxels) v = static_cast<float>(rng.uniform(0.0, 1.0));

    const auto fwd = forward(model, image);
    CHECK(fwd.probs[0] + fwd.probs[1] == Catch::Approx(1.0).margin(1e-6));
    CHECK(fwd.probs[0] > 0.0);
    CHECK(fwd.probs[0] < 1.0);

    // replay layer by layer through the standalone ops
    Tensor4<float> cur = Tensor4<float>::from_volume(image);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& spec = model.layers[l];
        if (!spec.is_conv()) cur = flatten(std::move(cur));
        Tensor4<float> pre = spec.is_conv()
            ? conv3d_reference(cur, spec, model.weights[l], model.biases[l])
            : dense_forward(cur, spec, model.weights[l], model.biases[l]);
        if (spec.activation == Activation::relu) relu_inplace(pre);
        cur = std::move(pre);
    }
    const auto probs = softmax(cur.values);
    CHECK(fwd.probs[0] == Catch::Approx(probs[0]).margin(1e-5));

    Volume wrong(7, 6, 7);
    CHECK_THROWS_AS(forward(model, wrong), std::invalid_argument);
}

TEST_CASE("dense softmax-BCE gradient matches the closed form", "[net]") {
    // single dense layer y = W x, two outputs; dL/dW[o][i] = (p_o - 1{o=l}) x_i
    Model<double> model;
    model.layers.push_back({LayerKind::dense, 3, 2, 1, Activation::softmax});
    model.weights.push_back({0.2, -0.4, 0.7, -0.1, 0.3, 0.05});
    model.biases.push_back({0.0, 0.0});
    model.input_nx = 3;
    model.input_ny = 1;
    model.input_nz = 1;

    Volume x(3, 1, 1);
    x.voxels = {1.0f, 2.0f, -0.5f};
    const auto fwd = forward(model, x);
    const auto grads = backward(model, fwd.trace, 1);

    for (int o = 0; o < 2; ++o) {
        const double factor = fwd.probs[o] - (o == 1 ? 1.0 : 0.0);
        for (int i = 0; i < 3; ++i)
            CHECK(grads.weights[0][o * 3 + i] ==
                  Catch::Approx(factor * x.voxels[i]).margin(1e-9));
        CHECK(grads.biases[0][o] == Catch::Approx(factor).margin(1e-9));
    }
}

TEST_CASE("gradients vanish when the prediction saturates at the truth", "[net]") {
    Model<double> model;
    model.layers.push_back({LayerKind::dense, 2, 2, 1, Activation::softmax});
    model.weights.push_back({40.0, 0.0, -40.0, 0.0});  // logit gap ~80
    model.biases.push_back({0.0, 0.0});
    Volume x(2, 1, 1);
    x.voxels = {1.0f, 1.0f};
    const auto fwd = forward(model, x);
    const auto grads = backward(model, fwd.trace, 0);
    for (double g : grads.weights[0]) CHECK(std::abs(g) < 1e-9);
}

TEST_CASE("analytic gradients match central finite differences", "[net]") {
    // small full-architecture model in double precision
    auto model = make_classifier<double>(5, 4, 6, /*conv_channels=*/2,
                                         /*hidden_units=*/3);
    init_weights(model, 1234);
    // negative biases exercise the clamped regime and keep ReLUs off kinks
    for (auto& layer : model.biases)
        for (auto& b : layer) b = -0.01;

    Rng rng(55);
    Volume image(5, 4, 6);
    for (auto& v : image.voxels) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const int label = 1;

    const auto fwd = forward(model, image);
    const auto grads = backward(model, fwd.trace, label);

    const double h = 1e-4;
    int checked = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        // probe a deterministic subset of each layer's parameters
        const std::size_t step = std::max<std::size_t>(1, model.weights[l].size() / 25);
        for (std::size_t i = 0; i < model.weights[l].size(); i += step) {
            const double saved = model.weights[l][i];
            model.weights[l][i] = saved + h;
            const double up = loss_of(model, image, label);
            model.weights[l][i] = saved - h;
            const double down = loss_of(model, image, label);
            model.weights[l][i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads.weights[l][i];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(std::abs(fd - an) / scale < 1e-3);
            ++checked;
        }
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
            const double saved = model.biases[l][i];
            model.biases[l][i] = saved + h;
            const double up = loss_of(model, image, label);
            model.biases[l][i] = saved - h;
            const double down = loss_of(model, image, label);
            model.biases[l][i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads.biases[l][i];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(std::abs(fd - an) / scale < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("checkpoint round-trips layer table and parameters", "[net]") {
    auto model = make_classifier<float>(16, 16, 16);
    init_weights(model, 2024);
    for (auto& layer : model.biases)
        for (auto& b : layer) b = -0.25f;

    const std::string path = "checkpoint_test.spm";
    save_checkpoint(model, path);
    const auto loaded = load_checkpoint(path);

    REQUIRE(loaded.layers.size() == model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        CHECK(loaded.layers[l].kind == model.layers[l].kind);
        CHECK(loaded.layers[l].in_channels == model.layers[l].in_channels);
        CHECK(loaded.layers[l].out_channels == model.layers[l].out_channels);
        CHECK(loaded.layers[l].stride == model.layers[l].stride);
        CHECK(loaded.layers[l].activation == model.layers[l].activation);
        REQUIRE(loaded.weights[l] == model.weights[l]);
        REQUIRE(loaded.biases[l] == model.biases[l]);
    }
    std::remove(path.c_str());
}

TEST_CASE("paper-scale layer table lands near 0.3M parameters", "[net]") {
    const auto model = make_classifier<float>(160, 240, 256);
    const auto count = model.parameter_count();
    CHECK(count > 250000);
    CHECK(count < 350000);
    // desk scale stays tiny
    CHECK(make_classifier<float>(16, 16, 16).parameter_count() < 20000);
}
