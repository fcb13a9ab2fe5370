#include "support.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/network.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace wakeforge;

namespace {

// Smooth toy regression set: n samples, 3 inputs, `outs` outputs.
TrainingSet toy_set(std::size_t n, std::size_t outs, std::uint64_t seed) {
    Rng rng(seed);
    TrainingSet s;
    s.inputs.resize(3, static_cast<Eigen::Index>(n));
    s.targets.resize(static_cast<Eigen::Index>(outs), static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < n; ++c) {
        const double a = rng.uniform(3, 15);
        const double b = rng.uniform(0.01, 0.2);
        const double y = rng.uniform(-35, 35);
        s.inputs.col(static_cast<Eigen::Index>(c)) << float(a), float(b), float(y);
        for (std::size_t o = 0; o < outs; ++o) {
            s.targets(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c)) =
                float(a * (1.0 - 0.3 * std::exp(-std::pow((double(o) / outs - 0.5 - y / 100.0) / (0.1 + b), 2))));
        }
        s.scales.push_back(a);
    }
    return s;
}

TrainingSet predictor_set(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    TrainingSet s;
    s.inputs.resize(23, static_cast<Eigen::Index>(n));
    s.targets.resize(1, static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < n; ++c) {
        double sum = 0.0;
        for (int k = 0; k < 21; ++k) {
            const double v = rng.uniform(4, 12);
            s.inputs(k, static_cast<Eigen::Index>(c)) = float(v);
            sum += v * v * v;
        }
        s.inputs(21, static_cast<Eigen::Index>(c)) = float(rng.uniform(0.03, 0.18));
        s.inputs(22, static_cast<Eigen::Index>(c)) = float(rng.uniform(-30, 30));
        s.targets(0, static_cast<Eigen::Index>(c)) = float(sum / 21.0);
        s.scales.push_back(1.0);
    }
    return s;
}

std::vector<std::uint8_t> bytes_of(const NetworkModel& m) { return serialize_model(m); }

}  // namespace

TEST_CASE("decoder architecture") {
    const auto m = make_decoder(16, 12, 3);
    REQUIRE(m.layers.size() == 3);
    CHECK(m.kind == NetworkKind::Decoder);
    CHECK(m.input_width() == 3);
    CHECK(m.layers[0].out_width() == 200);
    CHECK(m.layers[1].out_width() == 200);
    CHECK(m.output_width() == 16 * 12);
    CHECK(m.layers[0].activation == Activation::Tanh);
    CHECK(m.layers[0].batch_norm.has_value());
    CHECK(m.layers[1].batch_norm.has_value());
    CHECK(m.layers[2].activation == Activation::Linear);
    CHECK(!m.layers[2].batch_norm.has_value());
    const double limit = std::sqrt(6.0 / (3 + 200));
    CHECK(m.layers[0].weights.cwiseAbs().maxCoeff() <= limit);
    const auto p = make_predictor(NetworkKind::PowerPredictor, 21, 3);
    CHECK(p.input_width() == 23);
    CHECK(p.layers[0].out_width() == 64);
    CHECK(p.layers[0].activation == Activation::LeakyRelu);
    CHECK(p.output_width() == 1);
}

TEST_CASE("zero network decodes to a zero field and inference is repeatable") {
    auto m = make_decoder(8, 8, 1);
    for (auto& l : m.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    const auto out = ddn_forward(m, {8.0, 0.1, 5.0});
    REQUIRE(out.size() == 64);
    for (const double v : out) {
        CHECK(v == 0.0);
    }
    const auto r = make_decoder(8, 8, 2);
    const auto a = ddn_forward(r, {8.0, 0.1, 5.0});
    const auto b = ddn_forward(r, {8.0, 0.1, 5.0});
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    CHECK_THROWS_AS(ddn_forward(make_predictor(NetworkKind::TiPredictor, 21, 1), {8.0, 0.1, 0.0}), ModelError);
}

TEST_CASE("batch-norm normalises batches in train mode") {
    const std::array<LayerShape, 1> shapes{{{16, Activation::Linear, true}}};
    auto m = make_network(NetworkKind::Generic, 3, shapes, 5);
    m.layers[0].weights *= 40.0f;
    const auto data = toy_set(64, 1, 9);
    fit_normalization(m, data, false);
    const Eigen::MatrixXf out = predict_batch_statistics(m, data.inputs);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double mean = out.row(r).cast<double>().mean();
        const double var = (out.row(r).cast<double>().array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("normalisation round trip") {
    NormStats<double> s{Eigen::Vector3d(8.0, 0.1, -2.0), Eigen::Vector3d(3.5, 0.05, 20.0)};
    Eigen::MatrixXd x(3, 4);
    x << 3.3, 14.9, 8.0, 10.1, 0.011, 0.19, 0.05, 0.12, -34.0, 12.5, 0.7, 33.3;
    const auto back = s.denormalize(s.normalize(x));
    CHECK(((back - x).cwiseAbs().array() / x.cwiseAbs().array()).maxCoeff() < 1e-12);
}

TEST_CASE("accuracy metric") {
    const std::array<LayerShape, 1> shapes{{{3, Activation::Linear, false}}};
    auto m = make_network(NetworkKind::Generic, 3, shapes, 1);
    m.layers[0].weights = Eigen::Matrix3f::Identity();
    m.layers[0].bias.setZero();
    TrainingSet s;
    s.inputs = Eigen::MatrixXf::Random(3, 5).cwiseAbs() * 10 + Eigen::MatrixXf::Constant(3, 5, 1);
    s.targets = s.inputs;
    for (int c = 0; c < 5; ++c) {
        s.scales.push_back(4.0 + c);
    }
    CHECK(accuracy(m, s) == doctest::Approx(100.0));
    for (int c = 0; c < 5; ++c) {
        s.targets.col(c).array() += float(0.05 * s.scales[std::size_t(c)]);
    }
    CHECK(accuracy(m, s) == doctest::Approx(95.0).epsilon(1e-5));
    s.scales[2] = 0.0;
    CHECK_THROWS_AS(accuracy(m, s), DegenerateInputError);
}

TEST_CASE("gradient checks") {
    const std::array<LayerShape, 1> lin{{{4, Activation::Linear, false}}};
    auto linear = make_network(NetworkKind::Generic, 3, lin, 2);
    const auto d4 = toy_set(10, 4, 3);
    fit_normalization(linear, d4);
    linear.layers[0].bias << 0.3f, -0.2f, 0.5f, 0.1f;  // away from the zero-gradient point
    CHECK(gradient_check(linear, d4, 1).max_relative < 1e-8);

    auto ddn = make_decoder(8, 8, 4);
    const auto d64 = toy_set(12, 64, 5);
    fit_normalization(ddn, d64);
    const auto rep = gradient_check(ddn, d64, 7);
    CHECK(rep.checked >= 3 * 200);
    CHECK(rep.max_relative < 1e-4);

    auto power = make_predictor(NetworkKind::PowerPredictor, 21, 6);
    const auto p = predictor_set(16, 8);
    fit_normalization(power, p);
    CHECK(gradient_check(power, p, 9).max_relative < 1e-4);
    // a coarse step crosses kinks; those parameters are replaced, not scored
    const auto coarse = gradient_check(power, p, 9, 200, 0.05);
    CHECK(coarse.skipped_kinks > 0);
    CHECK(coarse.checked >= 3 * 64);
    CHECK(coarse.per_layer[0] < 1e-2);

    freeze_layers(ddn, {true, false, false});
    const auto frozen = gradient_check(ddn, d64, 7);
    CHECK(frozen.per_layer[0] == 0.0);
    CHECK(frozen.max_relative < 1e-4);
    const auto g = analytic_gradients(ddn, d64);
    CHECK(g.layers[0].weights.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.layers[0].bias.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.layers[0].gamma.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("freezing keeps weights and running statistics bit-identical") {
    auto m = make_decoder(8, 8, 11);
    const auto tr = toy_set(40, 64, 12);
    const auto va = toy_set(10, 64, 13);
    fit_normalization(m, tr);
    TrainConfig cfg;
    cfg.epochs = 5;
    train(m, tr, va, cfg);
    const auto before = m;
    freeze_layers(m, default_transfer_mask(m));
    CHECK(!m.layers[0].trainable);
    CHECK(!m.layers[1].trainable);
    CHECK(m.layers[2].trainable);
    cfg.epochs = 20;
    train(m, tr, va, cfg);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(m.layers[l].weights == before.layers[l].weights);
        CHECK(m.layers[l].bias == before.layers[l].bias);
        CHECK(m.layers[l].batch_norm->gamma == before.layers[l].batch_norm->gamma);
        CHECK(m.layers[l].batch_norm->running_mean == before.layers[l].batch_norm->running_mean);
        CHECK(m.layers[l].batch_norm->running_var == before.layers[l].batch_norm->running_var);
    }
    CHECK(m.layers[2].weights != before.layers[2].weights);

    auto copy = before;
    freeze_layers(copy, {});
    CHECK(bytes_of(copy) == bytes_of(before));
    CHECK_THROWS_AS(freeze_layers(copy, {true}), ConfigError);
    freeze_layers(copy, {true, true, true});
    CHECK_THROWS_AS(train(copy, tr, va, cfg), ConfigError);
}

TEST_CASE("fine-tune with zero epochs returns the pretrained weights") {
    auto m = make_decoder(8, 8, 21);
    const auto tr = toy_set(20, 64, 22);
    fit_normalization(m, tr);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto r = fine_tune(m, tr, tr, cfg);
    CHECK(r.history.epochs.empty());
    CHECK(r.history.transfer);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(r.model.layers[l].weights == m.layers[l].weights);
    }
}

TEST_CASE("training behaviour") {
    SUBCASE("single sample loss decreases monotonically") {
        const std::array<LayerShape, 2> shapes{{{8, Activation::Tanh, false}, {4, Activation::Linear, false}}};
        auto m = make_network(NetworkKind::Generic, 3, shapes, 31);
        auto one = toy_set(1, 4, 32);
        TrainConfig cfg;
        cfg.epochs = 50;
        cfg.learning_rate = 1e-3;
        cfg.batch_fraction = 1.0;
        const auto h = train(m, one, one, cfg);
        REQUIRE(h.epochs.size() == 50);
        for (std::size_t e = 1; e < h.epochs.size(); ++e) {
            CHECK(h.epochs[e].validation_loss < h.epochs[e - 1].validation_loss);
        }
    }
    SUBCASE("ten samples can be memorised") {
        auto m = make_decoder(4, 4, 33, 32);
        const auto ten = toy_set(10, 16, 34);
        fit_normalization(m, ten);
        TrainConfig cfg;
        cfg.epochs = 5000;
        cfg.learning_rate = 0.01;
        cfg.batch_fraction = 1.0;
        const auto h = train(m, ten, ten, cfg);
        CHECK(h.epochs.back().train_loss < 1e-4);
    }
    SUBCASE("scheduler multiplies by the factor") {
        auto m = make_decoder(4, 4, 35, 16);
        const auto tr = toy_set(16, 16, 36);
        fit_normalization(m, tr);
        TrainConfig cfg;
        cfg.epochs = 120;
        cfg.learning_rate = 0.05;
        cfg.scheduler = {true, 0.5, 2};
        const auto h = train(m, tr, toy_set(8, 16, 37), cfg);
        int drops = 0;
        for (std::size_t e = 1; e < h.epochs.size(); ++e) {
            const double a = h.epochs[e - 1].learning_rate;
            const double b = h.epochs[e].learning_rate;
            CHECK(b <= a);
            if (b < a) {
                CHECK(b == a * 0.5);
                ++drops;
            }
        }
        CHECK(drops > 0);
    }
    SUBCASE("divergence is reported with its epoch") {
        auto m = make_decoder(4, 4, 38, 16);
        const auto tr = toy_set(16, 16, 39);
        TrainConfig cfg;
        cfg.epochs = 50;
        cfg.learning_rate = 1e30;
        CHECK_THROWS_AS(train(m, tr, tr, cfg), DivergenceError);
    }
    SUBCASE("same seed gives identical weights") {
        const auto tr = toy_set(24, 16, 40);
        TrainConfig cfg;
        cfg.epochs = 15;
        auto a = make_decoder(4, 4, 41, 16);
        auto b = make_decoder(4, 4, 41, 16);
        fit_normalization(a, tr);
        fit_normalization(b, tr);
        train(a, tr, tr, cfg);
        train(b, tr, tr, cfg);
        CHECK(bytes_of(a) == bytes_of(b));
    }
    SUBCASE("invalid configs are rejected") {
        TrainConfig cfg;
        cfg.batch_fraction = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = {};
        cfg.scheduler = {true, 1.2, 3};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("history csv has units in the header") {
    TrainHistory h;
    h.epochs.push_back({1, 0.5, 0.4, 91.0, 0.01});
    const auto csv = h.to_csv();
    CHECK(csv.rfind("epoch,train_loss_normalized_mse,validation_loss_normalized_mse,validation_accuracy_pct", 0) == 0);
    CHECK(h.epochs_to_reach(90.0) == 1);
    CHECK(!h.epochs_to_reach(95.0));
}

TEST_CASE("model file round trip and corruption") {
    testing::TempDir dir("model");
    auto m = make_decoder(6, 5, 51);
    m.layers[0].weights(0, 0) = 1.5f;
    m.layers[0].weights(0, 1) = -2.0f;
    fit_normalization(m, toy_set(10, 30, 52));
    save_model(m, dir / "a.wknm");
    const auto loaded = load_model(dir / "a.wknm");
    save_model(loaded, dir / "b.wknm");
    CHECK(testing::file_bytes(dir / "a.wknm") == testing::file_bytes(dir / "b.wknm"));
    CHECK(loaded.out_nx == 6);
    CHECK(loaded.out_ny == 5);

    const auto bytes = serialize_model(m);
    // magic, version, kind, layer count, then layer 0 widths (200, 3) and three flag bytes
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "WKNM");
    const std::vector<std::uint8_t> head{1, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 3, 0, 0, 0, 200, 0, 0, 0, 1, 1, 1};
    CHECK(std::vector<std::uint8_t>(bytes.begin() + 4, bytes.begin() + 27) == head);
    // 1.5f = 0x3FC00000, -2.0f = 0xC0000000, little-endian, row-major
    CHECK(std::vector<std::uint8_t>(bytes.begin() + 27, bytes.begin() + 35) ==
          std::vector<std::uint8_t>{0x00, 0x00, 0xC0, 0x3F, 0x00, 0x00, 0x00, 0xC0});

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
    bad = bytes;
    bad.resize(bad.size() - 3);
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
    CHECK_THROWS(load_model(dir / "missing.wknm"));
}

TEST_CASE("predictor outputs are clamped") {
    auto p = make_predictor(NetworkKind::PowerPredictor, 21, 61);
    p.layers.back().bias.setConstant(-1e6f);
    const std::vector<double> line(21, 8.0);
    CHECK(power_net_forward(p, line, 0.06, 0.0) == 0.0);
    auto t = make_predictor(NetworkKind::TiPredictor, 21, 62);
    t.layers.back().bias.setConstant(10.0f);
    CHECK(ti_net_forward(t, line, 0.06, 0.0) == 0.5);
    t.layers.back().bias.setConstant(-10.0f);
    CHECK(ti_net_forward(t, line, 0.06, 0.0) == 0.005);
    CHECK(ti_net_forward(t, line, 0.06, 0.0) == ti_net_forward(t, line, 0.06, 0.0));
    CHECK_THROWS_AS(power_net_forward(p, std::vector<double>(5, 8.0), 0.06, 0.0), ModelError);
}
