#pragma once

#include "wakeforge/turbine.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wakeforge {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1, LeakyRelu = 2 };

enum class NetworkKind : std::uint32_t { Decoder = 0, PowerPredictor = 1, TiPredictor = 2, Generic = 3 };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

template <typename S>
struct BatchNormBlock {
    Vec<S> gamma;
    Vec<S> beta;
    Vec<S> running_mean;
    Vec<S> running_var;

    template <typename T>
    BatchNormBlock<T> cast() const {
        return {gamma.template cast<T>(), beta.template cast<T>(), running_mean.template cast<T>(),
                running_var.template cast<T>()};
    }
};

/// Dense layer: activation(W x + b), optionally followed by batch-norm.
template <typename S>
struct DenseLayer {
    Mat<S> weights;  // out x in
    Vec<S> bias;
    Activation activation = Activation::Linear;
    bool trainable = true;
    std::optional<BatchNormBlock<S>> batch_norm;

    std::size_t in_width() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_width() const { return static_cast<std::size_t>(weights.rows()); }

    template <typename T>
    DenseLayer<T> cast() const {
        DenseLayer<T> out;
        out.weights = weights.template cast<T>();
        out.bias = bias.template cast<T>();
        out.activation = activation;
        out.trainable = trainable;
        if (batch_norm) {
            out.batch_norm = batch_norm->template cast<T>();
        }
        return out;
    }
};

/// Per-feature mean / standard-deviation scaling.
template <typename S>
struct NormStats {
    Vec<S> mean;
    Vec<S> stddev;

    static NormStats identity(std::size_t n) { return {Vec<S>::Zero(n), Vec<S>::Ones(n)}; }

    Mat<S> normalize(const Mat<S>& x) const {
        return ((x.colwise() - mean).array().colwise() / stddev.array()).matrix();
    }
    Mat<S> denormalize(const Mat<S>& z) const {
        return ((z.array().colwise() * stddev.array()).matrix().colwise() + mean);
    }

    template <typename T>
    NormStats<T> cast() const {
        return {mean.template cast<T>(), stddev.template cast<T>()};
    }
};

template <typename S>
struct BasicNetwork {
    NetworkKind kind = NetworkKind::Generic;
    std::vector<DenseLayer<S>> layers;
    NormStats<S> input_norm;
    NormStats<S> output_norm;
    std::size_t out_nx = 0;  // decoder tile shape, zero otherwise
    std::size_t out_ny = 0;

    std::size_t input_width() const { return layers.front().in_width(); }
    std::size_t output_width() const { return layers.back().out_width(); }

    template <typename T>
    BasicNetwork<T> cast() const {
        BasicNetwork<T> out;
        out.kind = kind;
        for (const auto& l : layers) {
            out.layers.push_back(l.template cast<T>());
        }
        out.input_norm = input_norm.template cast<T>();
        out.output_norm = output_norm.template cast<T>();
        out.out_nx = out_nx;
        out.out_ny = out_ny;
        return out;
    }
};

using NetworkModel = BasicNetwork<float>;

/// Throws ModelError when widths do not chain or statistics are invalid.
template <typename S>
void validate_network(const BasicNetwork<S>& net);

struct LayerShape {
    std::size_t width;
    Activation activation;
    bool batch_norm;
};

/// Glorot-uniform initialised multilayer perceptron with identity
/// normalisation statistics.
NetworkModel make_network(NetworkKind kind, std::size_t inputs, std::span<const LayerShape> shapes,
                          std::uint64_t seed);

/// Deep decoder: 3 -> hidden (tanh, BN) -> hidden (tanh, BN) -> nx*ny linear.
NetworkModel make_decoder(std::size_t nx, std::size_t ny, std::uint64_t seed, std::size_t hidden = 200);

/// Power or TI predictor: (n_line speeds, inflow TI, yaw) -> scalar, two
/// leaky-ReLU hidden layers.
NetworkModel make_predictor(NetworkKind kind, std::size_t n_line, std::uint64_t seed, std::size_t hidden = 64);

enum class Mode { Train, Inference };

/// Raw (un-normalised) samples as columns plus the per-sample scale used
/// by the error metric.
struct TrainingSet {
    Eigen::MatrixXf inputs;   // n_in x N
    Eigen::MatrixXf targets;  // n_out x N
    std::vector<double> scales;

    std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
    TrainingSet subset(std::span<const std::size_t> indices) const;
};

/// Sets input (and optionally output) statistics from a training set.
void fit_normalization(NetworkModel& model, const TrainingSet& data, bool fit_outputs = true);

/// Denormalised outputs for raw inputs (columns), inference mode.
Eigen::MatrixXf predict(const NetworkModel& model, const Eigen::MatrixXf& raw_inputs);

/// Denormalised outputs with batch statistics (train-mode batch-norm),
/// leaving running statistics untouched.
Eigen::MatrixXf predict_batch_statistics(const NetworkModel& model, const Eigen::MatrixXf& raw_inputs);

/// Wake tile (row-major nx*ny, m/s) predicted by a decoder.
std::vector<double> ddn_forward(const NetworkModel& model, const FlowConditions& cond, Mode mode = Mode::Inference);

/// Predictor input vector: line speeds followed by inflow TI and yaw.
Eigen::VectorXf predictor_input(std::span<const double> line_speeds, double ti_inflow, double yaw);

double power_net_forward(const NetworkModel& model, std::span<const double> line_speeds, double ti_inflow, double yaw);
double ti_net_forward(const NetworkModel& model, std::span<const double> line_speeds, double ti_inflow, double yaw);

/// 100 minus the mean absolute error in percent of each sample's scale.
double accuracy(const NetworkModel& model, const TrainingSet& data);

template <typename S>
struct LayerGradient {
    Mat<S> weights;
    Vec<S> bias;
    Vec<S> gamma;
    Vec<S> beta;
};

template <typename S>
struct Gradients {
    std::vector<LayerGradient<S>> layers;
};

/// Mean-squared error in normalised output space and its parameter
/// gradients for one batch in train mode. Frozen layers get zero gradients
/// and run their batch-norm on running statistics. Running statistics are
/// updated only when `update_running` is set.
template <typename S>
S loss_and_gradients(BasicNetwork<S>& net, const Mat<S>& normalized_inputs, const Mat<S>& normalized_targets,
                     Gradients<S>* grads, bool update_running);

/// Analytic gradients (double precision) on one batch of raw samples.
Gradients<double> analytic_gradients(const NetworkModel& model, const TrainingSet& batch);

struct GradientCheckReport {
    double max_relative = 0.0;
    std::size_t checked = 0;
    std::vector<double> per_layer;  // max discrepancy per layer, 0 for frozen
    std::size_t skipped_kinks = 0;  // parameters whose stencil crossed a leaky-ReLU kink
};

/// Central finite differences against back-propagation on a random subset
/// of `per_layer` parameters (or all) of every trainable layer. Parameters
/// whose +-step stencil flips a leaky-ReLU pre-activation are replaced.
GradientCheckReport gradient_check(const NetworkModel& model, const TrainingSet& batch, std::uint64_t seed,
                                   std::size_t per_layer = 200, double step = 1e-4);

struct SchedulerConfig {
    bool enabled = false;
    double factor = 0.8;
    int patience = 15;
};

struct TrainConfig {
    int epochs = 500;
    double learning_rate = 0.01;
    double batch_fraction = 0.25;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    SchedulerConfig scheduler;
    std::optional<double> stop_at_accuracy;  // stop once validation accuracy reaches this
    bool keep_best = false;                  // end on the parameters of the best validation epoch

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double validation_accuracy = 0.0;
    double learning_rate = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool transfer = false;

    /// First epoch (1-based) whose validation accuracy reaches `target`.
    std::optional<int> epochs_to_reach(double target) const;
    double best_accuracy() const;
    std::string to_csv() const;
};

/// Mini-batch Adam on the mean-squared error in normalised space.
TrainHistory train(NetworkModel& model, const TrainingSet& training, const TrainingSet& validation,
                   const TrainConfig& cfg);

/// Sets trainable flags; an empty mask leaves the model untouched.
void freeze_layers(NetworkModel& model, const std::vector<bool>& frozen);

/// Freezes all hidden layers, trains only the output layer.
std::vector<bool> default_transfer_mask(const NetworkModel& model);

struct FineTuneResult {
    NetworkModel model;
    TrainHistory history;
};

FineTuneResult fine_tune(const NetworkModel& pretrained, const TrainingSet& training, const TrainingSet& validation,
                         const TrainConfig& cfg, std::optional<std::vector<bool>> mask = std::nullopt);

std::vector<std::uint8_t> serialize_model(const NetworkModel& model);
NetworkModel deserialize_model(std::vector<std::uint8_t> bytes, const std::string& origin = "<model>");
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

}  // namespace wakeforge
