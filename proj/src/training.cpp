#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace wakeforge {

void TrainConfig::validate() const {
    if (epochs < 0) {
        throw ConfigError("epochs must be non-negative");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) {
        throw ConfigError("batch fraction must lie in (0, 1]");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_epsilon > 0.0)) {
        throw ConfigError("invalid Adam constants");
    }
    if (scheduler.enabled && (!(scheduler.factor > 0.0 && scheduler.factor < 1.0) || scheduler.patience < 1)) {
        throw ConfigError("scheduler needs factor in (0, 1) and patience >= 1");
    }
}

std::optional<int> TrainHistory::epochs_to_reach(double target) const {
    for (const auto& e : epochs) {
        if (e.validation_accuracy >= target) {
            return e.epoch;
        }
    }
    return std::nullopt;
}

double TrainHistory::best_accuracy() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : epochs) {
        best = std::max(best, e.validation_accuracy);
    }
    return best;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch,train_loss_normalized_mse,validation_loss_normalized_mse,validation_accuracy_pct,learning_rate,"
          "transfer\n";
    for (const auto& e : epochs) {
        os << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ',' << e.validation_accuracy << ','
           << e.learning_rate << ',' << (transfer ? 1 : 0) << '\n';
    }
    return os.str();
}

namespace {

struct Moments {
    Eigen::MatrixXf m_w, v_w;
    Eigen::VectorXf m_b, v_b, m_g, v_g, m_beta, v_beta;
};

template <typename P, typename G>
void adam_step(P& param, const G& grad, P& m, P& v, float lr_t, const TrainConfig& cfg) {
    const auto b1 = static_cast<float>(cfg.beta1);
    const auto b2 = static_cast<float>(cfg.beta2);
    m = b1 * m + (1.0f - b1) * grad;
    v = b2 * v + (1.0f - b2) * grad.cwiseAbs2();
    param.array() -= lr_t * m.array() / (v.array().sqrt() + static_cast<float>(cfg.adam_epsilon));
}

// Nearly-equal chunk sizes covering n samples with batches of about b.
std::vector<std::size_t> batch_sizes(std::size_t n, double fraction) {
    const auto b = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
    const std::size_t count = (n + b - 1) / b;
    std::vector<std::size_t> sizes(count, n / count);
    for (std::size_t k = 0; k < n % count; ++k) {
        ++sizes[k];
    }
    return sizes;
}

}  // namespace

TrainHistory train(NetworkModel& model, const TrainingSet& training, const TrainingSet& validation,
                   const TrainConfig& cfg) {
    cfg.validate();
    validate_network(model);
    if (std::none_of(model.layers.begin(), model.layers.end(), [](const auto& l) { return l.trainable; })) {
        throw ConfigError("every layer is frozen; nothing to train");
    }
    if (training.size() == 0 || validation.size() == 0) {
        throw ConfigError("training and validation sets must be non-empty");
    }
    if (static_cast<std::size_t>(training.inputs.rows()) != model.input_width() ||
        static_cast<std::size_t>(training.targets.rows()) != model.output_width()) {
        throw ModelError("training set shape does not match the network");
    }
    TrainHistory history;
    if (cfg.epochs == 0) {
        return history;
    }

    const Eigen::MatrixXf x_all = model.input_norm.normalize(training.inputs);
    const Eigen::MatrixXf t_all = model.output_norm.normalize(training.targets);
    const Eigen::MatrixXf t_val = model.output_norm.normalize(validation.targets);

    std::vector<Moments> moments(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const auto& l = model.layers[li];
        if (!l.trainable) {
            continue;
        }
        auto& mo = moments[li];
        mo.m_w = mo.v_w = Eigen::MatrixXf::Zero(l.weights.rows(), l.weights.cols());
        mo.m_b = mo.v_b = Eigen::VectorXf::Zero(l.bias.size());
        if (l.batch_norm) {
            mo.m_g = mo.v_g = mo.m_beta = mo.v_beta = Eigen::VectorXf::Zero(l.bias.size());
        }
    }

    Rng rng(cfg.seed);
    const std::size_t n = training.size();
    const auto sizes = batch_sizes(n, cfg.batch_fraction);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::uint64_t step = 0;
    Gradients<float> grads;
    Eigen::MatrixXf xb;
    Eigen::MatrixXf tb;
    std::vector<DenseLayer<float>> best_layers;
    double best_acc = -std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t offset = 0;
        for (const std::size_t bs : sizes) {
            xb.resize(x_all.rows(), static_cast<Eigen::Index>(bs));
            tb.resize(t_all.rows(), static_cast<Eigen::Index>(bs));
            for (std::size_t k = 0; k < bs; ++k) {
                xb.col(static_cast<Eigen::Index>(k)) = x_all.col(static_cast<Eigen::Index>(order[offset + k]));
                tb.col(static_cast<Eigen::Index>(k)) = t_all.col(static_cast<Eigen::Index>(order[offset + k]));
            }
            offset += bs;
            const float loss = loss_and_gradients(model, xb, tb, &grads, true);
            if (!std::isfinite(loss)) {
                throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
            }
            loss_sum += static_cast<double>(loss) * static_cast<double>(bs);

            ++step;
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            const auto lr_t = static_cast<float>(lr * std::sqrt(corr2) / corr1);
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                auto& l = model.layers[li];
                if (!l.trainable) {
                    continue;
                }
                auto& mo = moments[li];
                const auto& g = grads.layers[li];
                adam_step(l.weights, g.weights, mo.m_w, mo.v_w, lr_t, cfg);
                adam_step(l.bias, g.bias, mo.m_b, mo.v_b, lr_t, cfg);
                if (l.batch_norm) {
                    adam_step(l.batch_norm->gamma, g.gamma, mo.m_g, mo.v_g, lr_t, cfg);
                    adam_step(l.batch_norm->beta, g.beta, mo.m_beta, mo.v_beta, lr_t, cfg);
                }
            }
        }

        const Eigen::MatrixXf pred = predict(model, validation.inputs);
        const Eigen::MatrixXf pred_n = model.output_norm.normalize(pred);
        const double val_loss = static_cast<double>((pred_n - t_val).squaredNorm()) / static_cast<double>(t_val.size());
        if (!std::isfinite(val_loss)) {
            throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch), epoch);
        }
        double err = 0.0;
        for (Eigen::Index c = 0; c < pred.cols(); ++c) {
            const double scale = validation.scales[static_cast<std::size_t>(c)];
            err += (pred.col(c) - validation.targets.col(c)).cwiseAbs().cast<double>().mean() / scale;
        }
        const double acc = 100.0 - 100.0 * err / static_cast<double>(pred.cols());
        history.epochs.push_back({epoch, loss_sum / static_cast<double>(n), val_loss, acc, lr});
        if (cfg.keep_best && acc > best_acc) {
            best_acc = acc;
            best_layers = model.layers;
        }

        if (cfg.scheduler.enabled) {
            if (val_loss < best_val) {
                best_val = val_loss;
                stale = 0;
            } else if (++stale >= cfg.scheduler.patience) {
                lr *= cfg.scheduler.factor;
                stale = 0;
            }
        }
        if (cfg.stop_at_accuracy && acc >= *cfg.stop_at_accuracy) {
            break;
        }
    }
    if (cfg.keep_best && !best_layers.empty()) {
        model.layers = std::move(best_layers);
    }
    return history;
}

void freeze_layers(NetworkModel& model, const std::vector<bool>& frozen) {
    if (frozen.empty()) {
        return;
    }
    if (frozen.size() != model.layers.size()) {
        throw ConfigError("freeze mask has " + std::to_string(frozen.size()) + " entries for " +
                          std::to_string(model.layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < frozen.size(); ++i) {
        model.layers[i].trainable = !frozen[i];
    }
}

std::vector<bool> default_transfer_mask(const NetworkModel& model) {
    std::vector<bool> mask(model.layers.size(), true);
    mask.back() = false;
    return mask;
}

FineTuneResult fine_tune(const NetworkModel& pretrained, const TrainingSet& training, const TrainingSet& validation,
                         const TrainConfig& cfg, std::optional<std::vector<bool>> mask) {
    FineTuneResult out{pretrained, {}};
    freeze_layers(out.model, mask ? *mask : default_transfer_mask(pretrained));
    out.history = train(out.model, training, validation, cfg);
    out.history.transfer = true;
    return out;
}

}  // namespace wakeforge
