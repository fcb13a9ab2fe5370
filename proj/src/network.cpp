#include "wakeforge/network.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wakeforge {

template <typename S>
void validate_network(const BasicNetwork<S>& net) {
    if (net.layers.empty()) {
        throw ModelError("network has no layers");
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (static_cast<std::size_t>(l.bias.size()) != l.out_width()) {
            throw ModelError("layer " + std::to_string(i) + " bias width mismatch");
        }
        if (i > 0 && l.in_width() != net.layers[i - 1].out_width()) {
            throw ModelError("layer " + std::to_string(i) + " input width does not chain");
        }
        if (l.batch_norm) {
            const auto& bn = *l.batch_norm;
            const auto n = static_cast<Eigen::Index>(l.out_width());
            if (bn.gamma.size() != n || bn.beta.size() != n || bn.running_mean.size() != n ||
                bn.running_var.size() != n) {
                throw ModelError("layer " + std::to_string(i) + " batch-norm width mismatch");
            }
            if (!(bn.running_var.array() > S(0)).all()) {
                throw ModelError("layer " + std::to_string(i) + " running variance must be positive");
            }
        }
    }
    const auto check_norm = [](const NormStats<S>& s, std::size_t n, const char* what) {
        if (static_cast<std::size_t>(s.mean.size()) != n || static_cast<std::size_t>(s.stddev.size()) != n) {
            throw ModelError(std::string(what) + " normalisation width mismatch");
        }
        if (!(s.stddev.array() > S(0)).all()) {
            throw ModelError(std::string(what) + " normalisation deviations must be positive");
        }
    };
    check_norm(net.input_norm, net.input_width(), "input");
    check_norm(net.output_norm, net.output_width(), "output");
    if (net.kind == NetworkKind::Decoder && net.out_nx * net.out_ny != net.output_width()) {
        throw ModelError("decoder output width does not match its tile shape");
    }
}

template void validate_network(const BasicNetwork<float>&);
template void validate_network(const BasicNetwork<double>&);

NetworkModel make_network(NetworkKind kind, std::size_t inputs, std::span<const LayerShape> shapes,
                          std::uint64_t seed) {
    NetworkModel net;
    net.kind = kind;
    Rng rng(seed);
    std::size_t fan_in = inputs;
    for (const auto& shape : shapes) {
        DenseLayer<float> layer;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + shape.width));
        layer.weights.resize(static_cast<Eigen::Index>(shape.width), static_cast<Eigen::Index>(fan_in));
        // Fill row-major so the draw order matches the file layout.
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                layer.weights(r, c) = static_cast<float>(rng.uniform(-limit, limit));
            }
        }
        layer.bias = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(shape.width));
        layer.activation = shape.activation;
        if (shape.batch_norm) {
            const auto n = static_cast<Eigen::Index>(shape.width);
            layer.batch_norm = BatchNormBlock<float>{Eigen::VectorXf::Ones(n), Eigen::VectorXf::Zero(n),
                                                     Eigen::VectorXf::Zero(n), Eigen::VectorXf::Ones(n)};
        }
        net.layers.push_back(std::move(layer));
        fan_in = shape.width;
    }
    net.input_norm = NormStats<float>::identity(inputs);
    net.output_norm = NormStats<float>::identity(fan_in);
    return net;
}

NetworkModel make_decoder(std::size_t nx, std::size_t ny, std::uint64_t seed, std::size_t hidden) {
    const LayerShape shapes[] = {{hidden, Activation::Tanh, true},
                                 {hidden, Activation::Tanh, true},
                                 {nx * ny, Activation::Linear, false}};
    auto net = make_network(NetworkKind::Decoder, 3, shapes, seed);
    net.out_nx = nx;
    net.out_ny = ny;
    return net;
}

NetworkModel make_predictor(NetworkKind kind, std::size_t n_line, std::uint64_t seed, std::size_t hidden) {
    const LayerShape shapes[] = {{hidden, Activation::LeakyRelu, false},
                                 {hidden, Activation::LeakyRelu, false},
                                 {1, Activation::Linear, false}};
    return make_network(kind, n_line + 2, shapes, seed);
}

TrainingSet TrainingSet::subset(std::span<const std::size_t> indices) const {
    TrainingSet out;
    out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
    out.targets.resize(targets.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(indices[k]);
        out.inputs.col(static_cast<Eigen::Index>(k)) = inputs.col(c);
        out.targets.col(static_cast<Eigen::Index>(k)) = targets.col(c);
        out.scales.push_back(scales[indices[k]]);
    }
    return out;
}

namespace {

template <typename S>
NormStats<S> fit_stats(const Mat<S>& data) {
    const auto n = static_cast<S>(data.cols());
    NormStats<S> s;
    s.mean = data.rowwise().sum() / n;
    const Mat<S> centered = data.colwise() - s.mean;
    s.stddev = (centered.array().square().rowwise().sum() / n).sqrt().matrix();
    for (Eigen::Index i = 0; i < s.stddev.size(); ++i) {
        if (!(s.stddev(i) > S(1e-6))) {
            s.stddev(i) = S(1);
        }
    }
    return s;
}

}  // namespace

void fit_normalization(NetworkModel& model, const TrainingSet& data, bool fit_outputs) {
    if (data.size() == 0) {
        throw ConfigError("cannot fit normalisation on an empty set");
    }
    model.input_norm = fit_stats<float>(data.inputs);
    if (fit_outputs) {
        model.output_norm = fit_stats<float>(data.targets);
    }
}

namespace detail {

template <typename S>
struct LayerCache {
    Mat<S> input;
    Mat<S> pre;
    Mat<S> activated;
    Mat<S> xhat;
    Vec<S> inv_std;
    Vec<S> batch_mean;
    Vec<S> batch_var;
    bool batch_stats = false;
};

template <typename S>
void apply_activation(Mat<S>& z, Activation a) {
    switch (a) {
        case Activation::Linear:
            break;
        case Activation::Tanh:
            z = z.array().tanh().matrix();
            break;
        case Activation::LeakyRelu:
            z = (z.array() > S(0)).select(z.array(), z.array() * S(kLeakySlope)).matrix();
            break;
    }
}

template <typename S>
Mat<S> forward_pass(const BasicNetwork<S>& net, const Mat<S>& x, Mode mode, std::vector<LayerCache<S>>* cache) {
    if (static_cast<std::size_t>(x.rows()) != net.input_width()) {
        throw ModelError("input width " + std::to_string(x.rows()) + " does not match network input " +
                         std::to_string(net.input_width()));
    }
    if (cache) {
        cache->assign(net.layers.size(), {});
    }
    Mat<S> h = x;
    const S eps = S(kBatchNormEpsilon);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& layer = net.layers[li];
        Mat<S> z = layer.weights * h;
        z.colwise() += layer.bias;
        if (cache) {
            (*cache)[li].input = std::move(h);
            (*cache)[li].pre = z;
        }
        apply_activation(z, layer.activation);
        if (layer.batch_norm) {
            const auto& bn = *layer.batch_norm;
            const bool batch_stats = mode == Mode::Train && layer.trainable;
            Vec<S> mean;
            Vec<S> var;
            if (batch_stats) {
                mean = z.rowwise().mean();
                var = (z.colwise() - mean).array().square().rowwise().mean().matrix();
            } else {
                mean = bn.running_mean;
                var = bn.running_var;
            }
            const Vec<S> inv_std = (var.array() + eps).rsqrt().matrix();
            Mat<S> xhat = ((z.colwise() - mean).array().colwise() * inv_std.array()).matrix();
            if (cache) {
                auto& c = (*cache)[li];
                c.activated = std::move(z);
                c.inv_std = inv_std;
                c.batch_mean = mean;
                c.batch_var = var;
                c.batch_stats = batch_stats;
            }
            h = (xhat.array().colwise() * bn.gamma.array()).matrix();
            h.colwise() += bn.beta;
            if (cache) {
                (*cache)[li].xhat = std::move(xhat);
            }
        } else {
            if (cache) {
                (*cache)[li].activated = z;
            }
            h = std::move(z);
        }
    }
    return h;
}

}  // namespace detail

template <typename S>
S loss_and_gradients(BasicNetwork<S>& net, const Mat<S>& x, const Mat<S>& t, Gradients<S>* grads,
                     bool update_running) {
    std::vector<detail::LayerCache<S>> cache;
    const Mat<S> y = detail::forward_pass(net, x, Mode::Train, &cache);
    if (y.rows() != t.rows() || y.cols() != t.cols()) {
        throw ModelError("target shape does not match network output");
    }
    const Mat<S> diff = y - t;
    const S count = static_cast<S>(diff.size());
    const S loss = diff.squaredNorm() / count;
    const auto n_batch = static_cast<S>(x.cols());

    if (update_running) {
        const S m = S(kBatchNormMomentum);
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            auto& layer = net.layers[li];
            const auto& c = cache[li];
            if (layer.batch_norm && c.batch_stats) {
                const S unbias = x.cols() > 1 ? n_batch / (n_batch - S(1)) : S(1);
                layer.batch_norm->running_mean = (S(1) - m) * layer.batch_norm->running_mean + m * c.batch_mean;
                layer.batch_norm->running_var = (S(1) - m) * layer.batch_norm->running_var + m * unbias * c.batch_var;
            }
        }
    }
    if (!grads) {
        return loss;
    }

    grads->layers.resize(net.layers.size());
    std::size_t first_trainable = net.layers.size();
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& layer = net.layers[li];
        auto& g = grads->layers[li];
        g.weights = Mat<S>::Zero(layer.weights.rows(), layer.weights.cols());
        g.bias = Vec<S>::Zero(layer.bias.size());
        if (layer.batch_norm) {
            g.gamma = Vec<S>::Zero(layer.bias.size());
            g.beta = Vec<S>::Zero(layer.bias.size());
        } else {
            g.gamma.resize(0);
            g.beta.resize(0);
        }
        if (layer.trainable && first_trainable == net.layers.size()) {
            first_trainable = li;
        }
    }

    Mat<S> dh = (S(2) / count) * diff;
    for (std::size_t li = net.layers.size(); li-- > first_trainable;) {
        const auto& layer = net.layers[li];
        const auto& c = cache[li];
        auto& g = grads->layers[li];
        Mat<S> da;
        if (layer.batch_norm) {
            const auto& bn = *layer.batch_norm;
            if (layer.trainable) {
                g.gamma = (dh.array() * c.xhat.array()).rowwise().sum().matrix();
                g.beta = dh.rowwise().sum();
            }
            const Mat<S> dxhat = (dh.array().colwise() * bn.gamma.array()).matrix();
            if (c.batch_stats) {
                const Vec<S> sum_dxhat = dxhat.rowwise().sum();
                const Vec<S> sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix();
                Mat<S> tmp = n_batch * dxhat;
                tmp.colwise() -= sum_dxhat;
                tmp -= (c.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
                da = ((tmp.array().colwise() * c.inv_std.array()) / n_batch).matrix();
            } else {
                da = (dxhat.array().colwise() * c.inv_std.array()).matrix();
            }
        } else {
            da = std::move(dh);
        }
        Mat<S> dz;
        switch (layer.activation) {
            case Activation::Linear:
                dz = std::move(da);
                break;
            case Activation::Tanh:
                dz = (da.array() * (S(1) - c.activated.array().square())).matrix();
                break;
            case Activation::LeakyRelu:
                dz = (c.pre.array() > S(0)).select(da.array(), da.array() * S(kLeakySlope)).matrix();
                break;
        }
        if (layer.trainable) {
            g.weights.noalias() = dz * c.input.transpose();
            g.bias = dz.rowwise().sum();
        }
        if (li > first_trainable) {
            dh.noalias() = layer.weights.transpose() * dz;
        }
    }
    return loss;
}

template float loss_and_gradients(BasicNetwork<float>&, const Mat<float>&, const Mat<float>&, Gradients<float>*, bool);
template double loss_and_gradients(BasicNetwork<double>&, const Mat<double>&, const Mat<double>&, Gradients<double>*,
                                   bool);

Eigen::MatrixXf predict(const NetworkModel& model, const Eigen::MatrixXf& raw_inputs) {
    const Eigen::MatrixXf z = detail::forward_pass(model, model.input_norm.normalize(raw_inputs), Mode::Inference,
                                                   static_cast<std::vector<detail::LayerCache<float>>*>(nullptr));
    return model.output_norm.denormalize(z);
}

Eigen::MatrixXf predict_batch_statistics(const NetworkModel& model, const Eigen::MatrixXf& raw_inputs) {
    const Eigen::MatrixXf z = detail::forward_pass(model, model.input_norm.normalize(raw_inputs), Mode::Train,
                                                   static_cast<std::vector<detail::LayerCache<float>>*>(nullptr));
    return model.output_norm.denormalize(z);
}

std::vector<double> ddn_forward(const NetworkModel& model, const FlowConditions& cond, Mode mode) {
    if (model.kind != NetworkKind::Decoder || model.input_width() != 3) {
        throw ModelError("ddn_forward requires a decoder network with three inputs");
    }
    Eigen::MatrixXf x(3, 1);
    x << static_cast<float>(cond.u0), static_cast<float>(cond.ti), static_cast<float>(cond.yaw);
    const Eigen::MatrixXf y = mode == Mode::Inference ? predict(model, x) : predict_batch_statistics(model, x);
    return {y.data(), y.data() + y.size()};
}

Eigen::VectorXf predictor_input(std::span<const double> line_speeds, double ti_inflow, double yaw) {
    Eigen::VectorXf x(static_cast<Eigen::Index>(line_speeds.size() + 2));
    for (std::size_t k = 0; k < line_speeds.size(); ++k) {
        x(static_cast<Eigen::Index>(k)) = static_cast<float>(line_speeds[k]);
    }
    x(static_cast<Eigen::Index>(line_speeds.size())) = static_cast<float>(ti_inflow);
    x(static_cast<Eigen::Index>(line_speeds.size() + 1)) = static_cast<float>(yaw);
    return x;
}

namespace {

double predictor_scalar(const NetworkModel& model, std::span<const double> line_speeds, double ti_inflow, double yaw) {
    if (model.input_width() != line_speeds.size() + 2 || model.output_width() != 1) {
        throw ModelError("predictor expects " + std::to_string(model.input_width() - 2) + " line speeds");
    }
    const Eigen::MatrixXf y = predict(model, predictor_input(line_speeds, ti_inflow, yaw));
    return static_cast<double>(y(0, 0));
}

}  // namespace

double power_net_forward(const NetworkModel& model, std::span<const double> line_speeds, double ti_inflow, double yaw) {
    return std::max(0.0, predictor_scalar(model, line_speeds, ti_inflow, yaw));
}

double ti_net_forward(const NetworkModel& model, std::span<const double> line_speeds, double ti_inflow, double yaw) {
    return std::clamp(predictor_scalar(model, line_speeds, ti_inflow, yaw), 0.005, 0.5);
}

double accuracy(const NetworkModel& model, const TrainingSet& data) {
    if (data.size() == 0) {
        throw ConfigError("accuracy needs a non-empty set");
    }
    const Eigen::MatrixXf pred = predict(model, data.inputs);
    double total = 0.0;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const double scale = data.scales[static_cast<std::size_t>(c)];
        if (!(scale > 0.0)) {
            throw DegenerateInputError("sample " + std::to_string(c) + " has a zero reference scale");
        }
        const double err = (pred.col(c) - data.targets.col(c)).cwiseAbs().cast<double>().mean();
        total += err / scale;
    }
    return 100.0 - 100.0 * total / static_cast<double>(pred.cols());
}

Gradients<double> analytic_gradients(const NetworkModel& model, const TrainingSet& batch) {
    auto net = model.cast<double>();
    const Mat<double> x = net.input_norm.normalize(batch.inputs.cast<double>());
    const Mat<double> t = net.output_norm.normalize(batch.targets.cast<double>());
    Gradients<double> g;
    loss_and_gradients(net, x, t, &g, false);
    return g;
}

namespace {

// Sign pattern of every leaky-ReLU pre-activation over the batch.
std::vector<bool> kink_pattern(const BasicNetwork<double>& net, const Mat<double>& x) {
    std::vector<detail::LayerCache<double>> cache;
    detail::forward_pass(net, x, Mode::Train, &cache);
    std::vector<bool> signs;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (net.layers[li].activation != Activation::LeakyRelu) {
            continue;
        }
        const auto& pre = cache[li].pre;
        for (Eigen::Index k = 0; k < pre.size(); ++k) {
            signs.push_back(pre.data()[k] > 0.0);
        }
    }
    return signs;
}

}  // namespace

GradientCheckReport gradient_check(const NetworkModel& model, const TrainingSet& batch, std::uint64_t seed,
                                   std::size_t per_layer, double step) {
    auto net = model.cast<double>();
    const Mat<double> x = net.input_norm.normalize(batch.inputs.cast<double>());
    const Mat<double> t = net.output_norm.normalize(batch.targets.cast<double>());
    Gradients<double> g;
    loss_and_gradients(net, x, t, &g, false);

    GradientCheckReport report;
    report.per_layer.assign(net.layers.size(), 0.0);
    const bool has_kinks = std::any_of(net.layers.begin(), net.layers.end(),
                                       [](const auto& l) { return l.activation == Activation::LeakyRelu; });
    Rng rng(seed);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& layer = net.layers[li];
        if (!layer.trainable) {
            continue;
        }
        // Flat views over every parameter block of the layer.
        std::vector<std::pair<double*, double>> params;
        const auto add = [&](auto& p, const auto& grad) {
            for (Eigen::Index k = 0; k < p.size(); ++k) {
                params.emplace_back(p.data() + k, grad.data()[k]);
            }
        };
        add(layer.weights, g.layers[li].weights);
        add(layer.bias, g.layers[li].bias);
        if (layer.batch_norm) {
            add(layer.batch_norm->gamma, g.layers[li].gamma);
            add(layer.batch_norm->beta, g.layers[li].beta);
        }
        std::vector<std::size_t> pick(params.size());
        std::iota(pick.begin(), pick.end(), 0);
        rng.shuffle(std::span<std::size_t>(pick));
        const auto base = has_kinks ? kink_pattern(net, x) : std::vector<bool>{};
        std::size_t done = 0;
        for (const std::size_t k : pick) {
            if (done == per_layer) {
                break;
            }
            double* p = params[k].first;
            const double saved = *p;
            *p = saved + step;
            const double up = loss_and_gradients<double>(net, x, t, nullptr, false);
            const bool crossed_up = has_kinks && kink_pattern(net, x) != base;
            *p = saved - step;
            const double down = loss_and_gradients<double>(net, x, t, nullptr, false);
            const bool crossed_down = has_kinks && kink_pattern(net, x) != base;
            *p = saved;
            if (crossed_up || crossed_down) {
                ++report.skipped_kinks;
                continue;
            }
            ++done;
            const double fd = (up - down) / (2.0 * step);
            const double analytic = params[k].second;
            const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
            report.per_layer[li] = std::max(report.per_layer[li], rel);
            ++report.checked;
        }
        report.max_relative = std::max(report.max_relative, report.per_layer[li]);
    }
    return report;
}

}  // namespace wakeforge
