#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/network.hpp"

namespace wakeforge {

namespace {

constexpr std::string_view kMagic = "WKNM";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxWidth = 1u << 24;

template <typename Derived>
void put(ByteWriter& w, const Eigen::DenseBase<Derived>& m) {
    // Row-major regardless of Eigen's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            w.f32(m(r, c));
        }
    }
}

Eigen::VectorXf get_vec(ByteReader& r, std::size_t n) {
    Eigen::VectorXf v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = r.f32();
    }
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const NetworkModel& model) {
    validate_network(model);
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(model.kind));
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& l : model.layers) {
        w.u32(static_cast<std::uint32_t>(l.in_width()));
        w.u32(static_cast<std::uint32_t>(l.out_width()));
        w.u8(static_cast<std::uint8_t>(l.activation));
        w.u8(l.trainable ? 1 : 0);
        w.u8(l.batch_norm ? 1 : 0);
        put(w, l.weights);
        put(w, l.bias);
        if (l.batch_norm) {
            put(w, l.batch_norm->gamma);
            put(w, l.batch_norm->beta);
            put(w, l.batch_norm->running_mean);
            put(w, l.batch_norm->running_var);
        }
    }
    put(w, model.input_norm.mean);
    put(w, model.input_norm.stddev);
    put(w, model.output_norm.mean);
    put(w, model.output_norm.stddev);
    w.u32(static_cast<std::uint32_t>(model.out_nx));
    w.u32(static_cast<std::uint32_t>(model.out_ny));
    return w.bytes();
}

NetworkModel deserialize_model(std::vector<std::uint8_t> bytes, const std::string& origin) {
    ByteReader r(std::move(bytes), origin);
    if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
        throw FormatError(origin + ": not a model file (bad magic)");
    }
    const auto version = r.u32();
    if (version != kVersion) {
        throw FormatError(origin + ": unsupported model version " + std::to_string(version));
    }
    NetworkModel model;
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(NetworkKind::Generic)) {
        throw FormatError(origin + ": unknown network kind " + std::to_string(kind));
    }
    model.kind = static_cast<NetworkKind>(kind);
    const auto n_layers = r.u32();
    if (n_layers == 0 || n_layers > 64) {
        throw FormatError(origin + ": implausible layer count " + std::to_string(n_layers));
    }
    for (std::uint32_t li = 0; li < n_layers; ++li) {
        const auto in = r.u32();
        const auto out = r.u32();
        if (in == 0 || out == 0 || in > kMaxWidth || out > kMaxWidth) {
            throw FormatError(origin + ": implausible layer width");
        }
        DenseLayer<float> l;
        const auto act = r.u8();
        if (act > static_cast<std::uint8_t>(Activation::LeakyRelu)) {
            throw FormatError(origin + ": unknown activation tag " + std::to_string(act));
        }
        l.activation = static_cast<Activation>(act);
        l.trainable = r.u8() != 0;
        const bool bn = r.u8() != 0;
        if (r.remaining() / 4 < static_cast<std::size_t>(in) * out) {
            throw FormatError(origin + ": truncated file");
        }
        l.weights.resize(out, in);
        for (std::uint32_t i = 0; i < out; ++i) {
            for (std::uint32_t j = 0; j < in; ++j) {
                l.weights(i, j) = r.f32();
            }
        }
        l.bias = get_vec(r, out);
        if (bn) {
            BatchNormBlock<float> b;
            b.gamma = get_vec(r, out);
            b.beta = get_vec(r, out);
            b.running_mean = get_vec(r, out);
            b.running_var = get_vec(r, out);
            l.batch_norm = std::move(b);
        }
        model.layers.push_back(std::move(l));
    }
    const std::size_t n_in = model.input_width();
    const std::size_t n_out = model.output_width();
    model.input_norm.mean = get_vec(r, n_in);
    model.input_norm.stddev = get_vec(r, n_in);
    model.output_norm.mean = get_vec(r, n_out);
    model.output_norm.stddev = get_vec(r, n_out);
    model.out_nx = r.u32();
    model.out_ny = r.u32();
    if (!r.at_end()) {
        throw FormatError(origin + ": trailing bytes after model footer");
    }
    try {
        validate_network(model);
    } catch (const ModelError& e) {
        throw FormatError(origin + ": " + e.what());
    }
    return model;
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    ByteWriter w;
    const auto bytes = serialize_model(model);
    w.raw(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    w.write_to(path);
}

NetworkModel load_model(const std::filesystem::path& path) {
    auto reader = ByteReader::from_file(path);
    const auto s = reader.raw(reader.remaining());
    return deserialize_model(std::vector<std::uint8_t>(s.begin(), s.end()), path.string());
}

}  // namespace wakeforge
