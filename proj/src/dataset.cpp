#include "wakeforge/dataset.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace wakeforge {

namespace {

constexpr std::string_view kMagic = "WKND";
constexpr std::uint32_t kVersion = 1;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string to_string(WakeModelKind kind) { return kind == WakeModelKind::Curl ? "curl" : "gaussian"; }

WakeModelKind parse_wake_model(std::string_view name) {
    if (name == "gaussian") {
        return WakeModelKind::Gaussian;
    }
    if (name == "curl") {
        return WakeModelKind::Curl;
    }
    throw ConfigError("unknown wake model '" + std::string(name) + "' (expected gaussian or curl)");
}

void ParameterRanges::validate() const {
    if (!(u_min < u_max) || !(ti_min < ti_max) || !(yaw_min < yaw_max)) {
        throw ConfigError("parameter ranges must satisfy min < max");
    }
    if (!(u_min > 0.0) || !(ti_min > 0.0) || yaw_min < -89.0 || yaw_max > 89.0) {
        throw ConfigError("parameter ranges outside the physical domain");
    }
}

bool ParameterRanges::contains(const FlowConditions& c) const {
    // Bounds are compared at single precision, the resolution conditions are stored with.
    const auto in = [](double v, double lo, double hi) { return v >= to_f32(lo) && v <= to_f32(hi); };
    return in(c.u0, u_min, u_max) && in(c.ti, ti_min, ti_max) && in(c.yaw, yaw_min, yaw_max);
}

std::vector<FlowConditions> sample_conditions(std::size_t n, const ParameterRanges& ranges, std::uint64_t seed) {
    if (n == 0) {
        throw ConfigError("sample count must be at least 1");
    }
    ranges.validate();
    Rng rng(seed);
    const double lo[3] = {ranges.u_min, ranges.ti_min, ranges.yaw_min};
    const double hi[3] = {ranges.u_max, ranges.ti_max, ranges.yaw_max};
    std::vector<std::vector<double>> columns(3, std::vector<double>(n));
    for (int d = 0; d < 3; ++d) {
        std::vector<std::size_t> strata(n);
        std::iota(strata.begin(), strata.end(), 0);
        rng.shuffle(std::span<std::size_t>(strata));
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(n);
            columns[d][i] = std::clamp(to_f32(lo[d] + (hi[d] - lo[d]) * u), to_f32(lo[d]), to_f32(hi[d]));
        }
    }
    std::vector<FlowConditions> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = {columns[0][i], columns[1][i], columns[2][i]};
    }
    return out;
}

std::vector<std::size_t> WakeDataset::training_indices() const {
    std::vector<std::size_t> idx(samples.size() - validation_count);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

std::vector<std::size_t> WakeDataset::validation_indices() const {
    std::vector<std::size_t> idx(validation_count);
    std::iota(idx.begin(), idx.end(), samples.size() - validation_count);
    return idx;
}

void WakeDataset::validate() const {
    if (nx < 2 || ny < 2) {
        throw FormatError("dataset grid must be at least 2x2");
    }
    if (validation_count > samples.size()) {
        throw FormatError("validation count exceeds sample count");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.tile.size() != nx * ny) {
            throw FormatError("sample " + std::to_string(i) + " has the wrong tile size");
        }
        if (!ranges.contains(s.conditions)) {
            throw FormatError("sample " + std::to_string(i) + " lies outside the declared ranges");
        }
        const auto u0 = static_cast<float>(s.conditions.u0);
        for (const float v : s.tile) {
            if (!(v >= 0.0f && v <= u0)) {
                throw FormatError("sample " + std::to_string(i) + " has speeds outside [0, u0]");
            }
        }
    }
}

WakeField reference_tile(WakeModelKind kind, const FlowConditions& cond, const TurbineSpec& spec,
                         const CurlSolverConfig& curl, std::size_t nx, std::size_t ny) {
    return kind == WakeModelKind::Curl ? curl_wake_tile(cond, spec, curl, nx, ny)
                                       : gaussian_wake_tile(cond, spec, nx, ny);
}

WakeDataset generate_dataset(const GenerationConfig& cfg) {
    cfg.spec.validate();
    if (cfg.kind == WakeModelKind::Curl) {
        cfg.curl.validate();
    }
    if (cfg.nx < 2 || cfg.ny < 2) {
        throw ConfigError("tile grid must be at least 2x2");
    }
    WakeDataset ds;
    ds.kind = cfg.kind;
    ds.nx = cfg.nx;
    ds.ny = cfg.ny;
    ds.seed = cfg.seed;
    ds.ranges = cfg.ranges;

    std::vector<FlowConditions> conds;
    if (cfg.extra_validation) {
        conds = sample_conditions(cfg.n, cfg.ranges, cfg.seed);
        if (cfg.validation_count > 0) {
            const auto extra = sample_conditions(cfg.validation_count, cfg.ranges, cfg.seed + 1);
            conds.insert(conds.end(), extra.begin(), extra.end());
        }
    } else {
        if (cfg.validation_count >= cfg.n) {
            throw ConfigError("validation count must be smaller than the sample count");
        }
        conds = sample_conditions(cfg.n, cfg.ranges, cfg.seed);
    }
    ds.validation_count = cfg.validation_count;
    ds.samples.resize(conds.size());

    const unsigned threads = cfg.threads == 0 ? default_parallelism() : cfg.threads;
    parallel_for(conds.size(), threads, [&](std::size_t i) {
        const auto& c = conds[i];
        WakeField tile;
        try {
            tile = reference_tile(cfg.kind, c, cfg.spec, cfg.curl, cfg.nx, cfg.ny);
        } catch (const SolverInstabilityError& e) {
            std::ostringstream os;
            os << "sample " << i << " (u0=" << c.u0 << " ti=" << c.ti << " yaw=" << c.yaw << "): " << e.what();
            throw SolverInstabilityError(os.str(), e.x_station());
        }
        auto& s = ds.samples[i];
        s.conditions = c;
        s.tile.assign(tile.values.begin(), tile.values.end());
    });
    return ds;
}

std::vector<std::uint8_t> serialize_dataset(const WakeDataset& ds) {
    ds.validate();
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ds.kind));
    w.u32(static_cast<std::uint32_t>(ds.samples.size()));
    w.u32(static_cast<std::uint32_t>(ds.nx));
    w.u32(static_cast<std::uint32_t>(ds.ny));
    w.u64(ds.seed);
    for (const double b : {ds.ranges.u_min, ds.ranges.u_max, ds.ranges.ti_min, ds.ranges.ti_max, ds.ranges.yaw_min,
                           ds.ranges.yaw_max}) {
        w.f32(static_cast<float>(b));
    }
    for (const auto& s : ds.samples) {
        w.f32(static_cast<float>(s.conditions.u0));
        w.f32(static_cast<float>(s.conditions.ti));
        w.f32(static_cast<float>(s.conditions.yaw));
        for (const float v : s.tile) {
            w.f32(v);
        }
    }
    w.u32(static_cast<std::uint32_t>(ds.validation_count));
    return w.bytes();
}

WakeDataset deserialize_dataset(std::vector<std::uint8_t> bytes, const std::string& origin) {
    ByteReader r(std::move(bytes), origin);
    if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
        throw FormatError(origin + ": not a dataset file (bad magic)");
    }
    const auto version = r.u32();
    if (version != kVersion) {
        throw FormatError(origin + ": unsupported dataset version " + std::to_string(version));
    }
    WakeDataset ds;
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(WakeModelKind::Curl)) {
        throw FormatError(origin + ": unknown wake model tag " + std::to_string(kind));
    }
    ds.kind = static_cast<WakeModelKind>(kind);
    const std::size_t n = r.u32();
    ds.nx = r.u32();
    ds.ny = r.u32();
    ds.seed = r.u64();
    ds.ranges.u_min = r.f32();
    ds.ranges.u_max = r.f32();
    ds.ranges.ti_min = r.f32();
    ds.ranges.ti_max = r.f32();
    ds.ranges.yaw_min = r.f32();
    ds.ranges.yaw_max = r.f32();
    if (ds.nx < 2 || ds.ny < 2 || ds.nx > 4096 || ds.ny > 4096) {
        throw FormatError(origin + ": implausible grid shape");
    }
    const std::size_t record = 4 * (3 + ds.nx * ds.ny);
    if (r.remaining() < n * record + 4) {
        throw FormatError(origin + ": truncated file");
    }
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        s.conditions.u0 = r.f32();
        s.conditions.ti = r.f32();
        s.conditions.yaw = r.f32();
        s.tile.resize(ds.nx * ds.ny);
        for (auto& v : s.tile) {
            v = r.f32();
        }
    }
    ds.validation_count = r.u32();
    if (!r.at_end()) {
        throw FormatError(origin + ": trailing bytes after dataset footer");
    }
    ds.validate();
    return ds;
}

std::string dataset_manifest(const WakeDataset& ds) {
    std::ostringstream os;
    os.precision(9);
    os << "format = WKND\n"
       << "version = " << kVersion << '\n'
       << "model = " << to_string(ds.kind) << '\n'
       << "samples = " << ds.samples.size() << '\n'
       << "training = " << ds.samples.size() - ds.validation_count << '\n'
       << "validation = " << ds.validation_count << '\n'
       << "nx = " << ds.nx << '\n'
       << "ny = " << ds.ny << '\n'
       << "seed = " << ds.seed << '\n'
       << "u0_range = " << static_cast<float>(ds.ranges.u_min) << ' ' << static_cast<float>(ds.ranges.u_max) << '\n'
       << "ti_range = " << static_cast<float>(ds.ranges.ti_min) << ' ' << static_cast<float>(ds.ranges.ti_max) << '\n'
       << "yaw_range = " << static_cast<float>(ds.ranges.yaw_min) << ' ' << static_cast<float>(ds.ranges.yaw_max)
       << '\n';
    return os.str();
}

void save_dataset(const WakeDataset& ds, const std::filesystem::path& path) {
    const auto bytes = serialize_dataset(ds);
    ByteWriter w;
    w.raw(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    w.write_to(path);
    write_text_file(path.string() + ".manifest", dataset_manifest(ds));
}

WakeDataset load_dataset(const std::filesystem::path& path) {
    auto reader = ByteReader::from_file(path);
    const auto s = reader.raw(reader.remaining());
    return deserialize_dataset(std::vector<std::uint8_t>(s.begin(), s.end()), path.string());
}

TrainingSet to_training_set(const WakeDataset& ds, std::span<const std::size_t> indices) {
    TrainingSet out;
    const auto n = static_cast<Eigen::Index>(indices.size());
    out.inputs.resize(3, n);
    out.targets.resize(static_cast<Eigen::Index>(ds.nx * ds.ny), n);
    out.scales.reserve(indices.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& s = ds.samples.at(indices[static_cast<std::size_t>(k)]);
        out.inputs(0, k) = static_cast<float>(s.conditions.u0);
        out.inputs(1, k) = static_cast<float>(s.conditions.ti);
        out.inputs(2, k) = static_cast<float>(s.conditions.yaw);
        out.targets.col(k) = Eigen::Map<const Eigen::VectorXf>(s.tile.data(), static_cast<Eigen::Index>(s.tile.size()));
        out.scales.push_back(s.conditions.u0);
    }
    return out;
}

TrainingSet training_part(const WakeDataset& ds) {
    const auto idx = ds.training_indices();
    return to_training_set(ds, idx);
}

TrainingSet validation_part(const WakeDataset& ds) {
    const auto idx = ds.validation_indices();
    return to_training_set(ds, idx);
}

}  // namespace wakeforge
