#include "wakeforge/pipeline.hpp"

#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wakeforge {

SurrogateTileProvider::SurrogateTileProvider(std::shared_ptr<const NetworkModel> decoder, const TurbineSpec& spec)
    : decoder_(std::move(decoder)) {
    if (!decoder_ || decoder_->kind != NetworkKind::Decoder) {
        throw ModelError("surrogate tiles need a decoder network");
    }
    validate_network(*decoder_);
    grid_ = standard_tile_grid(spec.rotor_diameter, decoder_->out_nx, decoder_->out_ny);
}

WakeField SurrogateTileProvider::tile(const FlowConditions& inflow) const {
    WakeField field{grid_, ddn_forward(*decoder_, inflow), inflow};
    for (auto& v : field.values) {
        v = std::clamp(v, 0.0, inflow.u0);
    }
    return field;
}

double NetworkTiProvider::local_ti(const TiQuery& query) const {
    return ti_net_forward(*net_, query.line_speeds, query.ti_inflow, query.yaw);
}

double ReferencePowerModel::power(const TurbineDiagnostics& turbine, double yaw, double) const {
    return turbine_power(spec_, turbine.hub_speed, yaw);
}

double NetworkPowerModel::power(const TurbineDiagnostics& turbine, double yaw, double ti_inflow) const {
    return power_net_forward(*net_, turbine.line_speeds, ti_inflow, yaw);
}

std::string to_string(EvaluatorTag tag) {
    switch (tag) {
        case EvaluatorTag::ReferenceGaussian:
            return "reference-gaussian";
        case EvaluatorTag::ReferenceCurl:
            return "reference-curl";
        case EvaluatorTag::SurrogateGaussian:
            return "surrogate-gaussian";
        case EvaluatorTag::SurrogateCurl:
            return "surrogate-curl";
        case EvaluatorTag::SurrogateCurlTL:
            return "surrogate-curl-TL";
    }
    return "unknown";
}

EvaluatorTag parse_evaluator_tag(std::string_view name) {
    for (const auto tag : {EvaluatorTag::ReferenceGaussian, EvaluatorTag::ReferenceCurl, EvaluatorTag::SurrogateGaussian,
                           EvaluatorTag::SurrogateCurl, EvaluatorTag::SurrogateCurlTL}) {
        if (to_string(tag) == name) {
            return tag;
        }
    }
    throw ConfigError("unknown evaluator '" + std::string(name) + "'");
}

bool is_reference(EvaluatorTag tag) {
    return tag == EvaluatorTag::ReferenceGaussian || tag == EvaluatorTag::ReferenceCurl;
}

EvaluatorTag reference_of(EvaluatorTag tag) {
    switch (tag) {
        case EvaluatorTag::ReferenceGaussian:
        case EvaluatorTag::SurrogateGaussian:
            return EvaluatorTag::ReferenceGaussian;
        default:
            return EvaluatorTag::ReferenceCurl;
    }
}

Evaluator make_reference_evaluator(WakeModelKind kind, const TurbineSpec& spec, std::size_t nx, std::size_t ny,
                                   const CurlSolverConfig& curl) {
    Evaluator e;
    e.spec = spec;
    if (kind == WakeModelKind::Curl) {
        e.tag = EvaluatorTag::ReferenceCurl;
        e.tiles = std::make_shared<CurlTileProvider>(spec, curl, nx, ny);
    } else {
        e.tag = EvaluatorTag::ReferenceGaussian;
        e.tiles = std::make_shared<GaussianTileProvider>(spec, nx, ny);
    }
    e.ti = std::make_shared<ReferenceTiProvider>();
    e.power = std::make_shared<ReferencePowerModel>(spec);
    return e;
}

Evaluator make_surrogate_evaluator(EvaluatorTag tag, const TurbineSpec& spec, const SurrogateBundle& nets) {
    if (is_reference(tag)) {
        throw ConfigError("surrogate evaluator needs a surrogate tag, got " + to_string(tag));
    }
    if (!nets.decoder || nets.decoder->kind != NetworkKind::Decoder) {
        throw ConfigError("surrogate evaluator needs a decoder network");
    }
    Evaluator e;
    e.tag = tag;
    e.spec = spec;
    e.tiles = std::make_shared<SurrogateTileProvider>(nets.decoder, spec);
    if (nets.ti_net) {
        e.ti = std::make_shared<NetworkTiProvider>(nets.ti_net);
    } else {
        e.ti = std::make_shared<AmbientTiProvider>();
    }
    if (nets.power_net) {
        e.power = std::make_shared<NetworkPowerModel>(nets.power_net);
    } else {
        e.power = std::make_shared<ReferencePowerModel>(spec);
    }
    return e;
}

FarmEvaluation evaluate_farm(const Evaluator& evaluator, const FarmLayout& layout, const Inflow& inflow,
                             bool build_grid) {
    AssemblyOptions opts;
    opts.build_grid = build_grid;
    FarmEvaluation out;
    out.flow = assemble_farm_flow(layout, inflow, *evaluator.tiles, *evaluator.ti, opts);
    out.powers.resize(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        out.powers[i] = evaluator.power->power(out.flow.turbines[i], layout.yaws[i], inflow.ti_inf);
        out.total += out.powers[i];
    }
    return out;
}

FarmLayout random_layout(std::size_t count, const PredictorDataConfig& cfg, const TurbineSpec& spec, Rng& rng) {
    const double d0 = spec.rotor_diameter;
    FarmLayout layout;
    layout.spec = spec;
    layout.min_spacing = cfg.min_spacing * d0;
    // Half the farms are jittered rows so tightly packed in-line cascades are represented.
    const bool row = rng.uniform() < 0.5;
    for (int attempt = 0; attempt < 100000 && layout.positions.size() < count; ++attempt) {
        Vec2 p;
        if (row && !layout.positions.empty()) {
            const Vec2 last = layout.positions.back();
            p = {last.x + rng.uniform(cfg.min_spacing + 0.1, 6.0) * d0, last.y + rng.uniform(-0.3, 0.3) * d0};
        } else {
            p = {rng.uniform(0.0, cfg.x_extent) * d0, rng.uniform(-cfg.y_extent, cfg.y_extent) * d0};
        }
        const bool clear = std::all_of(layout.positions.begin(), layout.positions.end(), [&](const Vec2& q) {
            return std::hypot(p.x - q.x, p.y - q.y) >= layout.min_spacing;
        });
        if (clear) {
            layout.positions.push_back(p);
        }
    }
    if (layout.positions.size() < count) {
        throw LayoutError("could not place " + std::to_string(count) + " turbines in the sampling box");
    }
    layout.yaws.assign(count, 0.0);
    return layout;
}

std::vector<PredictorSample> generate_predictor_samples(const PredictorDataConfig& cfg, const TurbineSpec& spec) {
    if (cfg.samples == 0 || cfg.layouts == 0 || cfg.min_turbines == 0 || cfg.min_turbines > cfg.max_turbines) {
        throw ConfigError("invalid predictor data configuration");
    }
    Rng rng(cfg.seed);
    std::vector<FarmLayout> layouts;
    std::size_t per_round = 0;
    for (std::size_t l = 0; l < cfg.layouts; ++l) {
        const std::size_t count = cfg.min_turbines + rng.index(cfg.max_turbines - cfg.min_turbines + 1);
        layouts.push_back(random_layout(count, cfg, spec, rng));
        per_round += count;
    }
    struct Job {
        std::size_t layout;
        Inflow inflow;
        std::vector<double> yaws;
    };
    std::vector<Job> jobs;
    const std::size_t rounds = (cfg.samples + per_round - 1) / per_round;
    for (std::size_t r = 0; r < rounds; ++r) {
        for (std::size_t l = 0; l < layouts.size(); ++l) {
            Job job{l, {rng.uniform(cfg.u_min, cfg.u_max), rng.uniform(cfg.ti_min, cfg.ti_max)}, {}};
            const bool aligned = rng.uniform() < 1.0 / 3.0;
            for (std::size_t t = 0; t < layouts[l].size(); ++t) {
                const double yaw = rng.uniform(-cfg.yaw_limit, cfg.yaw_limit);
                job.yaws.push_back(aligned ? 0.0 : yaw);
            }
            jobs.push_back(std::move(job));
        }
    }

    const Evaluator reference = make_reference_evaluator(WakeModelKind::Gaussian, spec, cfg.nx, cfg.ny);
    std::vector<std::vector<PredictorSample>> results(jobs.size());
    parallel_for(jobs.size(), cfg.threads == 0 ? default_parallelism() : cfg.threads, [&](std::size_t k) {
        const auto& job = jobs[k];
        FarmLayout layout = layouts[job.layout];
        layout.yaws = job.yaws;
        const auto eval = evaluate_farm(reference, layout, job.inflow);
        for (const std::size_t i : eval.flow.order) {
            const auto& t = eval.flow.turbines[i];
            results[k].push_back({t.line_speeds, job.inflow.ti_inf, layout.yaws[i], eval.powers[i], t.local_ti,
                                  job.layout});
        }
    });
    std::vector<PredictorSample> out;
    for (auto& r : results) {
        for (auto& s : r) {
            if (out.size() < cfg.samples) {
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

namespace {

TrainingSet predictor_set(std::span<const PredictorSample> samples, bool power) {
    if (samples.empty()) {
        throw ConfigError("predictor set is empty");
    }
    const std::size_t n_line = samples.front().line_speeds.size();
    TrainingSet set;
    set.inputs.resize(static_cast<Eigen::Index>(n_line + 2), static_cast<Eigen::Index>(samples.size()));
    set.targets.resize(1, static_cast<Eigen::Index>(samples.size()));
    double mean_power = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        if (s.line_speeds.size() != n_line) {
            throw ConfigError("predictor samples disagree on the rotor-line length");
        }
        set.inputs.col(static_cast<Eigen::Index>(k)) = predictor_input(s.line_speeds, s.ti_inflow, s.yaw);
        set.targets(0, static_cast<Eigen::Index>(k)) = static_cast<float>(power ? s.power : s.local_ti);
        mean_power += s.power;
    }
    mean_power /= static_cast<double>(samples.size());
    for (const auto& s : samples) {
        set.scales.push_back(power ? mean_power : s.local_ti);
    }
    return set;
}

}  // namespace

TrainingSet power_training_set(std::span<const PredictorSample> samples) { return predictor_set(samples, true); }

TrainingSet ti_training_set(std::span<const PredictorSample> samples) { return predictor_set(samples, false); }

FarmLayout grid_layout(std::size_t count, std::size_t columns, double dx, double dy, const TurbineSpec& spec) {
    if (count == 0 || columns == 0) {
        throw ConfigError("grid layout needs at least one turbine and one column");
    }
    FarmLayout layout;
    layout.spec = spec;
    const double d0 = spec.rotor_diameter;
    for (std::size_t i = 0; i < count; ++i) {
        layout.positions.push_back({static_cast<double>(i % columns) * dx * d0, static_cast<double>(i / columns) * dy * d0});
    }
    layout.yaws.assign(count, 0.0);
    layout.min_spacing = std::min(dx, dy) * d0;
    return layout;
}

LayoutFile parse_layout(std::string_view text, const std::string& origin, const TurbineSpec& spec) {
    const auto doc = parse_key_value(text, origin);
    LayoutFile out;
    out.layout.spec = spec;
    for (const auto& row : doc.all("turbine")) {
        const auto v = parse_numbers(row, origin);
        if (v.size() != 2 && v.size() != 3) {
            throw ConfigError(origin + ": turbine rows need 'x y [yaw]'");
        }
        out.layout.positions.push_back({v[0], v[1]});
        out.layout.yaws.push_back(v.size() == 3 ? v[2] : 0.0);
    }
    out.layout.min_spacing = doc.number_or("min_spacing", 0.0);
    if (doc.has("box")) {
        const auto b = parse_numbers(doc.get("box"), origin);
        if (b.size() != 4 || !(b[0] < b[1]) || !(b[2] < b[3])) {
            throw ConfigError(origin + ": box needs 'x_min x_max y_min y_max' with min < max");
        }
        out.box = std::array<double, 4>{b[0], b[1], b[2], b[3]};
    }
    try {
        out.layout.validate(false);
    } catch (const LayoutError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return out;
}

LayoutFile load_layout(const std::filesystem::path& path, const TurbineSpec& spec) {
    return parse_layout(read_text_file(path), path.string(), spec);
}

}  // namespace wakeforge
