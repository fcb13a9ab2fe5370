#pragma once

#include "wakeforge/common.hpp"
#include "wakeforge/dataset.hpp"
#include "wakeforge/network.hpp"
#include "wakeforge/superposition.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wakeforge {

/// Wake tiles decoded by a trained DDN, clamped to [0, u0].
class SurrogateTileProvider final : public TileProvider {
public:
    SurrogateTileProvider(std::shared_ptr<const NetworkModel> decoder, const TurbineSpec& spec);
    WakeField tile(const FlowConditions& inflow) const override;

private:
    std::shared_ptr<const NetworkModel> decoder_;
    PlaneGrid grid_;
};

/// Local TI from the TI predictor network.
class NetworkTiProvider final : public TiProvider {
public:
    explicit NetworkTiProvider(std::shared_ptr<const NetworkModel> net) : net_(std::move(net)) {}
    double local_ti(const TiQuery& query) const override;

private:
    std::shared_ptr<const NetworkModel> net_;
};

class PowerModel {
public:
    virtual ~PowerModel() = default;
    virtual double power(const TurbineDiagnostics& turbine, double yaw, double ti_inflow) const = 0;
};

/// turbine_power on the turbine's hub speed.
class ReferencePowerModel final : public PowerModel {
public:
    explicit ReferencePowerModel(TurbineSpec spec) : spec_(std::move(spec)) {}
    double power(const TurbineDiagnostics& turbine, double yaw, double ti_inflow) const override;

private:
    TurbineSpec spec_;
};

class NetworkPowerModel final : public PowerModel {
public:
    explicit NetworkPowerModel(std::shared_ptr<const NetworkModel> net) : net_(std::move(net)) {}
    double power(const TurbineDiagnostics& turbine, double yaw, double ti_inflow) const override;

private:
    std::shared_ptr<const NetworkModel> net_;
};

enum class EvaluatorTag { ReferenceGaussian, ReferenceCurl, SurrogateGaussian, SurrogateCurl, SurrogateCurlTL };

std::string to_string(EvaluatorTag tag);
EvaluatorTag parse_evaluator_tag(std::string_view name);
bool is_reference(EvaluatorTag tag);
/// The reference pipeline a surrogate's decisions are re-scored with.
EvaluatorTag reference_of(EvaluatorTag tag);

struct Evaluator {
    EvaluatorTag tag = EvaluatorTag::ReferenceGaussian;
    TurbineSpec spec;
    std::shared_ptr<const TileProvider> tiles;
    std::shared_ptr<const TiProvider> ti;
    std::shared_ptr<const PowerModel> power;
};

Evaluator make_reference_evaluator(WakeModelKind kind, const TurbineSpec& spec, std::size_t nx = 64,
                                   std::size_t ny = 64, const CurlSolverConfig& curl = {});

/// Networks of a surrogate pipeline. Without a TI network the ambient TI is
/// used for every turbine; without a power network the reference power
/// curve is applied to the hub speed.
struct SurrogateBundle {
    std::shared_ptr<const NetworkModel> decoder;
    std::shared_ptr<const NetworkModel> ti_net;
    std::shared_ptr<const NetworkModel> power_net;
};

Evaluator make_surrogate_evaluator(EvaluatorTag tag, const TurbineSpec& spec, const SurrogateBundle& nets);

struct FarmEvaluation {
    FarmFlowField flow;
    std::vector<double> powers;  // W, indexed like the layout
    double total = 0.0;
};

FarmEvaluation evaluate_farm(const Evaluator& evaluator, const FarmLayout& layout, const Inflow& inflow,
                             bool build_grid = false);

/// Training data for the power and TI predictors, labelled by the reference
/// Gaussian pipeline on randomised farms.
struct PredictorDataConfig {
    std::size_t samples = 2000;
    std::size_t layouts = 200;
    std::size_t min_turbines = 4;
    std::size_t max_turbines = 6;
    double u_min = 4.0;
    double u_max = 14.0;
    double ti_min = 0.03;
    double ti_max = 0.18;
    double yaw_limit = 35.0;
    double x_extent = 15.0;  // diameters
    double y_extent = 2.5;   // half-width, diameters
    double min_spacing = 2.4;  // diameters
    std::size_t nx = 64;
    std::size_t ny = 64;
    std::uint64_t seed = 11;
    unsigned threads = 0;
};

struct PredictorSample {
    std::vector<double> line_speeds;
    double ti_inflow = 0.0;
    double yaw = 0.0;
    double power = 0.0;
    double local_ti = 0.0;
    std::size_t layout = 0;
};

/// Random feasible layout of `count` turbines in the configured box.
FarmLayout random_layout(std::size_t count, const PredictorDataConfig& cfg, const TurbineSpec& spec, Rng& rng);

std::vector<PredictorSample> generate_predictor_samples(const PredictorDataConfig& cfg, const TurbineSpec& spec);

/// Power targets; every sample shares the set's mean power as error scale.
TrainingSet power_training_set(std::span<const PredictorSample> samples);
/// Local-TI targets scaled by the reference TI itself.
TrainingSet ti_training_set(std::span<const PredictorSample> samples);

/// Regularly spaced rows of `columns` turbines (dx, dy in diameters), the
/// layout family used for timing sweeps.
FarmLayout grid_layout(std::size_t count, std::size_t columns, double dx, double dy, const TurbineSpec& spec);

/// Layout file: `turbine = x y [yaw]` lines plus optional `min_spacing` (m)
/// and `box = x_min x_max y_min y_max` (m).
struct LayoutFile {
    FarmLayout layout;
    std::optional<std::array<double, 4>> box;
};
LayoutFile parse_layout(std::string_view text, const std::string& origin, const TurbineSpec& spec);
LayoutFile load_layout(const std::filesystem::path& path, const TurbineSpec& spec);

}  // namespace wakeforge
