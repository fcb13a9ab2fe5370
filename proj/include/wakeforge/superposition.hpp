#pragma once

#include "wakeforge/turbine.hpp"
#include "wakeforge/wakes.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace wakeforge {

/// One wake's speed at a point together with the hub speed of the turbine
/// that generated it.
struct WakeContribution {
    double speed;
    double hub_speed;
};

/// Sum-of-squares combination of normalised deficits, scaled by the farm
/// inlet speed and clamped below at zero.
double sos_combine(std::span<const WakeContribution> wakes, double u_inf);

/// Anything able to produce a single-turbine wake tile for given inflow.
class TileProvider {
public:
    virtual ~TileProvider() = default;
    virtual WakeField tile(const FlowConditions& inflow) const = 0;
};

class GaussianTileProvider final : public TileProvider {
public:
    GaussianTileProvider(TurbineSpec spec, std::size_t nx, std::size_t ny)
        : spec_(std::move(spec)), nx_(nx), ny_(ny) {}
    WakeField tile(const FlowConditions& inflow) const override;

private:
    TurbineSpec spec_;
    std::size_t nx_;
    std::size_t ny_;
};

class CurlTileProvider final : public TileProvider {
public:
    CurlTileProvider(TurbineSpec spec, CurlSolverConfig cfg, std::size_t nx, std::size_t ny)
        : spec_(std::move(spec)), cfg_(cfg), nx_(nx), ny_(ny) {}
    WakeField tile(const FlowConditions& inflow) const override;

private:
    TurbineSpec spec_;
    CurlSolverConfig cfg_;
    std::size_t nx_;
    std::size_t ny_;
};

/// A wake already placed on the farm.
struct PlacedWake {
    std::size_t index;
    Vec2 position;
    const WakeField* tile;

    double hub_speed() const { return tile->conditions.u0; }
    /// Normalised deficit (>= 0) of this wake at a farm point.
    double deficit_at(double x, double y) const;
};

struct TiQuery {
    std::size_t index;
    Vec2 position;
    double ti_inflow;
    double yaw;
    std::span<const double> line_speeds;
    std::span<const Vec2> line_points;
    std::span<const PlacedWake> upstream;
    const TurbineSpec* spec;
};

class TiProvider {
public:
    virtual ~TiProvider() = default;
    virtual double local_ti(const TiQuery& query) const = 0;
};

/// Uses the farm inflow TI for every turbine (no wake-added turbulence).
class AmbientTiProvider final : public TiProvider {
public:
    double local_ti(const TiQuery& query) const override { return query.ti_inflow; }
};

/// Reference local TI: the added-turbulence correlation of every upstream
/// wake, weighted by how much of that wake's cross-section the rotor line
/// sees; the strongest contribution is combined with the ambient value.
class ReferenceTiProvider final : public TiProvider {
public:
    explicit ReferenceTiProvider(TiOracleConstants constants = {}) : constants_(constants) {}
    double local_ti(const TiQuery& query) const override;

private:
    TiOracleConstants constants_;
};

struct Inflow {
    double u_inf = 8.0;
    double ti_inf = 0.06;
};

struct TurbineDiagnostics {
    double hub_speed = 0.0;
    double local_ti = 0.0;
    FlowConditions tile_conditions;
    std::vector<double> line_speeds;
};

struct FarmFlowField {
    PlaneGrid grid;
    std::vector<double> values;  // empty when the grid was not requested
    double u_inf = 0.0;
    double d0 = 0.0;
    std::vector<Vec2> positions;
    std::vector<std::size_t> order;  // processing order (ascending x, then y)
    std::vector<TurbineDiagnostics> turbines;  // indexed like the layout
    std::vector<WakeField> tiles;              // indexed like the layout

    double at(std::size_t i, std::size_t j) const { return values[i * grid.ny + j]; }
    bool has_values() const { return !values.empty(); }
};

struct AssemblyOptions {
    bool build_grid = true;
    std::optional<PlaneGrid> grid;  // overrides the automatic canvas
    std::size_t n_line = 21;
    double line_offset = 50.0;  // m upstream of the rotor
};

/// Farm canvas: layout bounding box grown by 2 D upstream and laterally and
/// 10 D downstream, with pixels no larger than the tile's.
PlaneGrid farm_grid(std::span<const Vec2> positions, double d0, const PlaneGrid& tile_grid);

/// Points of the rotor line: n_line samples spanning one diameter,
/// `offset` metres upstream of the hub.
std::vector<Vec2> rotor_line_points(Vec2 hub, double d0, std::size_t n_line, double offset);

/// Turbines sorted by ascending x, ties by ascending y.
std::vector<std::size_t> processing_order(std::span<const Vec2> positions);

FarmFlowField assemble_farm_flow(const FarmLayout& layout, const Inflow& inflow, const TileProvider& tiles,
                                 const TiProvider& ti, const AssemblyOptions& options = {});

/// Bilinear samples of the assembled field along turbine `index`'s rotor line.
std::vector<double> rotor_line_sample(const FarmFlowField& field, std::size_t index, std::size_t n_line = 21,
                                      double offset = 50.0);

/// Mean of rotor_line_sample.
double hub_speed(const FarmFlowField& field, std::size_t index, std::size_t n_line = 21, double offset = 50.0);

}  // namespace wakeforge
