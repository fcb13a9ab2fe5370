#include "wakeforge/superposition.hpp"

#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wakeforge {

double sos_combine(std::span<const WakeContribution> wakes, double u_inf) {
    if (wakes.empty()) {
        throw DegenerateInputError("sum-of-squares needs at least one wake");
    }
    double sum = 0.0;
    for (const auto& w : wakes) {
        if (!(w.hub_speed > 0.0)) {
            throw DegenerateInputError("sum-of-squares requires positive hub speeds");
        }
        const double d = 1.0 - w.speed / w.hub_speed;
        sum += d * d;
    }
    return std::max(0.0, (1.0 - std::sqrt(sum)) * u_inf);
}

WakeField GaussianTileProvider::tile(const FlowConditions& inflow) const {
    return gaussian_wake_tile(inflow, spec_, nx_, ny_);
}

WakeField CurlTileProvider::tile(const FlowConditions& inflow) const {
    return curl_wake_tile(inflow, spec_, cfg_, nx_, ny_);
}

double PlacedWake::deficit_at(double x, double y) const {
    const double xr = x - position.x;
    if (xr < 0.0) {
        return 0.0;
    }
    const double hub = hub_speed();
    const double u = tile->sample(xr, y - position.y, hub);
    return std::max(0.0, 1.0 - u / hub);
}

namespace {

// Largest deficit across the tile's cross-section at streamwise offset xr.
double column_peak_deficit(const WakeField& tile, double xr) {
    const auto& g = tile.grid;
    const double fx = (xr - g.x_min) / g.dx();
    if (!(fx >= 0.0 && fx <= static_cast<double>(g.nx - 1))) {
        return 0.0;
    }
    const auto i0 = std::min(static_cast<std::size_t>(fx), g.nx - 2);
    const double t = fx - static_cast<double>(i0);
    double peak = 0.0;
    const double hub = tile.conditions.u0;
    for (std::size_t j = 0; j < g.ny; ++j) {
        const double u = (1.0 - t) * tile.at(i0, j) + t * tile.at(i0 + 1, j);
        peak = std::max(peak, 1.0 - u / hub);
    }
    return peak;
}

}  // namespace

double ReferenceTiProvider::local_ti(const TiQuery& q) const {
    const double d0 = q.spec->rotor_diameter;
    double strongest = 0.0;
    for (const auto& up : q.upstream) {
        const double dx = q.position.x - up.position.x;
        if (dx <= 0.0) {
            continue;
        }
        const double peak = column_peak_deficit(*up.tile, q.line_points.front().x - up.position.x);
        if (peak <= 1e-9) {
            continue;
        }
        double overlap = 0.0;
        for (const auto& p : q.line_points) {
            overlap += up.deficit_at(p.x, p.y);
        }
        overlap = std::min(1.0, overlap / (peak * static_cast<double>(q.line_points.size())));
        const double ct = effective_ct(*q.spec, up.tile->conditions);
        strongest = std::max(strongest, overlap * added_ti(q.ti_inflow, ct, dx, d0, constants_));
    }
    return std::sqrt(q.ti_inflow * q.ti_inflow + strongest * strongest);
}

PlaneGrid farm_grid(std::span<const Vec2> positions, double d0, const PlaneGrid& tile_grid) {
    double x_lo = positions.front().x;
    double x_hi = x_lo;
    double y_lo = positions.front().y;
    double y_hi = y_lo;
    for (const auto& p : positions) {
        x_lo = std::min(x_lo, p.x);
        x_hi = std::max(x_hi, p.x);
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
    }
    PlaneGrid g;
    g.x_min = x_lo - 2.0 * d0;
    g.x_max = x_hi + 10.0 * d0;
    g.y_min = y_lo - 2.0 * d0;
    g.y_max = y_hi + 2.0 * d0;
    g.nx = static_cast<std::size_t>(std::ceil((g.x_max - g.x_min) / tile_grid.dx() - 1e-9)) + 1;
    g.ny = static_cast<std::size_t>(std::ceil((g.y_max - g.y_min) / tile_grid.dy() - 1e-9)) + 1;
    return g;
}

std::vector<Vec2> rotor_line_points(Vec2 hub, double d0, std::size_t n_line, double offset) {
    std::vector<Vec2> pts(n_line);
    for (std::size_t k = 0; k < n_line; ++k) {
        const double s = n_line > 1 ? static_cast<double>(k) / static_cast<double>(n_line - 1) - 0.5 : 0.0;
        pts[k] = {hub.x - offset, hub.y + s * d0};
    }
    return pts;
}

std::vector<std::size_t> processing_order(std::span<const Vec2> positions) {
    std::vector<std::size_t> order(positions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (positions[a].x != positions[b].x) {
            return positions[a].x < positions[b].x;
        }
        return positions[a].y < positions[b].y;
    });
    return order;
}

FarmFlowField assemble_farm_flow(const FarmLayout& layout, const Inflow& inflow, const TileProvider& tiles,
                                 const TiProvider& ti, const AssemblyOptions& options) {
    layout.validate(false);
    if (!(inflow.u_inf > 0.0)) {
        throw DegenerateInputError("farm inflow speed must be positive");
    }
    const std::size_t n = layout.size();
    const double d0 = layout.spec.rotor_diameter;

    FarmFlowField field;
    field.u_inf = inflow.u_inf;
    field.d0 = d0;
    field.positions = layout.positions;
    field.order = processing_order(layout.positions);
    field.turbines.resize(n);
    field.tiles.resize(n);

    std::vector<PlacedWake> placed;
    placed.reserve(n);
    std::vector<WakeContribution> contributions;
    for (const std::size_t idx : field.order) {
        const Vec2 hub = layout.positions[idx];
        const auto points = rotor_line_points(hub, d0, options.n_line, options.line_offset);
        auto& diag = field.turbines[idx];
        diag.line_speeds.resize(points.size());
        for (std::size_t k = 0; k < points.size(); ++k) {
            contributions.clear();
            for (const auto& w : placed) {
                const double d = w.deficit_at(points[k].x, points[k].y);
                if (d > 0.0) {
                    contributions.push_back({w.hub_speed() * (1.0 - d), w.hub_speed()});
                }
            }
            diag.line_speeds[k] = contributions.empty() ? inflow.u_inf : sos_combine(contributions, inflow.u_inf);
        }
        diag.hub_speed = std::accumulate(diag.line_speeds.begin(), diag.line_speeds.end(), 0.0) /
                         static_cast<double>(diag.line_speeds.size());
        if (!(diag.hub_speed > 0.0)) {
            throw DegenerateInputError("turbine " + std::to_string(idx) + " sees zero hub speed");
        }
        const TiQuery query{idx, hub, inflow.ti_inf, layout.yaws[idx], diag.line_speeds, points, placed, &layout.spec};
        diag.local_ti = ti.local_ti(query);
        diag.tile_conditions = {diag.hub_speed, diag.local_ti, layout.yaws[idx]};
        field.tiles[idx] = tiles.tile(diag.tile_conditions);
        placed.push_back({idx, hub, &field.tiles[idx]});
    }

    if (!options.build_grid) {
        return field;
    }
    field.grid = options.grid ? *options.grid : farm_grid(layout.positions, d0, field.tiles.front().grid);
    field.grid.validate();
    const auto& g = field.grid;
    for (const auto& p : layout.positions) {
        if (p.x < g.x_min || p.x > g.x_max || p.y < g.y_min || p.y > g.y_max) {
            throw LayoutError("turbine lies outside the farm grid");
        }
    }
    std::vector<double> sum_sq(g.size(), 0.0);
    for (const auto& w : placed) {
        const auto& tg = w.tile->grid;
        const double x0 = w.position.x;
        const double x1 = w.position.x + tg.x_max;
        const double y0 = w.position.y + tg.y_min;
        const double y1 = w.position.y + tg.y_max;
        const auto lo = [](double v, double origin, double step) {
            return static_cast<std::size_t>(std::max(0.0, std::ceil((v - origin) / step)));
        };
        const std::size_t i_lo = lo(x0, g.x_min, g.dx());
        const std::size_t j_lo = lo(y0, g.y_min, g.dy());
        for (std::size_t i = i_lo; i < g.nx && g.x(i) <= x1; ++i) {
            const double x = g.x(i);
            for (std::size_t j = j_lo; j < g.ny && g.y(j) <= y1; ++j) {
                const double d = w.deficit_at(x, g.y(j));
                sum_sq[i * g.ny + j] += d * d;
            }
        }
    }
    field.values.resize(g.size());
    for (std::size_t n_px = 0; n_px < g.size(); ++n_px) {
        field.values[n_px] = std::max(0.0, (1.0 - std::sqrt(sum_sq[n_px])) * inflow.u_inf);
    }
    return field;
}

std::vector<double> rotor_line_sample(const FarmFlowField& field, std::size_t index, std::size_t n_line,
                                      double offset) {
    if (index >= field.positions.size()) {
        throw SamplingError("turbine index out of range");
    }
    if (!field.has_values()) {
        throw SamplingError("farm field was assembled without a grid");
    }
    const auto& g = field.grid;
    const auto points = rotor_line_points(field.positions[index], field.d0, n_line, offset);
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const double fx = (p.x - g.x_min) / g.dx();
        const double fy = (p.y - g.y_min) / g.dy();
        if (!(fx >= 0.0 && fx <= static_cast<double>(g.nx - 1) && fy >= 0.0 && fy <= static_cast<double>(g.ny - 1))) {
            throw SamplingError("rotor line of turbine " + std::to_string(index) + " leaves the farm grid");
        }
        const auto i0 = std::min(static_cast<std::size_t>(fx), g.nx - 2);
        const auto j0 = std::min(static_cast<std::size_t>(fy), g.ny - 2);
        const double tx = fx - static_cast<double>(i0);
        const double ty = fy - static_cast<double>(j0);
        out.push_back((1.0 - tx) * ((1.0 - ty) * field.at(i0, j0) + ty * field.at(i0, j0 + 1)) +
                      tx * ((1.0 - ty) * field.at(i0 + 1, j0) + ty * field.at(i0 + 1, j0 + 1)));
    }
    return out;
}

double hub_speed(const FarmFlowField& field, std::size_t index, std::size_t n_line, double offset) {
    const auto s = rotor_line_sample(field, index, n_line, offset);
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

}  // namespace wakeforge
