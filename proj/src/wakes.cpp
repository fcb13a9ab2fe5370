#include "wakeforge/wakes.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wakeforge {

void PlaneGrid::validate() const {
    if (nx < 2 || ny < 2) {
        throw ConfigError("grid counts must be at least 2");
    }
    if (!(x_max > x_min) || !(y_max > y_min)) {
        throw ConfigError("grid extents must be strictly ordered");
    }
}

PlaneGrid standard_tile_grid(double d0, std::size_t nx, std::size_t ny) {
    PlaneGrid g{nx, ny, -1.0 * d0, 14.0 * d0, -3.0 * d0, 3.0 * d0};
    g.validate();
    return g;
}

double WakeField::sample(double x, double y, double outside) const {
    const double fx = (x - grid.x_min) / grid.dx();
    const double fy = (y - grid.y_min) / grid.dy();
    const double max_i = static_cast<double>(grid.nx - 1);
    const double max_j = static_cast<double>(grid.ny - 1);
    if (!(fx >= 0.0 && fx <= max_i && fy >= 0.0 && fy <= max_j)) {
        return outside;
    }
    const auto i0 = std::min(static_cast<std::size_t>(fx), grid.nx - 2);
    const auto j0 = std::min(static_cast<std::size_t>(fy), grid.ny - 2);
    const double tx = fx - static_cast<double>(i0);
    const double ty = fy - static_cast<double>(j0);
    const double v00 = at(i0, j0);
    const double v01 = at(i0, j0 + 1);
    const double v10 = at(i0 + 1, j0);
    const double v11 = at(i0 + 1, j0 + 1);
    return (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11);
}

GaussianParams default_gaussian_params(double ti, double ct_effective) {
    GaussianParams p;
    p.k_star = 0.38 * ti + 0.004;
    const double root = std::sqrt(1.0 - ct_effective);
    const double beta = 0.5 * (1.0 + root) / root;
    double eps = 0.2 * std::sqrt(beta);
    if (!std::isfinite(eps)) {
        eps = 0.25;
    }
    p.epsilon = std::max(eps, 1.0 / std::sqrt(8.0));
    return p;
}

double effective_ct(const TurbineSpec& spec, const FlowConditions& cond) {
    const double c = std::cos(deg2rad(cond.yaw));
    return interp_ct(spec, cond.u0) * c * c;
}

double expansion_K(double x, double d0, const GaussianParams& params) {
    const double s = params.k_star * x / d0 + params.epsilon;
    return s * s;
}

double deflection_offset(double x, double yaw_deg, double ct, double d0, double k_d) {
    if (x <= 0.0) {
        return 0.0;
    }
    const double yaw = deg2rad(yaw_deg);
    const double c = std::cos(yaw);
    const double theta0 = 0.5 * ct * std::sin(yaw) * c * c;
    // Closed form of the integral of theta0 / (1 + k_d s / d0)^2 over [0, x].
    return theta0 * x / (1.0 + k_d * x / d0);
}

namespace {

struct GaussianColumn {
    double centre_deficit = 0.0;
    double inv_two_k = 0.0;
    double y_centre = 0.0;
};

GaussianColumn gaussian_column(double x, const FlowConditions& cond, const TurbineSpec& spec,
                               const GaussianParams& params, double ct_eff, double ct_raw) {
    const double d0 = spec.rotor_diameter;
    const double K = expansion_K(x, d0, params);
    const double radicand = 1.0 - ct_eff / (8.0 * K);
    if (radicand < 0.0) {
        throw DomainError("Gaussian wake evaluated in the near-wake region at x = " + std::to_string(x) + " m");
    }
    return {1.0 - std::sqrt(radicand), 1.0 / (2.0 * K), deflection_offset(x, cond.yaw, ct_raw, d0)};
}

double column_deficit(const GaussianColumn& col, double y, double z_rel, double d0) {
    const double zn = z_rel / d0;
    const double yn = (y - col.y_centre) / d0;
    return col.centre_deficit * std::exp(-col.inv_two_k * (zn * zn + yn * yn));
}

}  // namespace

double gaussian_deficit(double x, double y, double z, const FlowConditions& cond, const TurbineSpec& spec,
                        const GaussianParams& params) {
    if (x < 0.0) {
        return 0.0;
    }
    const auto col = gaussian_column(x, cond, spec, params, effective_ct(spec, cond), interp_ct(spec, cond.u0));
    return column_deficit(col, y, z - spec.hub_height, spec.rotor_diameter);
}

WakeField gaussian_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, const GaussianParams& params,
                             std::size_t nx, std::size_t ny) {
    WakeField field{standard_tile_grid(spec.rotor_diameter, nx, ny), std::vector<double>(nx * ny, cond.u0), cond};
    const double ct_eff = effective_ct(spec, cond);
    const double ct_raw = interp_ct(spec, cond.u0);
    const double d0 = spec.rotor_diameter;
    for (std::size_t i = 0; i < nx; ++i) {
        const double x = field.grid.x(i);
        if (x < 0.0) {
            continue;
        }
        const auto col = gaussian_column(x, cond, spec, params, ct_eff, ct_raw);
        for (std::size_t j = 0; j < ny; ++j) {
            field.values[i * ny + j] = cond.u0 * (1.0 - column_deficit(col, field.grid.y(j), 0.0, d0));
        }
    }
    return field;
}

WakeField gaussian_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, std::size_t nx,
                             std::size_t ny) {
    return gaussian_wake_tile(cond, spec, default_gaussian_params(cond.ti, effective_ct(spec, cond)), nx, ny);
}

}  // namespace wakeforge
