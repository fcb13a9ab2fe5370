#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/wakes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wakeforge {

void CurlSolverConfig::validate() const {
    if (ny_solver < 16 || nz_solver < 16) {
        throw ConfigError("curl solver grid counts must be at least 16");
    }
    if (!(c_visc >= 0.0)) {
        throw ConfigError("curl c_visc must be non-negative");
    }
    if (n_vortices < 2) {
        throw ConfigError("curl solver needs at least two vortex elements");
    }
    if (!(core_radius > 0.0)) {
        throw ConfigError("curl core_radius must be positive");
    }
    if (!(march_safety > 0.0 && march_safety <= 1.0)) {
        throw ConfigError("curl march_safety must lie in (0, 1]");
    }
    if (!(edge_exponent >= 2.0)) {
        throw ConfigError("curl edge_exponent must be at least 2");
    }
}

double curl_circulation(const FlowConditions& cond, const TurbineSpec& spec) {
    const double yaw = deg2rad(cond.yaw);
    const double c = std::cos(yaw);
    return kPi / 8.0 * spec.rotor_diameter * cond.u0 * interp_ct(spec, cond.u0) * std::sin(yaw) * c * c;
}

namespace {

struct VortexElement {
    double z;
    double strength;
};

// Elliptic circulation along the vertical rotor diameter; each element carries
// the circulation drop across its segment, so the strengths sum to zero.
std::vector<VortexElement> shed_vortices(const FlowConditions& cond, const TurbineSpec& spec,
                                         const CurlSolverConfig& cfg) {
    const double gamma_total = curl_circulation(cond, spec);
    const double radius = 0.5 * spec.rotor_diameter;
    const double seg = 2.0 * radius / static_cast<double>(cfg.n_vortices);
    const auto circulation = [&](double r) {
        const double s = r / radius;
        return gamma_total * std::sqrt(std::max(0.0, 1.0 - s * s));
    };
    std::vector<VortexElement> out;
    out.reserve(cfg.n_vortices);
    for (std::size_t k = 0; k < cfg.n_vortices; ++k) {
        const double r = -radius + (static_cast<double>(k) + 0.5) * seg;
        out.push_back({spec.hub_height + r, circulation(r - 0.5 * seg) - circulation(r + 0.5 * seg)});
    }
    return out;
}

InducedVelocity induced(double y, double z, const std::vector<VortexElement>& vortices, double core) {
    InducedVelocity out;
    const double core2 = core * core;
    for (const auto& vx : vortices) {
        const double dy = y;
        const double dz = z - vx.z;
        const double rho2 = dy * dy + dz * dz;
        // Lamb-Oseen: u_theta = G / (2 pi rho) * (1 - exp(-rho^2 / rc^2)).
        const double shape = rho2 < 1e-12 * core2 ? 1.0 / core2 : -std::expm1(-rho2 / core2) / rho2;
        const double f = vx.strength / (2.0 * kPi) * shape;
        out.v -= f * dz;
        out.w += f * dy;
    }
    return out;
}

}  // namespace

InducedVelocity vortex_sheet_velocity(double y, double z, const FlowConditions& cond, const TurbineSpec& spec,
                                      const CurlSolverConfig& cfg) {
    return induced(y, z, shed_vortices(cond, spec, cfg), cfg.core_radius * spec.rotor_diameter);
}

TransverseField curl_transverse_field(const FlowConditions& cond, const TurbineSpec& spec,
                                      const CurlSolverConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(cond.yaw)) {
        throw DomainError("yaw must be finite");
    }
    const double d0 = spec.rotor_diameter;
    TransverseField f;
    f.ny = cfg.ny_solver;
    f.nz = cfg.nz_solver;
    f.y_min = -4.0 * d0;
    f.dy = 8.0 * d0 / static_cast<double>(f.ny - 1);
    f.z_min = std::max(1.0, spec.hub_height - 1.5 * d0);
    f.dz = (spec.hub_height + 1.5 * d0 - f.z_min) / static_cast<double>(f.nz - 1);
    f.v.assign(f.ny * f.nz, 0.0);
    f.w.assign(f.ny * f.nz, 0.0);
    f.gamma_total = curl_circulation(cond, spec);
    if (f.gamma_total == 0.0) {
        return f;
    }
    const auto vortices = shed_vortices(cond, spec, cfg);
    const double core = cfg.core_radius * d0;
    for (std::size_t k = 0; k < f.ny; ++k) {
        for (std::size_t l = 0; l < f.nz; ++l) {
            const auto uv = induced(f.y(k), f.z(l), vortices, core);
            f.v[k * f.nz + l] = uv.v;
            f.w[k * f.nz + l] = uv.w;
        }
    }
    return f;
}

CurlSolution curl_march(const FlowConditions& cond, const TurbineSpec& spec, const CurlSolverConfig& cfg,
                        double x_end) {
    CurlSolution sol;
    sol.field = curl_transverse_field(cond, spec, cfg);
    const TransverseField& tf = sol.field;
    const std::size_t ny = tf.ny;
    const std::size_t nz = tf.nz;
    const double d0 = spec.rotor_diameter;
    const double radius = 0.5 * d0;
    const double u_base = cond.u0;
    if (!(u_base > 0.0)) {
        throw DomainError("curl solver needs a positive free-stream speed");
    }

    const double yaw = deg2rad(cond.yaw);
    const double ct_eff = effective_ct(spec, cond);
    const double induction = 0.5 * (1.0 - std::sqrt(1.0 - ct_eff));
    const double half_width = radius * std::max(std::cos(yaw), 1e-3);

    std::vector<double> u(ny * nz, 0.0);
    for (std::size_t k = 1; k + 1 < ny; ++k) {
        for (std::size_t l = 1; l + 1 < nz; ++l) {
            const double yn = tf.y(k) / half_width;
            const double zn = (tf.z(l) - spec.hub_height) / radius;
            const double r2 = yn * yn + zn * zn;
            u[k * nz + l] = -2.0 * induction * u_base * std::exp(-std::log(2.0) * std::pow(r2, 0.5 * cfg.edge_exponent));
        }
    }

    sol.nu_eff = cfg.c_visc * cond.ti * cond.u0 * d0;
    double max_vw = 0.0;
    for (std::size_t n = 0; n < ny * nz; ++n) {
        max_vw = std::max({max_vw, std::abs(tf.v[n]), std::abs(tf.w[n])});
    }
    const double h = std::min(tf.dy, tf.dz);
    const double inf = std::numeric_limits<double>::infinity();
    const double adv_limit = max_vw > 0.0 ? u_base * h / max_vw : inf;
    const double diff_limit = sol.nu_eff > 0.0 ? u_base * h * h / (4.0 * sol.nu_eff) : inf;
    // Stations are never further apart than a quarter diameter so the
    // stored profiles resolve the streamwise development.
    sol.step = std::min(cfg.march_safety * std::min(adv_limit, diff_limit), 0.25 * d0);

    const double z_hub_f = (spec.hub_height - tf.z_min) / tf.dz;
    const auto l_hub = std::min(static_cast<std::size_t>(z_hub_f), nz - 2);
    const double t_hub = z_hub_f - static_cast<double>(l_hub);
    const double cell_area = tf.dy * tf.dz;

    const auto record = [&](double x) {
        std::vector<double> row(ny);
        double total = 0.0;
        double peak = 0.0;
        for (std::size_t k = 0; k < ny; ++k) {
            row[k] = (1.0 - t_hub) * u[k * nz + l_hub] + t_hub * u[k * nz + l_hub + 1];
        }
        for (const double value : u) {
            total += value;
            peak = std::max(peak, -value);
        }
        sol.stations.push_back(x);
        sol.hub_rows.push_back(std::move(row));
        sol.integrated_deficit.push_back(total * cell_area);
        sol.max_deficit.push_back(peak);
    };

    sol.initial_plane = u;
    record(0.0);

    const double inv_dy = 1.0 / tf.dy;
    const double inv_dz = 1.0 / tf.dz;
    const double nu_y = sol.nu_eff * inv_dy * inv_dy;
    const double nu_z = sol.nu_eff * inv_dz * inv_dz;
    std::vector<double> next(u.size(), 0.0);
    double x = 0.0;
    while (x < x_end) {
        const double dx = std::min(sol.step, x_end - x);
        const double c = dx / u_base;
        for (std::size_t k = 1; k + 1 < ny; ++k) {
            const std::size_t row = k * nz;
            for (std::size_t l = 1; l + 1 < nz; ++l) {
                const std::size_t n = row + l;
                const double uc = u[n];
                const double uym = u[n - nz];
                const double uyp = u[n + nz];
                const double uzm = u[n - 1];
                const double uzp = u[n + 1];
                const double vv = tf.v[n];
                const double ww = tf.w[n];
                const double adv_y = vv > 0.0 ? vv * (uc - uym) * inv_dy : vv * (uyp - uc) * inv_dy;
                const double adv_z = ww > 0.0 ? ww * (uc - uzm) * inv_dz : ww * (uzp - uc) * inv_dz;
                const double diff = nu_y * (uyp - 2.0 * uc + uym) + nu_z * (uzp - 2.0 * uc + uzm);
                next[n] = uc + c * (diff - adv_y - adv_z);
            }
        }
        x += dx;
        for (std::size_t n = 0; n < next.size(); ++n) {
            if (!std::isfinite(next[n]) || std::abs(next[n]) > u_base) {
                throw SolverInstabilityError("curl solver became unstable at x = " + std::to_string(x) + " m", x);
            }
        }
        std::swap(u, next);
        record(x);
    }
    sol.final_plane = u;
    return sol;
}

WakeField curl_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, const CurlSolverConfig& cfg,
                         std::size_t nx, std::size_t ny) {
    WakeField field{standard_tile_grid(spec.rotor_diameter, nx, ny), std::vector<double>(nx * ny, cond.u0), cond};
    const CurlSolution sol = curl_march(cond, spec, cfg, field.grid.x_max);
    const TransverseField& tf = sol.field;

    const auto row_value = [&](const std::vector<double>& row, double y) {
        const double fy = std::clamp((y - tf.y_min) / tf.dy, 0.0, static_cast<double>(tf.ny - 1));
        const auto k = std::min(static_cast<std::size_t>(fy), tf.ny - 2);
        const double t = fy - static_cast<double>(k);
        return (1.0 - t) * row[k] + t * row[k + 1];
    };

    std::size_t s = 0;
    for (std::size_t i = 0; i < nx; ++i) {
        const double x = field.grid.x(i);
        if (x < 0.0) {
            continue;
        }
        while (s + 2 < sol.stations.size() && sol.stations[s + 1] < x) {
            ++s;
        }
        const double x0 = sol.stations[s];
        const double x1 = sol.stations[s + 1];
        const double t = std::clamp((x - x0) / (x1 - x0), 0.0, 1.0);
        for (std::size_t j = 0; j < ny; ++j) {
            const double y = field.grid.y(j);
            const double du = (1.0 - t) * row_value(sol.hub_rows[s], y) + t * row_value(sol.hub_rows[s + 1], y);
            field.values[i * ny + j] = std::clamp(cond.u0 + du, 0.0, cond.u0);
        }
    }
    return field;
}

}  // namespace wakeforge
