#pragma once

#include "wakeforge/turbine.hpp"

#include <cstddef>
#include <vector>

namespace wakeforge {

/// Uniform rectilinear grid on the hub-height plane.
struct PlaneGrid {
    std::size_t nx = 2;
    std::size_t ny = 2;
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
    double dy() const { return (y_max - y_min) / static_cast<double>(ny - 1); }
    double x(std::size_t i) const { return x_min + dx() * static_cast<double>(i); }
    double y(std::size_t j) const { return y_min + dy() * static_cast<double>(j); }
    std::size_t size() const { return nx * ny; }
    void validate() const;
};

/// Per-turbine tile extent: one diameter upstream to fourteen downstream,
/// three diameters either side of the rotor axis.
PlaneGrid standard_tile_grid(double d0, std::size_t nx, std::size_t ny);

/// Streamwise speed on a hub-height grid. values[i * ny + j] is the speed at
/// (x(i), y(j)); rows run along x.
struct WakeField {
    PlaneGrid grid;
    std::vector<double> values;
    FlowConditions conditions;

    double at(std::size_t i, std::size_t j) const { return values[i * grid.ny + j]; }
    /// Bilinear sample; returns `outside` for points off the grid.
    double sample(double x, double y, double outside) const;
};

struct GaussianParams {
    double k_star = 0.03;
    double epsilon = 0.3;
};

/// Default growth rate from the inflow turbulence and initial width from
/// the effective thrust coefficient.
GaussianParams default_gaussian_params(double ti, double ct_effective);

/// Thrust coefficient of a yawed rotor: C_t(u0) * cos^2(yaw).
double effective_ct(const TurbineSpec& spec, const FlowConditions& cond);

/// Wake expansion K = (k* x / d0 + epsilon)^2.
double expansion_K(double x, double d0, const GaussianParams& params);

/// Lateral wake-centre offset behind a yawed rotor. Positive yaw deflects
/// toward +y. `ct` is the unyawed thrust coefficient.
double deflection_offset(double x, double yaw_deg, double ct, double d0, double k_d = 0.05);

/// Normalised deficit du/u0 of the Gaussian wake at (x, y, z) in
/// rotor-centred coordinates (z measured from the ground). Zero upstream.
/// Throws DomainError where the near-wake radicand becomes negative.
double gaussian_deficit(double x, double y, double z, const FlowConditions& cond, const TurbineSpec& spec,
                        const GaussianParams& params);

/// Hub-height Gaussian wake tile on the standard extent.
WakeField gaussian_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, const GaussianParams& params,
                             std::size_t nx, std::size_t ny);

/// Gaussian tile with the default parameters for these conditions.
WakeField gaussian_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, std::size_t nx,
                             std::size_t ny);

struct CurlSolverConfig {
    std::size_t ny_solver = 128;
    std::size_t nz_solver = 36;
    double c_visc = 0.28;
    std::size_t n_vortices = 40;
    double core_radius = 0.2;  // fraction of d0
    double march_safety = 0.33;
    double edge_exponent = 8.0;  // super-Gaussian sharpness of the initial disc

    void validate() const;
};

/// Transverse velocities (V, W) on the cross-stream solver grid.
/// Index k * nz + l addresses (y(k), z(l)).
struct TransverseField {
    std::size_t ny = 0;
    std::size_t nz = 0;
    double y_min = 0.0;
    double dy = 0.0;
    double z_min = 0.0;
    double dz = 0.0;
    std::vector<double> v;
    std::vector<double> w;
    double gamma_total = 0.0;

    double y(std::size_t k) const { return y_min + dy * static_cast<double>(k); }
    double z(std::size_t l) const { return z_min + dz * static_cast<double>(l); }
};

/// Cross-stream solver domain and the induced field of the yawed rotor's
/// counter-rotating vortex sheet.
TransverseField curl_transverse_field(const FlowConditions& cond, const TurbineSpec& spec,
                                      const CurlSolverConfig& cfg);

/// Velocity induced at (y, z) by the shed vortex elements, in rotor-centred
/// y and absolute z. Used by curl_transverse_field and by tests.
struct InducedVelocity {
    double v = 0.0;
    double w = 0.0;
};
InducedVelocity vortex_sheet_velocity(double y, double z, const FlowConditions& cond, const TurbineSpec& spec,
                                      const CurlSolverConfig& cfg);

/// Total circulation (pi/8) d0 u0 C_t sin(yaw) cos^2(yaw).
double curl_circulation(const FlowConditions& cond, const TurbineSpec& spec);

/// Full marching state, exposed for diagnostics and tests.
struct CurlSolution {
    TransverseField field;
    std::vector<double> stations;                 // x of every stored station
    std::vector<std::vector<double>> hub_rows;    // u' on the hub-height row per station
    std::vector<double> initial_plane;            // u' at x = 0 (ny * nz)
    std::vector<double> final_plane;              // u' at the last station
    std::vector<double> integrated_deficit;       // sum of u' dy dz per station
    std::vector<double> max_deficit;              // max of -u' per station
    double nu_eff = 0.0;
    double step = 0.0;
};

/// Marches the linearised streamwise momentum deficit from the rotor plane
/// to x_end. Throws SolverInstabilityError on NaN or |u'| > u0.
CurlSolution curl_march(const FlowConditions& cond, const TurbineSpec& spec, const CurlSolverConfig& cfg,
                        double x_end);

/// Hub-height curled-wake tile on the standard extent.
WakeField curl_wake_tile(const FlowConditions& cond, const TurbineSpec& spec, const CurlSolverConfig& cfg,
                         std::size_t nx, std::size_t ny);

}  // namespace wakeforge
