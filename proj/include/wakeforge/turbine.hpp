#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wakeforge {

struct TablePoint {
    double speed;  // m/s
    double value;
};

/// Rotor geometry and performance tables of a single turbine type.
struct TurbineSpec {
    double rotor_diameter = 126.0;  // m
    double hub_height = 90.0;       // m
    double rated_power = 5.0e6;     // W
    double cut_in_speed = 3.0;      // m/s
    double cut_out_speed = 25.0;    // m/s
    std::vector<TablePoint> ct_table;
    std::vector<TablePoint> cp_table;
    double yaw_power_exponent = 1.88;
    double air_density = 1.225;  // kg/m^3

    double rotor_area() const;
    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

/// NREL 5-MW-like reference turbine with the repository's documented tables.
TurbineSpec nrel_5mw();

TurbineSpec parse_turbine(std::string_view text, const std::string& origin = "<turbine>");
TurbineSpec load_turbine(const std::filesystem::path& path);
std::string format_turbine(const TurbineSpec& spec);

/// Inflow seen by a single rotor; the three inputs of the wake surrogate.
struct FlowConditions {
    double u0 = 8.0;   // free-stream speed, m/s
    double ti = 0.06;  // turbulence intensity
    double yaw = 0.0;  // degrees, positive counter-clockwise seen from above
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct FarmLayout {
    std::vector<Vec2> positions;
    std::vector<double> yaws;  // degrees
    TurbineSpec spec;
    double min_spacing = 0.0;  // m

    std::size_t size() const { return positions.size(); }
    void validate(bool enforce_spacing) const;
    /// Smallest pairwise distance, +inf for a single turbine.
    double min_pairwise_distance() const;
};

/// Piecewise-linear thrust coefficient, clamped to the end values.
double interp_ct(const TurbineSpec& spec, double u);
/// Piecewise-linear power coefficient, clamped to the end values.
double interp_cp(const TurbineSpec& spec, double u);

/// Electrical power in W of a turbine with rotor-effective speed u_eff and
/// yaw misalignment in degrees. Zero outside [cut_in, cut_out].
double turbine_power(const TurbineSpec& spec, double u_eff, double yaw_deg);

struct TiOracleConstants {
    double c1 = 0.73;
    double c2 = 0.83;
    double c3 = 0.03;
    double c4 = -0.32;
};

/// Added-turbulence correlation: local TI a given distance behind a rotor
/// with thrust coefficient ct in ambient turbulence ti_ambient.
double local_ti_oracle(double ti_ambient, double ct, double downstream_distance, double d0,
                       const TiOracleConstants& constants = {});

/// Wake-added TI component alone (the term combined in root-sum-square).
double added_ti(double ti_ambient, double ct, double downstream_distance, double d0,
                const TiOracleConstants& constants = {});

}  // namespace wakeforge
