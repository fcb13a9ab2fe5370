#include "wakeforge/turbine.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace wakeforge {

namespace {

double interp_table(const std::vector<TablePoint>& table, double u, const char* name) {
    if (table.empty()) {
        throw ConfigError(std::string("turbine ") + name + " table is empty");
    }
    if (u <= table.front().speed) {
        return table.front().value;
    }
    if (u >= table.back().speed) {
        return table.back().value;
    }
    const auto hi = std::upper_bound(table.begin(), table.end(), u,
                                     [](double v, const TablePoint& p) { return v < p.speed; });
    const auto lo = hi - 1;
    const double t = (u - lo->speed) / (hi->speed - lo->speed);
    return lo->value + t * (hi->value - lo->value);
}

void check_table(const std::vector<TablePoint>& table, const char* name, double lo, double hi, bool hi_open) {
    if (table.empty()) {
        throw ConfigError(std::string("turbine ") + name + " table is empty");
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& p = table[i];
        if (i > 0 && !(p.speed > table[i - 1].speed)) {
            throw ConfigError(std::string("turbine ") + name + " table speeds must be strictly increasing");
        }
        const bool upper_ok = hi_open ? p.value < hi : p.value <= hi;
        if (!(p.value > lo) || !upper_ok) {
            throw ConfigError(std::string("turbine ") + name + " value out of range at speed " +
                              std::to_string(p.speed));
        }
    }
}

}  // namespace

double TurbineSpec::rotor_area() const { return 0.25 * kPi * rotor_diameter * rotor_diameter; }

void TurbineSpec::validate() const {
    if (!(rotor_diameter > 0.0)) {
        throw ConfigError("rotor_diameter must be positive");
    }
    if (!(hub_height > 0.5 * rotor_diameter)) {
        throw ConfigError("hub_height must exceed half the rotor diameter");
    }
    if (!(rated_power > 0.0)) {
        throw ConfigError("rated_power must be positive");
    }
    if (!(cut_in_speed >= 0.0 && cut_in_speed < cut_out_speed)) {
        throw ConfigError("cut_in must be non-negative and below cut_out");
    }
    if (!(air_density > 0.0) || !(yaw_power_exponent >= 0.0)) {
        throw ConfigError("rho and yaw_power_exponent must be positive");
    }
    check_table(ct_table, "ct", 0.0, 1.0, true);
    check_table(cp_table, "cp", 0.0, 0.593, false);
}

// Power coefficients reproduce the 5 MW curve: 41 kW at cut-in, rated
// at 11.4 m/s, and constant rated power above. Thrust follows the
// published shape of the reference rotor, dropping once pitch control starts.
TurbineSpec nrel_5mw() {
    TurbineSpec s;
    s.ct_table = {{3.0, 0.820},  {4.0, 0.800},  {5.0, 0.790},  {6.0, 0.785},  {7.0, 0.780},
                  {8.0, 0.775},  {9.0, 0.770},  {10.0, 0.760}, {11.0, 0.720}, {11.4, 0.680},
                  {12.0, 0.560}, {13.0, 0.420}, {14.0, 0.330}, {15.0, 0.270}, {16.0, 0.220},
                  {18.0, 0.160}, {20.0, 0.120}, {22.0, 0.095}, {25.0, 0.070}};
    s.cp_table = {{3.0, 0.200},  {4.0, 0.350},  {5.0, 0.410},  {6.0, 0.440},  {7.0, 0.455},
                  {8.0, 0.460},  {9.0, 0.460},  {10.0, 0.458}, {11.0, 0.450}, {11.4, 0.442},
                  {12.0, 0.3789}, {13.0, 0.2980}, {14.0, 0.2386}, {15.0, 0.1940}, {16.0, 0.1598},
                  {18.0, 0.1123}, {20.0, 0.0818}, {22.0, 0.0615}, {25.0, 0.0419}};
    return s;
}

TurbineSpec parse_turbine(std::string_view text, const std::string& origin) {
    const KeyValueDoc doc = parse_key_value(text, origin);
    TurbineSpec s;
    s.rotor_diameter = doc.number("rotor_diameter");
    s.hub_height = doc.number("hub_height");
    s.rated_power = doc.number("rated_power");
    s.cut_in_speed = doc.number("cut_in");
    s.cut_out_speed = doc.number("cut_out");
    s.air_density = doc.number_or("rho", s.air_density);
    s.yaw_power_exponent = doc.number_or("yaw_power_exponent", s.yaw_power_exponent);
    for (const auto& [name, table] : {std::pair{"ct", &s.ct_table}, std::pair{"cp", &s.cp_table}}) {
        const auto it = doc.tables.find(name);
        if (it == doc.tables.end()) {
            throw ConfigError(origin + ": missing [" + name + "] table");
        }
        for (const auto& row : it->second) {
            if (row.size() != 2) {
                throw ConfigError(origin + ": [" + name + "] rows must be 'speed value'");
            }
            table->push_back({row[0], row[1]});
        }
    }
    s.validate();
    return s;
}

TurbineSpec load_turbine(const std::filesystem::path& path) {
    return parse_turbine(read_text_file(path), path.string());
}

std::string format_turbine(const TurbineSpec& spec) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "rotor_diameter = " << spec.rotor_diameter << "\n"
        << "hub_height = " << spec.hub_height << "\n"
        << "rated_power = " << spec.rated_power << "\n"
        << "cut_in = " << spec.cut_in_speed << "\n"
        << "cut_out = " << spec.cut_out_speed << "\n"
        << "rho = " << spec.air_density << "\n"
        << "yaw_power_exponent = " << spec.yaw_power_exponent << "\n";
    out << "\n[ct]\n";
    for (const auto& p : spec.ct_table) {
        out << p.speed << " " << p.value << "\n";
    }
    out << "\n[cp]\n";
    for (const auto& p : spec.cp_table) {
        out << p.speed << " " << p.value << "\n";
    }
    return out.str();
}

void FarmLayout::validate(bool enforce_spacing) const {
    if (positions.empty()) {
        throw LayoutError("layout has no turbines");
    }
    if (positions.size() != yaws.size()) {
        throw LayoutError("layout positions and yaws differ in length");
    }
    if (enforce_spacing && min_pairwise_distance() < min_spacing) {
        throw LayoutError("layout violates the minimum spacing");
    }
}

double FarmLayout::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < positions.size(); ++i) {
        for (std::size_t j = i + 1; j < positions.size(); ++j) {
            best = std::min(best, std::hypot(positions[i].x - positions[j].x, positions[i].y - positions[j].y));
        }
    }
    return best;
}

double interp_ct(const TurbineSpec& spec, double u) { return interp_table(spec.ct_table, u, "ct"); }

double interp_cp(const TurbineSpec& spec, double u) { return interp_table(spec.cp_table, u, "cp"); }

double turbine_power(const TurbineSpec& spec, double u_eff, double yaw_deg) {
    if (u_eff < spec.cut_in_speed || u_eff > spec.cut_out_speed) {
        return 0.0;
    }
    const double cp = interp_cp(spec, u_eff);
    const double yaw_factor = std::pow(std::cos(deg2rad(yaw_deg)), spec.yaw_power_exponent);
    const double p = 0.5 * spec.air_density * spec.rotor_area() * cp * u_eff * u_eff * u_eff * yaw_factor;
    return std::clamp(p, 0.0, spec.rated_power);
}

double added_ti(double ti_ambient, double ct, double downstream_distance, double d0,
                const TiOracleConstants& c) {
    if (!(downstream_distance > 0.0)) {
        throw DomainError("local TI requires a positive downstream distance, got " +
                          std::to_string(downstream_distance));
    }
    if (!(ti_ambient > 0.0)) {
        throw DomainError("local TI requires positive ambient turbulence");
    }
    if (!(ct >= 0.0 && ct < 1.0)) {
        throw DomainError("thrust coefficient must lie in [0, 1)");
    }
    const double a = 0.5 * (1.0 - std::sqrt(1.0 - ct));
    if (a == 0.0) {
        return 0.0;
    }
    return c.c1 * std::pow(a, c.c2) * std::pow(ti_ambient, c.c3) * std::pow(downstream_distance / d0, c.c4);
}

double local_ti_oracle(double ti_ambient, double ct, double downstream_distance, double d0,
                       const TiOracleConstants& constants) {
    const double add = added_ti(ti_ambient, ct, downstream_distance, d0, constants);
    return std::sqrt(ti_ambient * ti_ambient + add * add);
}

}  // namespace wakeforge
