#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/turbine.hpp"
#include "wakeforge/wakes.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace wakeforge;

namespace {

const TurbineSpec spec = nrel_5mw();
constexpr double d0 = 126.0;

double simpson(auto f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) {
        s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    }
    return s * h / 3.0;
}

// Hub-height deficit profile centroid of a tile column.
double centroid(const WakeField& f, std::size_t i) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < f.grid.ny; ++j) {
        const double d = f.conditions.u0 - f.at(i, j);
        num += d * f.grid.y(j);
        den += d;
    }
    return num / den;
}

}  // namespace

TEST_CASE("expansion_K") {
    const GaussianParams p{0.1, 0.2};
    CHECK(expansion_K(0.0, d0, p) == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(expansion_K(d0, d0, p) == doctest::Approx(0.09).epsilon(1e-15));
    double prev = 0.0;
    for (double x = 0.0; x < 20 * d0; x += 10.0) {
        const double k = expansion_K(x, d0, p);
        CHECK(k > prev);
        prev = k;
    }
}

TEST_CASE("gaussian deficit oracle at five diameters") {
    const FlowConditions c{8.0, 0.06, 0.0};
    const auto p = default_gaussian_params(c.ti, effective_ct(spec, c));
    CHECK(p.k_star == doctest::Approx(0.0268).epsilon(1e-14));
    const double got = gaussian_deficit(5 * d0, 0.0, spec.hub_height, c, spec, p);
    CHECK(got == doctest::Approx(0.23028400711463015).epsilon(1e-12));
    CHECK(gaussian_deficit(5 * d0, 40.0, spec.hub_height, c, spec, p) ==
          doctest::Approx(gaussian_deficit(5 * d0, -40.0, spec.hub_height, c, spec, p)).epsilon(1e-15));
    CHECK(gaussian_deficit(-1.0, 0.0, spec.hub_height, c, spec, p) == 0.0);
}

TEST_CASE("gaussian near-wake domain error") {
    const FlowConditions c{8.0, 0.06, 0.0};
    const GaussianParams tight{0.02, 0.1};
    CHECK_THROWS_AS(gaussian_deficit(1.0, 0.0, spec.hub_height, c, spec, tight), DomainError);
}

TEST_CASE("deflection against quadrature") {
    const double ct = 0.8;
    const double yaw = deg2rad(25.0);
    const double th0 = 0.5 * ct * std::sin(yaw) * std::cos(yaw) * std::cos(yaw);
    const double quad = simpson([&](double s) { return th0 / std::pow(1 + 0.05 * s / d0, 2); }, 0.0, 7 * d0, 2000);
    CHECK(quad == doctest::Approx(90.71821375127816).epsilon(1e-10));
    CHECK(deflection_offset(7 * d0, 25.0, ct, d0) == doctest::Approx(quad).epsilon(1e-10));
    CHECK(deflection_offset(7 * d0, -25.0, ct, d0) == -deflection_offset(7 * d0, 25.0, ct, d0));
    for (double x = 0.0; x < 14 * d0; x += 50.0) {
        CHECK(deflection_offset(x, 0.0, ct, d0) == 0.0);
    }
}

TEST_CASE("gaussian tile properties") {
    const FlowConditions c{9.0, 0.08, 0.0};
    const auto t = gaussian_wake_tile(c, spec, 64, 49);
    REQUIRE(t.values.size() == 64 * 49);
    for (std::size_t i = 0; i < t.grid.nx; ++i) {
        for (std::size_t j = 0; j < t.grid.ny; ++j) {
            CHECK(t.at(i, j) >= 0.0);
            CHECK(t.at(i, j) <= c.u0);
            if (t.grid.x(i) < 0.0) {
                CHECK(t.at(i, j) == c.u0);
            }
        }
    }
    CHECK(t.at(63, 48) > 0.99 * c.u0);
    CHECK(t.at(63, 0) > 0.99 * c.u0);

    // centerline deficit strictly decreasing
    const auto p = default_gaussian_params(c.ti, effective_ct(spec, c));
    double prev = 1.0;
    for (double x = 0.0; x < 14 * d0; x += 20.0) {
        const double d = gaussian_deficit(x, 0.0, spec.hub_height, c, spec, p);
        CHECK(d < prev);
        prev = d;
    }
    const double min_v = *std::min_element(t.values.begin(), t.values.end());
    double best = c.u0;
    for (std::size_t i = 0; i < t.grid.nx; ++i) {
        if (t.grid.x(i) >= 0.0) {
            best = std::min(best, c.u0 * (1.0 - gaussian_deficit(t.grid.x(i), 0.0, spec.hub_height, c, spec, p)));
        }
    }
    CHECK(min_v == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("yawed gaussian tile minimum is on the deflected side") {
    const FlowConditions c{8.0, 0.06, 25.0};
    const auto t = gaussian_wake_tile(c, spec, 64, 64);
    const auto it = std::min_element(t.values.begin(), t.values.end());
    const std::size_t k = static_cast<std::size_t>(it - t.values.begin());
    CHECK(t.grid.y(k % t.grid.ny) > 0.0);
    CHECK(centroid(t, 50) > 0.0);
}

TEST_CASE("transverse field vanishes without yaw and flips with it") {
    const CurlSolverConfig cfg;
    const auto zero = curl_transverse_field({10.0, 0.06, 0.0}, spec, cfg);
    CHECK(std::all_of(zero.v.begin(), zero.v.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(zero.w.begin(), zero.w.end(), [](double v) { return v == 0.0; }));
    CHECK(curl_circulation({10.0, 0.06, 20.0}, spec) == -curl_circulation({10.0, 0.06, -20.0}, spec));
    const auto pos = curl_transverse_field({10.0, 0.06, 20.0}, spec, cfg);
    const auto neg = curl_transverse_field({10.0, 0.06, -20.0}, spec, cfg);
    for (std::size_t k = 0; k < pos.v.size(); k += 37) {
        CHECK(pos.v[k] == doctest::Approx(-neg.v[k]).epsilon(1e-12));
    }
}

TEST_CASE("vortex sheet against an independent Biot-Savart sum") {
    const FlowConditions c{10.0, 0.06, 30.0};
    const CurlSolverConfig cfg;
    const double yaw = deg2rad(30.0);
    const double gamma = kPi / 8.0 * d0 * 10.0 * interp_ct(spec, 10.0) * std::sin(yaw) * std::pow(std::cos(yaw), 2);
    const double r = d0 / 2;
    const int n = static_cast<int>(cfg.n_vortices);
    const double rc = cfg.core_radius * d0;
    const auto ell = [&](double s) { return gamma * std::sqrt(std::max(0.0, 1.0 - s * s / (r * r))); };
    double oracle = 0.0;
    double got = 0.0;
    for (int a = -10; a <= 10; ++a) {
        for (int b = -10; b <= 10; ++b) {
            const double y = a * 0.1 * d0;
            const double z = spec.hub_height + b * 0.07 * d0;
            double v = 0.0;
            for (int k = 0; k < n; ++k) {
                const double lo = -r + k * (2 * r / n);
                const double hi = lo + 2 * r / n;
                const double g = ell(lo) - ell(hi);
                const double zv = spec.hub_height + 0.5 * (lo + hi);
                const double dz = z - zv;
                const double rr = y * y + dz * dz;
                const double ut = g / (2 * kPi * std::sqrt(rr)) * (1 - std::exp(-rr / (rc * rc)));
                v += -ut * dz / std::sqrt(rr);
            }
            oracle = std::max(oracle, std::abs(v));
            got = std::max(got, std::abs(vortex_sheet_velocity(y, z, c, spec, cfg).v));
        }
    }
    CHECK(oracle > 0.1);
    CHECK(got == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("curl solver conserves deficit under pure advection") {
    CurlSolverConfig cfg;
    cfg.c_visc = 0.0;
    const FlowConditions c{8.0, 0.06, 0.0};
    const auto sol = curl_march(c, spec, cfg, 10 * d0);
    REQUIRE(sol.integrated_deficit.size() > 2);
    const double first = sol.integrated_deficit.front();
    for (const double v : sol.integrated_deficit) {
        CHECK(v == doctest::Approx(first).epsilon(1e-6));
    }
    REQUIRE(sol.hub_rows.size() == sol.stations.size());
    const auto& a = sol.hub_rows.front();
    const auto& b = sol.hub_rows.back();
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(a[k] - b[k]) < 1e-9);
    }
}

TEST_CASE("curl maximum deficit decays with viscosity") {
    const auto sol = curl_march({8.0, 0.08, 0.0}, spec, CurlSolverConfig{}, 14 * d0);
    for (std::size_t s = 2; s < sol.max_deficit.size(); ++s) {
        CHECK(sol.max_deficit[s] <= sol.max_deficit[s - 1] + 1e-12);
    }
}

TEST_CASE("curl tile is bounded and deflects like the gaussian") {
    const FlowConditions c{8.0, 0.06, 25.0};
    const auto t = curl_wake_tile(c, spec, CurlSolverConfig{}, 64, 64);
    for (const double v : t.values) {
        CHECK(v >= 0.0);
        CHECK(v <= c.u0);
    }
    std::size_t i8 = 0;
    while (t.grid.x(i8) < 8 * d0) {
        ++i8;
    }
    const double yc = centroid(t, i8);
    CHECK(std::abs(yc) > 0.05 * d0);
    CHECK((yc > 0.0) == (deflection_offset(8 * d0, 25.0, interp_ct(spec, 8.0), d0) > 0.0));
}

TEST_CASE("curl grid refinement changes the hub profile by under two percent") {
    const FlowConditions c{8.0, 0.08, 15.0};
    CurlSolverConfig coarse;
    coarse.ny_solver = 96;
    coarse.nz_solver = 28;
    CurlSolverConfig fine = coarse;
    fine.ny_solver = 2 * coarse.ny_solver - 1;
    fine.nz_solver = 2 * coarse.nz_solver - 1;
    const auto a = curl_wake_tile(c, spec, coarse, 48, 48);
    const auto b = curl_wake_tile(c, spec, fine, 48, 48);
    double err = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        err += std::abs(a.values[k] - b.values[k]) / b.values[k];
    }
    err /= static_cast<double>(a.values.size());
    CHECK(err < 0.02);
}

TEST_CASE("curl solver config validation") {
    CurlSolverConfig cfg;
    cfg.ny_solver = 8;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.march_safety = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.c_visc = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
