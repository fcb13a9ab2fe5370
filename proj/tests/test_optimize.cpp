#include "wakeforge/errors.hpp"
#include "wakeforge/optimize.hpp"

#include <doctest.h>

#include <cmath>

using namespace wakeforge;

namespace {

const TurbineSpec spec = nrel_5mw();
constexpr double d0 = 126.0;

FarmLayout make_layout(std::vector<Vec2> pos, double min_spacing = 0.0) {
    FarmLayout l;
    l.spec = spec;
    l.yaws.assign(pos.size(), 0.0);
    l.positions = std::move(pos);
    l.min_spacing = min_spacing;
    return l;
}

const Evaluator& gauss() {
    static const Evaluator e = make_reference_evaluator(WakeModelKind::Gaussian, spec, 64, 64);
    return e;
}

}  // namespace

TEST_CASE("maximize_box finds a bounded maximum") {
    const Objective f = [](std::span<const double> x) {
        return -(x[0] - 1.0) * (x[0] - 1.0) - 4.0 * (x[1] + 0.5) * (x[1] + 0.5) - (x[2] - 5.0) * (x[2] - 5.0);
    };
    const std::vector<double> lo{-3, -3, -3};
    const std::vector<double> hi{3, 3, 3};
    const std::vector<double> step{1e-3, 1e-3, 1e-3};
    const auto r = maximize_box(f, {0, 0, 0}, lo, hi, step, 1.0, 1e-12, 200);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-4));
    CHECK(r.x[2] == 3.0);
    CHECK(r.evaluations >= r.iterations);
}

TEST_CASE("farm power basics") {
    const auto one = make_layout({{0, 0}});
    const std::vector<double> zero{0.0};
    const std::vector<double> twenty{20.0};
    CHECK(farm_power(one, zero, {11.0, 0.06}, gauss()) == doctest::Approx(turbine_power(spec, 11.0, 0.0)).epsilon(1e-12));
    CHECK(farm_power(one, zero, {9.0, 0.06}, gauss()) >= farm_power(one, twenty, {9.0, 0.06}, gauss()));

    const auto two = make_layout({{0, 0}, {5 * d0, 0}});
    const std::vector<double> a{15.0, 0.0};
    const std::vector<double> b{0.0, 0.0};
    CHECK(farm_power(two, a, {11.0, 0.05}, gauss()) > farm_power(two, b, {11.0, 0.05}, gauss()));
}

TEST_CASE("single turbine yaw optimum is zero") {
    const auto r = optimize_yaw(make_layout({{0, 0}}), {9.0, 0.08}, gauss(), gauss());
    CHECK(std::abs(r.yaws[0]) <= 1.0);
    CHECK(r.gain_percent >= 0.0);
    CHECK(r.ok);
}

TEST_CASE("two-turbine yaw optimum steers the front rotor") {
    const auto lay = make_layout({{0, 0}, {5 * d0, 0}});
    OptimizerConfig cfg;
    cfg.threads = 3;
    const auto r = optimize_yaw(lay, {11.0, 0.05}, gauss(), gauss(), cfg);
    CHECK(std::abs(r.yaws[0]) >= 10.0);
    CHECK(std::abs(r.yaws[0]) <= 25.0);
    CHECK(std::abs(r.yaws[1]) <= 5.0);
    CHECK(r.gain_percent > 0.0);
    CHECK(r.gain_percent == doctest::Approx((r.optimized_power - r.initial_power) / r.initial_power * 100.0));
    for (const double y : r.yaws) {
        CHECK(std::abs(y) <= 35.0);
    }
    const auto again = optimize_yaw(lay, {11.0, 0.05}, gauss(), gauss(), cfg);
    CHECK(again.yaws == r.yaws);
    CHECK(again.optimized_power == r.optimized_power);
}

TEST_CASE("yaw surface oracle") {
    const auto lay = make_layout({{0, 0}, {5 * d0, 0}});
    const auto s = yaw_grid_oracle(lay, {11.0, 0.05}, 5.0, gauss(), 35.0, 4);
    REQUIRE(s.yaws.size() == 15);
    const std::size_t n = s.yaws.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(s.at(i, j) == doctest::Approx(s.at(n - 1 - i, n - 1 - j)).epsilon(1e-9));
        }
    }
    const std::vector<double> zero{0.0, 0.0};
    CHECK(s.at(7, 7) == farm_power(lay, zero, {11.0, 0.05}, gauss()));
    const auto [front, rear] = s.argmax();
    CHECK(std::abs(front) >= 10.0);
    CHECK(std::abs(front) <= 25.0);
    CHECK(std::abs(rear) <= 5.0);
    CHECK_THROWS_AS(yaw_grid_oracle(lay, {11.0, 0.05}, 4.0, gauss()), ConfigError);
    CHECK(s.to_csv().rfind("front_yaw_deg,rear_yaw_deg,total_power_W", 0) == 0);
}

TEST_CASE("layout optimisation") {
    OptimizerConfig cfg;
    cfg.starts = {0.0};
    const auto single = optimize_layout(make_layout({{0, 0}}), {-2 * d0, 2 * d0, -2 * d0, 2 * d0}, 2 * d0,
                                        {9.0, 0.06}, gauss(), gauss(), cfg);
    CHECK(single.positions[0].x == doctest::Approx(0.0));
    CHECK(single.positions[0].y == doctest::Approx(0.0));

    const auto init = make_layout({{0, 0}, {3 * d0, 0}}, 2 * d0);
    const LayoutBox box{0, 10 * d0, -1.5 * d0, 1.5 * d0};
    const auto r = optimize_layout(init, box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg);
    const double dx0 = 3 * d0;
    const double dx = std::abs(r.positions[1].x - r.positions[0].x);
    const double dy = std::abs(r.positions[1].y - r.positions[0].y);
    CHECK((dx > dx0 + 1e-6 || dy > 1e-6));
    CHECK(r.optimized_power > r.initial_power);
    for (const auto& p : r.positions) {
        CHECK(p.x >= box.x_min);
        CHECK(p.x <= box.x_max);
        CHECK(p.y >= box.y_min);
        CHECK(p.y <= box.y_max);
    }
    CHECK(std::hypot(dx, dy) >= 2 * d0 - 1e-3 * d0);
    CHECK_THROWS_AS(optimize_layout(make_layout({{0, 0}, {d0, 0}}), box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg),
                    LayoutError);
}

TEST_CASE("layout multi-start leaves an aligned saddle") {
    // x pinned by the box, y gradient zero by symmetry
    const auto init = make_layout({{0, 0}, {5 * d0, 0}}, 2 * d0);
    const LayoutBox box{0, 5 * d0, -2 * d0, 2 * d0};
    OptimizerConfig cfg;
    cfg.layout_starts = 1;
    const auto stuck = optimize_layout(init, box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg);
    CHECK(stuck.gain_percent == doctest::Approx(0.0).epsilon(1e-9));
    cfg.layout_starts = 3;
    const auto r = optimize_layout(init, box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg);
    CHECK(r.gain_percent > 10.0);
    const auto again = optimize_layout(init, box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg);
    CHECK(again.positions[1].y == r.positions[1].y);
    cfg.layout_starts = 0;
    CHECK_THROWS_AS(optimize_layout(init, box, 2 * d0, {9.0, 0.06}, gauss(), gauss(), cfg), ConfigError);
}

TEST_CASE("heatmap cells are independent and non-negative") {
    const auto lay = make_layout({{0, 0}, {5 * d0, 0}});
    HeatmapConfig h;
    h.ti_cells = 2;
    h.u_cells = 2;
    h.threads = 4;
    OptimizerConfig cfg;
    cfg.starts = {0.0, 15.0};
    const auto r = heatmap(lay, h, gauss(), gauss(), cfg);
    REQUIRE(r.cells.size() == 4);
    CHECK(r.ti_axis == std::vector<double>{0.05, 0.15});
    CHECK(r.u_axis == std::vector<double>{7.0, 12.0});
    for (const auto& c : r.cells) {
        CHECK(c.ok);
        CHECK(c.gain_percent >= 0.0);
        CHECK(c.wall_time > 0.0);
    }
    CHECK(r.at(0, 0).ti == 0.05);
    CHECK(r.at(1, 0).ti == 0.15);
    CHECK(r.mean_wall_time() > 0.0);
    CHECK(r.to_csv().find("gain_pct") != std::string::npos);

    HeatmapConfig one;
    one.ti_cells = 1;
    one.u_cells = 1;
    const auto m = heatmap(lay, one, gauss(), gauss(), cfg);
    CHECK(m.ti_axis == std::vector<double>{0.1});
    CHECK(m.u_axis == std::vector<double>{9.5});
}

TEST_CASE("optimizer config and task names") {
    OptimizerConfig cfg;
    cfg.starts.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_task("layout") == Task::Layout);
    CHECK_THROWS_AS(parse_task("both"), ConfigError);
    CHECK(parse_evaluator_tag("surrogate-curl-TL") == EvaluatorTag::SurrogateCurlTL);
    CHECK(reference_of(EvaluatorTag::SurrogateCurlTL) == EvaluatorTag::ReferenceCurl);
    CHECK(reference_of(EvaluatorTag::SurrogateGaussian) == EvaluatorTag::ReferenceGaussian);
    CHECK_THROWS_AS(parse_evaluator_tag("floris"), ConfigError);
}
