#include "wakeforge/optimize.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace wakeforge {

void OptimizerConfig::validate() const {
    if (!(yaw_bound > 0.0 && yaw_bound < 90.0)) {
        throw ConfigError("yaw bound must lie in (0, 90) degrees");
    }
    if (!(yaw_step > 0.0) || !(layout_step > 0.0) || !(initial_yaw_move > 0.0) || !(initial_layout_move > 0.0)) {
        throw ConfigError("optimizer steps must be positive");
    }
    if (!(tolerance > 0.0) || max_iterations < 1) {
        throw ConfigError("optimizer needs a positive tolerance and at least one iteration");
    }
    if (starts.empty() || layout_starts < 1) {
        throw ConfigError("at least one yaw and one layout start are required");
    }
    if (!(layout_jitter >= 0.0)) {
        throw ConfigError("layout jitter must be non-negative");
    }
    if (!(penalty_weight > 0.0) || !(penalty_growth > 1.0) || penalty_rounds < 1) {
        throw ConfigError("invalid spacing penalty schedule");
    }
}

AscentResult maximize_box(const Objective& f, std::vector<double> x0, std::span<const double> lower,
                          std::span<const double> upper, std::span<const double> fd_step, double initial_move,
                          double tolerance, int max_iterations) {
    const std::size_t n = x0.size();
    if (lower.size() != n || upper.size() != n || fd_step.size() != n) {
        throw ConfigError("optimizer bounds and steps must match the variable count");
    }
    AscentResult out;
    const auto eval = [&](std::span<const double> x) {
        ++out.evaluations;
        const double v = f(x);
        if (!std::isfinite(v)) {
            throw NumericError("objective is not finite");
        }
        return v;
    };
    const auto clamp_all = [&](std::vector<double>& x) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::clamp(x[i], lower[i], upper[i]);
        }
    };
    const auto gradient = [&](const std::vector<double>& x) {
        std::vector<double> g(n, 0.0);
        std::vector<double> probe = x;
        for (std::size_t i = 0; i < n; ++i) {
            const double hi = std::min(x[i] + fd_step[i], upper[i]);
            const double lo = std::max(x[i] - fd_step[i], lower[i]);
            if (!(hi > lo)) {
                continue;
            }
            probe[i] = hi;
            const double f_hi = eval(probe);
            probe[i] = lo;
            const double f_lo = eval(probe);
            probe[i] = x[i];
            g[i] = (f_hi - f_lo) / (hi - lo);
        }
        return g;
    };

    std::vector<double> x = std::move(x0);
    clamp_all(x);
    double fx = eval(x);
    std::vector<double> g = gradient(x);
    const double g_max = std::transform_reduce(g.begin(), g.end(), 0.0, [](double a, double b) { return std::max(a, b); },
                                               [](double v) { return std::abs(v); });
    const double scale = initial_move / std::max(g_max, 1e-300);
    const auto identity = [&] {
        std::vector<double> h(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            h[i * n + i] = scale;
        }
        return h;
    };
    std::vector<double> H = identity();
    bool fresh = true;

    while (out.iterations < max_iterations) {
        std::vector<bool> free(n);
        std::vector<double> gf(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            free[i] = !((x[i] <= lower[i] && g[i] < 0.0) || (x[i] >= upper[i] && g[i] > 0.0));
            gf[i] = free[i] ? g[i] : 0.0;
        }
        const auto direction = [&] {
            std::vector<double> d(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!free[i]) {
                    continue;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    d[i] += H[i * n + j] * gf[j];
                }
            }
            return d;
        };
        std::vector<double> d = direction();
        if (std::inner_product(gf.begin(), gf.end(), d.begin(), 0.0) <= 0.0) {
            H = identity();
            fresh = true;
            d = direction();
        }
        if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
            break;
        }

        bool accepted = false;
        std::vector<double> xn(n);
        double fn = fx;
        double alpha = 1.0;
        for (int k = 0; k < 30; ++k, alpha *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) {
                xn[i] = x[i] + alpha * d[i];
            }
            clamp_all(xn);
            double slope = 0.0;
            bool moved = false;
            for (std::size_t i = 0; i < n; ++i) {
                slope += g[i] * (xn[i] - x[i]);
                moved = moved || xn[i] != x[i];
            }
            if (!moved) {
                break;
            }
            fn = eval(xn);
            if (fn >= fx + 1e-4 * slope && fn > fx) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (fresh) {
                break;
            }
            H = identity();
            fresh = true;
            continue;
        }

        const std::vector<double> gn = gradient(xn);
        ++out.iterations;
        std::vector<double> s(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xn[i] - x[i];
            y[i] = g[i] - gn[i];
        }
        const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
        if (sy > 1e-12 * std::sqrt(std::inner_product(s.begin(), s.end(), s.begin(), 0.0) *
                                   std::inner_product(y.begin(), y.end(), y.begin(), 0.0))) {
            const double rho = 1.0 / sy;
            std::vector<double> hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    hy[i] += H[i * n + j] * y[j];
                }
            }
            const double yhy = std::inner_product(y.begin(), y.end(), hy.begin(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    H[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        const double rel = std::abs(fn - fx) / std::max(std::abs(fx), 1e-12);
        x = xn;
        fx = fn;
        g = gn;
        if (rel < tolerance) {
            break;
        }
    }
    out.x = std::move(x);
    out.value = fx;
    return out;
}

std::string to_string(Task task) { return task == Task::Layout ? "layout" : "yaw"; }

Task parse_task(std::string_view name) {
    if (name == "yaw") {
        return Task::Yaw;
    }
    if (name == "layout") {
        return Task::Layout;
    }
    throw ConfigError("unknown task '" + std::string(name) + "' (expected yaw or layout)");
}

double farm_power(const FarmLayout& layout, std::span<const double> yaws, const Inflow& inflow,
                  const Evaluator& evaluator) {
    FarmLayout l = layout;
    l.yaws.assign(yaws.begin(), yaws.end());
    return evaluate_farm(evaluator, l, inflow).total;
}

OptimizationResult optimize_yaw(const FarmLayout& layout, const Inflow& inflow, const Evaluator& search,
                                const Evaluator& reference, const OptimizerConfig& cfg) {
    cfg.validate();
    layout.validate(false);
    const std::size_t n = layout.size();
    OptimizationResult res;
    res.evaluator = search.tag;
    res.task = Task::Yaw;
    res.u0 = inflow.u_inf;
    res.ti = inflow.ti_inf;
    res.positions = layout.positions;

    const Stopwatch clock;
    const std::vector<double> zero(n, 0.0);
    const Objective objective = [&](std::span<const double> yaws) { return farm_power(layout, yaws, inflow, search); };
    const std::vector<double> lower(n, -cfg.yaw_bound);
    const std::vector<double> upper(n, cfg.yaw_bound);
    const std::vector<double> step(n, cfg.yaw_step);

    std::vector<AscentResult> runs(cfg.starts.size());
    parallel_for(cfg.starts.size(), cfg.threads, [&](std::size_t k) {
        runs[k] = maximize_box(objective, std::vector<double>(n, cfg.starts[k]), lower, upper, step,
                               cfg.initial_yaw_move, cfg.tolerance, cfg.max_iterations);
    });
    std::size_t best = 0;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        res.iterations += runs[k].iterations;
        res.evaluations += runs[k].evaluations;
        if (runs[k].value > runs[best].value) {
            best = k;
        }
    }
    res.search_initial_power = objective(zero);
    ++res.evaluations;
    res.search_optimized_power = runs[best].value;
    // A start that never beats the zero-yaw baseline leaves the turbines aligned.
    res.yaws = res.search_optimized_power > res.search_initial_power ? runs[best].x : zero;
    res.search_optimized_power = std::max(res.search_optimized_power, res.search_initial_power);
    res.wall_time = clock.seconds();

    res.initial_power = farm_power(layout, zero, inflow, reference);
    res.optimized_power = farm_power(layout, res.yaws, inflow, reference);
    res.gain_percent = 100.0 * (res.optimized_power - res.initial_power) / res.initial_power;
    return res;
}

namespace {

FarmLayout with_positions(const FarmLayout& base, std::span<const double> v) {
    FarmLayout l = base;
    for (std::size_t i = 0; i < l.size(); ++i) {
        l.positions[i] = {v[2 * i], v[2 * i + 1]};
    }
    std::fill(l.yaws.begin(), l.yaws.end(), 0.0);
    return l;
}

double spacing_violation(std::span<const double> v, double min_spacing) {
    double worst = 0.0;
    const std::size_t n = v.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::hypot(v[2 * i] - v[2 * j], v[2 * i + 1] - v[2 * j + 1]);
            worst = std::max(worst, min_spacing - d);
        }
    }
    return worst;
}

}  // namespace

OptimizationResult optimize_layout(const FarmLayout& initial, const LayoutBox& box, double min_spacing,
                                   const Inflow& inflow, const Evaluator& search, const Evaluator& reference,
                                   const OptimizerConfig& cfg) {
    cfg.validate();
    initial.validate(false);
    if (!(box.x_min <= box.x_max) || !(box.y_min <= box.y_max)) {
        throw ConfigError("layout box is inverted");
    }
    const double d0 = initial.spec.rotor_diameter;
    const std::size_t n = initial.size();
    std::vector<double> v(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = initial.positions[i];
        if (p.x < box.x_min || p.x > box.x_max || p.y < box.y_min || p.y > box.y_max) {
            throw LayoutError("initial turbine " + std::to_string(i) + " lies outside the layout box");
        }
        v[2 * i] = p.x;
        v[2 * i + 1] = p.y;
    }
    if (spacing_violation(v, min_spacing) > 1e-9 * d0) {
        throw LayoutError("initial layout violates the minimum spacing");
    }

    OptimizationResult res;
    res.evaluator = search.tag;
    res.task = Task::Layout;
    res.u0 = inflow.u_inf;
    res.ti = inflow.ti_inf;
    res.yaws.assign(n, 0.0);

    const Stopwatch clock;
    const double p0 = evaluate_farm(search, with_positions(initial, v), inflow).total;
    res.search_initial_power = p0;
    if (!(p0 > 0.0)) {
        throw DegenerateInputError("initial layout produces no power");
    }
    std::vector<double> lower(2 * n);
    std::vector<double> upper(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        lower[2 * i] = box.x_min;
        upper[2 * i] = box.x_max;
        lower[2 * i + 1] = box.y_min;
        upper[2 * i + 1] = box.y_max;
    }
    const std::vector<double> step(2 * n, cfg.layout_step * d0);

    struct Run {
        std::vector<double> x;
        double power = 0.0;
        bool feasible = false;
        int iterations = 0;
        int evaluations = 0;
    };
    std::vector<std::vector<double>> starts{v};
    Rng rng(cfg.layout_seed);
    for (std::size_t k = 1; k < cfg.layout_starts; ++k) {
        auto jittered = v;
        for (std::size_t i = 0; i < jittered.size(); ++i) {
            jittered[i] = std::clamp(jittered[i] + rng.uniform(-1.0, 1.0) * cfg.layout_jitter * d0, lower[i], upper[i]);
        }
        starts.push_back(std::move(jittered));
    }
    std::vector<Run> runs(starts.size());
    parallel_for(starts.size(), cfg.threads, [&](std::size_t k) {
        auto& r = runs[k];
        r.x = starts[k];
        double weight = cfg.penalty_weight;
        for (int round = 0; round < cfg.penalty_rounds; ++round) {
            const Objective objective = [&](std::span<const double> x) {
                double penalty = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = i + 1; j < n; ++j) {
                        const double d = std::hypot(x[2 * i] - x[2 * j], x[2 * i + 1] - x[2 * j + 1]);
                        const double gap = std::max(0.0, min_spacing - d) / d0;
                        penalty += gap * gap;
                    }
                }
                return evaluate_farm(search, with_positions(initial, x), inflow).total / p0 - weight * penalty;
            };
            const auto ascent = maximize_box(objective, r.x, lower, upper, step, cfg.initial_layout_move * d0,
                                             cfg.tolerance, cfg.max_iterations);
            r.x = ascent.x;
            r.iterations += ascent.iterations;
            r.evaluations += ascent.evaluations;
            if (spacing_violation(r.x, min_spacing) < 1e-3 * d0) {
                break;
            }
            weight *= cfg.penalty_growth;
        }
        r.feasible = spacing_violation(r.x, min_spacing) < 1e-3 * d0;
        r.power = evaluate_farm(search, with_positions(initial, r.x), inflow).total;
        ++r.evaluations;
    });
    std::size_t best = 0;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        res.iterations += runs[k].iterations;
        res.evaluations += runs[k].evaluations;
        const auto& b = runs[best];
        if ((runs[k].feasible && !b.feasible) || (runs[k].feasible == b.feasible && runs[k].power > b.power)) {
            best = k;
        }
    }
    v = runs[best].x;
    res.search_optimized_power = runs[best].power;
    res.wall_time = clock.seconds();
    const auto final_layout = with_positions(initial, v);
    res.positions = final_layout.positions;

    FarmLayout start = initial;
    std::fill(start.yaws.begin(), start.yaws.end(), 0.0);
    res.initial_power = evaluate_farm(reference, start, inflow).total;
    res.optimized_power = evaluate_farm(reference, final_layout, inflow).total;
    res.gain_percent = 100.0 * (res.optimized_power - res.initial_power) / res.initial_power;
    return res;
}

std::pair<double, double> YawSurface::argmax() const {
    const auto it = std::max_element(power.begin(), power.end());
    const auto k = static_cast<std::size_t>(it - power.begin());
    return {yaws[k / yaws.size()], yaws[k % yaws.size()]};
}

std::string YawSurface::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "front_yaw_deg,rear_yaw_deg,total_power_W\n";
    for (std::size_t i = 0; i < yaws.size(); ++i) {
        for (std::size_t j = 0; j < yaws.size(); ++j) {
            os << yaws[i] << ',' << yaws[j] << ',' << at(i, j) << '\n';
        }
    }
    return os.str();
}

YawSurface yaw_grid_oracle(const FarmLayout& layout, const Inflow& inflow, double step, const Evaluator& evaluator,
                           double bound, unsigned threads) {
    if (layout.size() != 2) {
        throw ConfigError("the yaw surface needs a two-turbine layout");
    }
    if (!(step > 0.0)) {
        throw ConfigError("yaw grid step must be positive");
    }
    const double count = 2.0 * bound / step;
    if (std::abs(count - std::round(count)) > 1e-9) {
        throw ConfigError("yaw grid step must divide the yaw range");
    }
    YawSurface s;
    const auto m = static_cast<std::size_t>(std::llround(count)) + 1;
    for (std::size_t k = 0; k < m; ++k) {
        s.yaws.push_back(-bound + step * static_cast<double>(k));
    }
    const auto order = processing_order(layout.positions);
    s.front = order[0];
    s.rear = order[1];
    s.power.assign(m * m, 0.0);
    parallel_for(m * m, threads, [&](std::size_t k) {
        std::vector<double> yaws(2);
        yaws[s.front] = s.yaws[k / m];
        yaws[s.rear] = s.yaws[k % m];
        s.power[k] = farm_power(layout, yaws, inflow, evaluator);
    });
    return s;
}

double HeatmapResult::mean_wall_time() const {
    if (cells.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& c : cells) {
        sum += c.wall_time;
    }
    return sum / static_cast<double>(cells.size());
}

std::string HeatmapResult::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "evaluator,task,ti,u0_m_s,gain_pct,initial_power_W,optimized_power_W,wall_time_s,status\n";
    for (std::size_t i = 0; i < ti_axis.size(); ++i) {
        for (std::size_t j = 0; j < u_axis.size(); ++j) {
            const auto& c = at(i, j);
            os << to_string(evaluator) << ',' << to_string(task) << ',' << ti_axis[i] << ',' << u_axis[j] << ','
               << c.gain_percent << ',' << c.initial_power << ',' << c.optimized_power << ',' << c.wall_time << ','
               << (c.ok ? "ok" : "failed: " + c.error) << '\n';
        }
    }
    return os.str();
}

namespace {

std::vector<double> axis(double lo, double hi, std::size_t cells) {
    if (cells == 1) {
        return {0.5 * (lo + hi)};
    }
    std::vector<double> out(cells);
    for (std::size_t k = 0; k < cells; ++k) {
        out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cells - 1);
    }
    return out;
}

}  // namespace

HeatmapResult heatmap(const FarmLayout& layout, const HeatmapConfig& hcfg, const Evaluator& search,
                      const Evaluator& reference, const OptimizerConfig& cfg) {
    if (hcfg.ti_cells < 1 || hcfg.u_cells < 1) {
        throw ConfigError("heatmap needs at least one cell per axis");
    }
    if (!(hcfg.ti_min <= hcfg.ti_max) || !(hcfg.u_min <= hcfg.u_max)) {
        throw ConfigError("heatmap ranges are inverted");
    }
    HeatmapResult out;
    out.evaluator = search.tag;
    out.task = hcfg.task;
    out.ti_axis = axis(hcfg.ti_min, hcfg.ti_max, hcfg.ti_cells);
    out.u_axis = axis(hcfg.u_min, hcfg.u_max, hcfg.u_cells);
    out.cells.resize(hcfg.ti_cells * hcfg.u_cells);
    parallel_for(out.cells.size(), hcfg.threads, [&](std::size_t k) {
        const Inflow inflow{out.u_axis[k % hcfg.u_cells], out.ti_axis[k / hcfg.u_cells]};
        auto& cell = out.cells[k];
        try {
            cell = hcfg.task == Task::Yaw
                       ? optimize_yaw(layout, inflow, search, reference, cfg)
                       : optimize_layout(layout, hcfg.box, layout.min_spacing, inflow, search, reference, cfg);
        } catch (const Error& e) {
            cell = {};
            cell.evaluator = search.tag;
            cell.task = hcfg.task;
            cell.u0 = inflow.u_inf;
            cell.ti = inflow.ti_inf;
            cell.ok = false;
            cell.error = e.what();
            cell.gain_percent = std::numeric_limits<double>::quiet_NaN();
        }
    });
    return out;
}

std::string results_csv(std::span<const OptimizationResult> results) {
    std::ostringstream os;
    os.precision(10);
    os << "evaluator,task,u0_m_s,ti,initial_power_W,optimized_power_W,gain_pct,search_initial_power_W,"
          "search_optimized_power_W,iterations,evaluations,wall_time_s,variables\n";
    for (const auto& r : results) {
        os << to_string(r.evaluator) << ',' << to_string(r.task) << ',' << r.u0 << ',' << r.ti << ','
           << r.initial_power << ',' << r.optimized_power << ',' << r.gain_percent << ',' << r.search_initial_power
           << ',' << r.search_optimized_power << ',' << r.iterations << ',' << r.evaluations << ',' << r.wall_time
           << ',';
        if (r.task == Task::Yaw) {
            for (std::size_t i = 0; i < r.yaws.size(); ++i) {
                os << (i ? ";" : "") << r.yaws[i];
            }
        } else {
            for (std::size_t i = 0; i < r.positions.size(); ++i) {
                os << (i ? ";" : "") << r.positions[i].x << ':' << r.positions[i].y;
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace wakeforge
