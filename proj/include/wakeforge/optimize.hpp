#pragma once

#include "wakeforge/pipeline.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace wakeforge {

struct OptimizerConfig {
    double yaw_bound = 35.0;         // degrees
    double yaw_step = 0.5;           // finite-difference step, degrees
    double layout_step = 0.05;       // finite-difference step, diameters
    double initial_yaw_move = 5.0;   // size of the first quasi-Newton step, degrees
    double initial_layout_move = 0.5;  // diameters
    double tolerance = 1e-5;         // relative objective change
    int max_iterations = 200;
    std::vector<double> starts{0.0, 15.0, -15.0};  // yaw multi-start values, degrees
    std::size_t layout_starts = 3;  // the initial layout plus jittered copies
    double layout_jitter = 0.25;    // diameters, uniform per coordinate
    std::uint64_t layout_seed = 1;
    double penalty_weight = 10.0;
    double penalty_growth = 10.0;
    int penalty_rounds = 8;
    unsigned threads = 1;  // concurrent multi-starts

    void validate() const;
};

struct AscentResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

/// Bound-constrained maximisation: central finite-difference gradients,
/// projected BFGS steps with Armijo backtracking, stopping once the
/// relative objective change falls below `tolerance`.
AscentResult maximize_box(const Objective& f, std::vector<double> x0, std::span<const double> lower,
                          std::span<const double> upper, std::span<const double> fd_step, double initial_move,
                          double tolerance, int max_iterations);

enum class Task { Yaw, Layout };

std::string to_string(Task task);
Task parse_task(std::string_view name);

struct OptimizationResult {
    EvaluatorTag evaluator = EvaluatorTag::ReferenceGaussian;
    Task task = Task::Yaw;
    double u0 = 0.0;
    double ti = 0.0;
    double initial_power = 0.0;    // W, reference-scored
    double optimized_power = 0.0;  // W, reference-scored
    double gain_percent = 0.0;
    double search_initial_power = 0.0;  // W, the searching evaluator's own estimate
    double search_optimized_power = 0.0;
    std::vector<double> yaws;
    std::vector<Vec2> positions;
    int iterations = 0;
    int evaluations = 0;
    double wall_time = 0.0;  // s, search only
    bool ok = true;
    std::string error;
};

double farm_power(const FarmLayout& layout, std::span<const double> yaws, const Inflow& inflow,
                  const Evaluator& evaluator);

/// Yaw optimisation with `search`; the gain is always scored by `reference`
/// at zero yaw and at the chosen yaws.
OptimizationResult optimize_yaw(const FarmLayout& layout, const Inflow& inflow, const Evaluator& search,
                                const Evaluator& reference, const OptimizerConfig& cfg = {});

struct LayoutBox {
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;
};

/// Layout optimisation with yaws held at zero, positions clamped to `box`
/// and spacing enforced by an escalating quadratic exterior penalty.
OptimizationResult optimize_layout(const FarmLayout& initial, const LayoutBox& box, double min_spacing,
                                   const Inflow& inflow, const Evaluator& search, const Evaluator& reference,
                                   const OptimizerConfig& cfg = {});

/// Exhaustive total power of a two-turbine farm over (front yaw, rear yaw).
struct YawSurface {
    std::vector<double> yaws;
    std::vector<double> power;  // power[i * n + j] = front yaws[i], rear yaws[j]
    std::size_t front = 0;      // layout index of the upstream turbine
    std::size_t rear = 1;

    double at(std::size_t i, std::size_t j) const { return power[i * yaws.size() + j]; }
    /// (front yaw, rear yaw) of the maximum.
    std::pair<double, double> argmax() const;
    std::string to_csv() const;
};

YawSurface yaw_grid_oracle(const FarmLayout& layout, const Inflow& inflow, double step, const Evaluator& evaluator,
                           double bound = 35.0, unsigned threads = 1);

struct HeatmapConfig {
    double ti_min = 0.05;
    double ti_max = 0.15;
    double u_min = 7.0;
    double u_max = 12.0;
    std::size_t ti_cells = 3;
    std::size_t u_cells = 3;
    Task task = Task::Yaw;
    LayoutBox box;  // layout task only
    unsigned threads = 1;
};

struct HeatmapResult {
    EvaluatorTag evaluator = EvaluatorTag::ReferenceGaussian;
    Task task = Task::Yaw;
    std::vector<double> ti_axis;
    std::vector<double> u_axis;
    std::vector<OptimizationResult> cells;  // cells[i * u_axis.size() + j] = ti_axis[i], u_axis[j]

    const OptimizationResult& at(std::size_t i, std::size_t j) const { return cells[i * u_axis.size() + j]; }
    double mean_wall_time() const;
    std::string to_csv() const;
};

HeatmapResult heatmap(const FarmLayout& layout, const HeatmapConfig& hcfg, const Evaluator& search,
                      const Evaluator& reference, const OptimizerConfig& cfg = {});

std::string results_csv(std::span<const OptimizationResult> results);

}  // namespace wakeforge
