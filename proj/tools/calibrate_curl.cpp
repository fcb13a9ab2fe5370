// Scans the curl effective-viscosity coefficient and reports the centerline
// deficit ratio against the Gaussian wake at yaw 0, about 8.5 D downstream.
//
//   calibrate_curl [c_visc ...]

#include "wakeforge/turbine.hpp"
#include "wakeforge/wakes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

using namespace wakeforge;

namespace {

double centerline_deficit(const WakeField& f, double x) {
    return 1.0 - f.sample(x, 0.0, 1.0 * f.conditions.u0) / f.conditions.u0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<double> candidates;
    for (int i = 1; i < argc; ++i) {
        candidates.push_back(std::strtod(argv[i], nullptr));
    }
    if (candidates.empty()) {
        candidates = {0.02, 0.1, 0.2, 0.24, 0.28, 0.32, 0.4};
    }
    const TurbineSpec spec = nrel_5mw();
    const double x = 8.5 * spec.rotor_diameter;
    std::printf("c_visc,max_rel_diff,mean_rel_diff\n");
    double best = 0.0;
    double best_err = 1e9;
    for (const double c : candidates) {
        CurlSolverConfig cfg;
        cfg.c_visc = c;
        double worst = 0.0;
        double mean = 0.0;
        int n = 0;
        for (const double u0 : {6.0, 9.0, 12.0}) {
            for (const double ti : {0.06, 0.1, 0.15}) {
                const FlowConditions cond{u0, ti, 0.0};
                const double g = centerline_deficit(gaussian_wake_tile(cond, spec, 64, 64), x);
                const double k = centerline_deficit(curl_wake_tile(cond, spec, cfg, 64, 64), x);
                const double rel = std::abs(k - g) / g;
                worst = std::max(worst, rel);
                mean += rel;
                ++n;
            }
        }
        mean /= n;
        std::printf("%.4f,%.4f,%.4f\n", c, worst, mean);
        if (worst < best_err) {
            best_err = worst;
            best = c;
        }
    }
    std::printf("best c_visc %.4f (max relative difference %.3f)\n", best, best_err);
    return 0;
}
