#pragma once

#include "wakeforge/network.hpp"
#include "wakeforge/turbine.hpp"
#include "wakeforge/wakes.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wakeforge {

enum class WakeModelKind : std::uint32_t { Gaussian = 0, Curl = 1 };

std::string to_string(WakeModelKind kind);
WakeModelKind parse_wake_model(std::string_view name);

struct ParameterRanges {
    double u_min = 3.0;
    double u_max = 15.0;
    double ti_min = 0.01;
    double ti_max = 0.2;
    double yaw_min = -35.0;
    double yaw_max = 35.0;

    void validate() const;
    bool contains(const FlowConditions& c) const;
};

/// Latin hypercube sample of the condition box. Every coordinate is rounded
/// to single precision so stored conditions reproduce the tiles exactly.
std::vector<FlowConditions> sample_conditions(std::size_t n, const ParameterRanges& ranges, std::uint64_t seed);

struct WakeSample {
    FlowConditions conditions;
    std::vector<float> tile;  // nx * ny, row-major along x
};

struct WakeDataset {
    WakeModelKind kind = WakeModelKind::Gaussian;
    std::size_t nx = 64;
    std::size_t ny = 64;
    std::uint64_t seed = 1;
    ParameterRanges ranges;
    std::vector<WakeSample> samples;
    std::size_t validation_count = 0;  // the last samples by generation index

    std::size_t size() const { return samples.size(); }
    std::vector<std::size_t> training_indices() const;
    std::vector<std::size_t> validation_indices() const;
    void validate() const;
};

struct GenerationConfig {
    WakeModelKind kind = WakeModelKind::Gaussian;
    std::size_t n = 500;
    std::size_t nx = 64;
    std::size_t ny = 64;
    std::uint64_t seed = 1;
    ParameterRanges ranges;
    std::size_t validation_count = 100;
    bool extra_validation = false;  // draw validation points as a fresh sample instead of holding out
    TurbineSpec spec = nrel_5mw();
    CurlSolverConfig curl;
    unsigned threads = 0;  // 0 = all cores
};

/// Reference tile for one condition with the chosen wake model.
WakeField reference_tile(WakeModelKind kind, const FlowConditions& cond, const TurbineSpec& spec,
                         const CurlSolverConfig& curl, std::size_t nx, std::size_t ny);

WakeDataset generate_dataset(const GenerationConfig& cfg);

std::vector<std::uint8_t> serialize_dataset(const WakeDataset& ds);
WakeDataset deserialize_dataset(std::vector<std::uint8_t> bytes, const std::string& origin = "<dataset>");

/// Human-readable mirror of the binary header.
std::string dataset_manifest(const WakeDataset& ds);

/// Writes the dataset and its `<path>.manifest` sidecar.
void save_dataset(const WakeDataset& ds, const std::filesystem::path& path);
WakeDataset load_dataset(const std::filesystem::path& path);

/// Inputs (u0, ti, yaw), tile targets and per-sample scale u0.
TrainingSet to_training_set(const WakeDataset& ds, std::span<const std::size_t> indices);
TrainingSet training_part(const WakeDataset& ds);
TrainingSet validation_part(const WakeDataset& ds);

}  // namespace wakeforge
