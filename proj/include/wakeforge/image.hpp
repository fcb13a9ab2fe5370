#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wakeforge {

using Rgb = std::array<std::uint8_t, 3>;

/// Piecewise-linear colormap through dark blue, blue, green, orange and red
/// at t = 0, 0.25, 0.5, 0.75 and 1. t is clamped to [0, 1].
Rgb colormap(double t);

/// P6 image of a field stored values[i * ny + j] with i along x. x runs
/// left to right and y bottom to top. Values are mapped linearly from
/// [lo, hi] onto the colormap.
std::vector<std::uint8_t> encode_ppm(std::span<const double> values, std::size_t nx, std::size_t ny, double lo,
                                     double hi);
void write_ppm(const std::filesystem::path& path, std::span<const double> values, std::size_t nx, std::size_t ny,
               double lo, double hi);

}  // namespace wakeforge
