#include "wakeforge/image.hpp"

#include "wakeforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace wakeforge {

namespace {

constexpr std::array<Rgb, 5> kAnchors{{{0, 0, 96}, {0, 80, 255}, {0, 200, 60}, {255, 160, 0}, {200, 0, 0}}};

}  // namespace

Rgb colormap(double t) {
    t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
    const double s = t * 4.0;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(s), 3);
    const double f = s - static_cast<double>(k);
    Rgb out{};
    for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - f) * kAnchors[k][c] + f * kAnchors[k + 1][c];
        out[c] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(std::span<const double> values, std::size_t nx, std::size_t ny, double lo,
                                     double hi) {
    if (values.size() != nx * ny || nx == 0 || ny == 0) {
        throw ConfigError("image size does not match the field");
    }
    const std::string header = "P6\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + 3 * nx * ny);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t row = 0; row < ny; ++row) {
        const std::size_t j = ny - 1 - row;
        for (std::size_t i = 0; i < nx; ++i) {
            const auto rgb = colormap((values[i * ny + j] - lo) / span);
            out.insert(out.end(), rgb.begin(), rgb.end());
        }
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const double> values, std::size_t nx, std::size_t ny,
               double lo, double hi) {
    const auto bytes = encode_ppm(values, nx, ny, lo, hi);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace wakeforge
