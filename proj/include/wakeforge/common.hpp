#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wakeforge {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

/// Seeded generator whose draws are identical on every platform.
///
/// std::uniform_real_distribution and std::shuffle are implementation
/// defined, so the conversions here are written out by hand on top of the
/// standardised mt19937_64 engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

unsigned default_parallelism();

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Flat `key = value` text with optional `[section]` blocks of numeric rows.
///
/// Lines starting with '#' are comments. Keys may repeat; every occurrence is
/// kept in order.
struct KeyValueDoc {
    std::vector<std::pair<std::string, std::string>> entries;
    std::map<std::string, std::vector<std::vector<double>>> tables;

    bool has(std::string_view key) const;
    const std::string& get(std::string_view key) const;
    double number(std::string_view key) const;
    double number_or(std::string_view key, double fallback) const;
    std::vector<std::string> all(std::string_view key) const;
};

KeyValueDoc parse_key_value(std::string_view text, const std::string& origin);
KeyValueDoc read_key_value_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::vector<double> parse_numbers(std::string_view text, const std::string& origin);

/// Little-endian binary serialisation helpers shared by the model and dataset formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    void write_to(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> bytes, std::string origin)
        : bytes_(std::move(bytes)), origin_(std::move(origin)) {}
    static ByteReader from_file(const std::filesystem::path& path);

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::string raw(std::size_t n);
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& origin() const { return origin_; }

private:
    void need(std::size_t n) const;
    std::vector<std::uint8_t> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace wakeforge
