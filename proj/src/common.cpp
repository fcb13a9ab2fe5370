#include "wakeforge/common.hpp"

#include "wakeforge/errors.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace wakeforge {

std::size_t Rng::index(std::size_t n) {
    if (n <= 1) {
        return 0;
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t v = engine_();
    while (v >= limit) {
        v = engine_();
    }
    return static_cast<std::size_t>(v % n);
}

unsigned default_parallelism() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) {
        return;
    }
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<double> parse_numbers(std::string_view text, const std::string& origin) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ',' || text[i] == '\r')) {
            ++i;
        }
        if (i >= text.size()) {
            break;
        }
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), v);
        if (ec != std::errc{}) {
            throw ConfigError(origin + ": expected a number in '" + std::string(text) + "'");
        }
        out.push_back(v);
        i = static_cast<std::size_t>(ptr - text.data());
    }
    return out;
}

KeyValueDoc parse_key_value(std::string_view text, const std::string& origin) {
    KeyValueDoc doc;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = trim(line.substr(0, hash));
        }
        if (line.empty()) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        const std::string where = origin + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(where + ": unterminated section header");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            doc.tables[section];
            continue;
        }
        if (const auto eq = line.find('='); eq != std::string_view::npos) {
            section.clear();
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(where + ": empty key");
            }
            doc.entries.emplace_back(std::string(key), std::string(value));
            continue;
        }
        if (section.empty()) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        doc.tables[section].push_back(parse_numbers(line, where));
        if (end == text.size()) {
            break;
        }
    }
    return doc;
}

bool KeyValueDoc::has(std::string_view key) const {
    return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
}

const std::string& KeyValueDoc::get(std::string_view key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) {
            return v;
        }
    }
    throw ConfigError("missing key '" + std::string(key) + "'");
}

double KeyValueDoc::number(std::string_view key) const {
    const auto values = parse_numbers(get(key), std::string(key));
    if (values.size() != 1) {
        throw ConfigError("key '" + std::string(key) + "' must hold exactly one number");
    }
    return values.front();
}

double KeyValueDoc::number_or(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::vector<std::string> KeyValueDoc::all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries) {
        if (k == key) {
            out.push_back(v);
        }
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write '" + path.string() + "'");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

KeyValueDoc read_key_value_file(const std::filesystem::path& path) {
    return parse_key_value(read_text_file(path), path.string());
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::write_to(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes), path.string());
}

void ByteReader::need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
        throw FormatError(origin_ + ": truncated file");
    }
}

std::uint8_t ByteReader::u8() {
    need(1);
    return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
}

}  // namespace wakeforge
