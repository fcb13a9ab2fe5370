#include "support.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/dataset.hpp"
#include "wakeforge/errors.hpp"

#include <doctest.h>

#include <array>
#include <cstring>

using namespace wakeforge;

TEST_CASE("latin hypercube sampling") {
    const ParameterRanges r;
    const auto one = sample_conditions(1, r, 3);
    REQUIRE(one.size() == 1);
    CHECK(r.contains(one[0]));
    const auto a = sample_conditions(2000, r, 42);
    const auto b = sample_conditions(2000, r, 42);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(FlowConditions)) == 0);
    const auto c = sample_conditions(2000, r, 43);
    CHECK(a[0].u0 != c[0].u0);

    std::array<std::array<int, 10>, 3> bins{};
    for (const auto& s : a) {
        CHECK(r.contains(s));
        const double v[3] = {(s.u0 - 3.0) / 12.0, (s.ti - 0.01) / 0.19, (s.yaw + 35.0) / 70.0};
        for (int d = 0; d < 3; ++d) {
            bins[d][std::min(9, static_cast<int>(v[d] * 10.0))]++;
        }
    }
    for (const auto& dim : bins) {
        for (const int count : dim) {
            CHECK(count == 200);
        }
    }
    ParameterRanges bad;
    bad.ti_min = 0.3;
    CHECK_THROWS_AS(sample_conditions(4, bad, 1), ConfigError);
    CHECK_THROWS_AS(sample_conditions(0, r, 1), ConfigError);
}

TEST_CASE("generated tiles match direct computation") {
    GenerationConfig cfg;
    cfg.n = 4;
    cfg.validation_count = 1;
    cfg.seed = 5;
    cfg.threads = 2;
    const auto ds = generate_dataset(cfg);
    REQUIRE(ds.size() == 4);
    testing::TempDir dir("dataset");
    save_dataset(ds, dir / "g.wknd");
    const auto back = load_dataset(dir / "g.wknd");
    REQUIRE(back.size() == 4);
    for (const auto& s : back.samples) {
        const auto t = gaussian_wake_tile(s.conditions, nrel_5mw(), 64, 64);
        REQUIRE(t.values.size() == s.tile.size());
        for (std::size_t k = 0; k < t.values.size(); ++k) {
            CHECK(static_cast<float>(t.values[k]) == s.tile[k]);
        }
    }
    CHECK(back.training_indices() == std::vector<std::size_t>{0, 1, 2});
    CHECK(back.validation_indices() == std::vector<std::size_t>{3});
    CHECK(std::filesystem::exists(dir / "g.wknd.manifest"));
    const auto manifest = read_text_file(dir / "g.wknd.manifest");
    CHECK(manifest.find("samples = 4") != std::string::npos);

    save_dataset(back, dir / "h.wknd");
    CHECK(testing::file_bytes(dir / "g.wknd") == testing::file_bytes(dir / "h.wknd"));
    const auto again = serialize_dataset(generate_dataset(cfg));
    CHECK(testing::file_bytes(dir / "g.wknd") == std::vector<unsigned char>(again.begin(), again.end()));
}

TEST_CASE("extra validation draws fresh points") {
    GenerationConfig cfg;
    cfg.n = 6;
    cfg.validation_count = 3;
    cfg.extra_validation = true;
    const auto ds = generate_dataset(cfg);
    CHECK(ds.size() == 9);
    CHECK(ds.validation_count == 3);
    const auto train = to_training_set(ds, ds.training_indices());
    const auto val = validation_part(ds);
    CHECK(train.size() == 6);
    CHECK(val.size() == 3);
    CHECK(val.scales[0] == ds.samples[6].conditions.u0);
    CHECK(train.inputs(0, 0) == static_cast<float>(ds.samples[0].conditions.u0));
}

TEST_CASE("hand-written 2x2 dataset bytes") {
    WakeDataset ds;
    ds.nx = 2;
    ds.ny = 2;
    ds.seed = 7;
    ds.samples.push_back({{8.0, 0.0625, -10.0}, {8.0f, 7.5f, 6.0f, 4.0f}});
    const auto bytes = serialize_dataset(ds);
    const std::vector<std::uint8_t> expect{
        'W', 'K', 'N', 'D', 1, 0, 0, 0,  // magic, version
        0, 0, 0, 0, 1, 0, 0, 0,          // gaussian, one sample
        2, 0, 0, 0, 2, 0, 0, 0,          // nx, ny
        7, 0, 0, 0, 0, 0, 0, 0,          // seed
        0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x70, 0x41,  // 3, 15
        0x0A, 0xD7, 0x23, 0x3C, 0xCD, 0xCC, 0x4C, 0x3E,  // 0.01, 0.2
        0x00, 0x00, 0x0C, 0xC2, 0x00, 0x00, 0x0C, 0x42,  // -35, 35
        0x00, 0x00, 0x00, 0x41, 0x00, 0x00, 0x80, 0x3D, 0x00, 0x00, 0x20, 0xC1,  // 8, 0.0625, -10
        0x00, 0x00, 0x00, 0x41, 0x00, 0x00, 0xF0, 0x40, 0x00, 0x00, 0xC0, 0x40, 0x00, 0x00, 0x80, 0x40,
        0, 0, 0, 0};
    CHECK(bytes == expect);
    const auto back = deserialize_dataset(bytes);
    CHECK(back.samples[0].conditions.ti == 0.0625);
    CHECK(back.samples[0].tile[3] == 4.0f);
}

TEST_CASE("corrupt dataset files are rejected") {
    WakeDataset ds;
    ds.nx = 2;
    ds.ny = 2;
    ds.samples.push_back({{8.0, 0.0625, -10.0}, {8.0f, 7.5f, 6.0f, 4.0f}});
    const auto good = serialize_dataset(ds);
    auto bad = good;
    bad[1] = 'Z';
    CHECK_THROWS_AS(deserialize_dataset(bad), FormatError);
    bad = good;
    bad[4] = 2;
    CHECK_THROWS_AS(deserialize_dataset(bad), FormatError);
    bad = good;
    bad.resize(bad.size() - 6);
    CHECK_THROWS_AS(deserialize_dataset(bad), FormatError);
    bad = good;
    bad[good.size() - 4] = 5;  // validation count larger than the set
    CHECK_THROWS_AS(deserialize_dataset(bad), FormatError);
    ds.samples[0].tile[0] = 9.0f;  // faster than u0
    CHECK_THROWS(serialize_dataset(ds));
    CHECK(parse_wake_model("curl") == WakeModelKind::Curl);
    CHECK_THROWS_AS(parse_wake_model("jensen"), ConfigError);
}

TEST_CASE("curl datasets cost more per wake than gaussian ones") {
    GenerationConfig cfg;
    cfg.n = 3;
    cfg.validation_count = 1;
    cfg.threads = 1;
    Stopwatch g;
    generate_dataset(cfg);
    const double tg = g.seconds();
    cfg.kind = WakeModelKind::Curl;
    Stopwatch c;
    generate_dataset(cfg);
    CHECK(c.seconds() >= 10.0 * tg);
}
