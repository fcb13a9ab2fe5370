#include "support.hpp"

#include "wakeforge/cli.hpp"
#include "wakeforge/common.hpp"
#include "wakeforge/image.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sstream>

using namespace wakeforge;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

bool single_error_line(const std::string& err) {
    return err.rfind("wakeforge: error: ", 0) == 0 && err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_CASE("help and usage errors") {
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("Usage") != std::string::npos);
    CHECK(run({"gen", "--help"}).code == 0);
    const auto none = run({});
    CHECK(none.code == 1);
    CHECK(single_error_line(none.err));
    const auto bad = run({"gen", "--no-such-flag"});
    CHECK(bad.code == 1);
    CHECK(single_error_line(bad.err));
    const auto missing = run({"gen", "--n", "4"});
    CHECK(missing.code == 1);
    CHECK(single_error_line(missing.err));
    const auto grid = run({"gen", "--grid", "64", "--out", "x.wknd"});
    CHECK(grid.code == 1);
    CHECK(single_error_line(grid.err));
}

TEST_CASE("gen then train round trip") {
    testing::TempDir dir("cli");
    const auto ds = (dir / "g.wknd").string();
    const auto gen = run({"gen", "--n", "4", "--validation", "1", "--grid", "8x8", "--out", ds});
    REQUIRE(gen.code == 0);
    const auto tr = run({"train", "--dataset", ds, "--epochs", "5", "--hidden", "16", "--out", (dir / "m.wknm").string()});
    REQUIRE(tr.code == 0);
    const auto hist = read_text_file(dir / "m.wknm.history.csv");
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 6);
    CHECK(std::filesystem::exists(dir / "m.wknm"));

    const auto tf = run({"transfer", "--pretrained", (dir / "m.wknm").string(), "--dataset", ds, "--epochs", "3",
                         "--out", (dir / "t.wknm").string()});
    CHECK(tf.code == 0);
    const auto bad_freeze = run({"transfer", "--pretrained", (dir / "m.wknm").string(), "--dataset", ds, "--freeze",
                                 "0,1,2,7", "--out", (dir / "u.wknm").string()});
    CHECK(bad_freeze.code == 1);

    const auto diverge = run({"train", "--dataset", ds, "--epochs", "50", "--lr", "1e30", "--hidden", "16", "--out",
                              (dir / "d.wknm").string()});
    CHECK(diverge.code == 2);
    CHECK(single_error_line(diverge.err));
}

TEST_CASE("outputs are idempotent and the seed can come from the environment") {
    testing::TempDir dir("cli_seed");
    const auto a = (dir / "a.wknd").string();
    const auto b = (dir / "b.wknd").string();
    const auto c = (dir / "c.wknd").string();
    REQUIRE(run({"gen", "--n", "5", "--validation", "1", "--grid", "8x8", "--seed", "3", "--out", a}).code == 0);
    REQUIRE(run({"gen", "--n", "5", "--validation", "1", "--grid", "8x8", "--seed", "3", "--out", b}).code == 0);
    CHECK(testing::file_bytes(a) == testing::file_bytes(b));
    ::setenv("WAKEFORGE_SEED", "9", 1);
    REQUIRE(run({"gen", "--n", "5", "--validation", "1", "--grid", "8x8", "--seed", "3", "--out", c}).code == 0);
    ::setenv("WAKEFORGE_SEED", "nine", 1);
    CHECK(run({"gen", "--n", "5", "--grid", "8x8", "--out", c}).code == 1);
    ::unsetenv("WAKEFORGE_SEED");
    CHECK(testing::file_bytes(a) != testing::file_bytes(c));
    CHECK(read_text_file(c + ".manifest").find("seed = 9") != std::string::npos);
}

TEST_CASE("config file supplies defaults and the command line wins") {
    testing::TempDir dir("cli_cfg");
    const auto cfg = (dir / "run.cfg").string();
    const auto out = (dir / "g.wknd").string();
    write_text_file(cfg, "# desk run\nn = 6\ngrid = 8x8\nvalidation = 2\nout = " + out + "\nthreads = 2\n");
    REQUIRE(run({"--config", cfg, "gen", "--n", "3"}).code == 0);
    const auto manifest = read_text_file(out + ".manifest");
    CHECK(manifest.find("samples = 3") != std::string::npos);
    CHECK(manifest.find("nx = 8") != std::string::npos);
    write_text_file(cfg, "bogus_key = 1\n");
    const auto bad = run({"--config", cfg, "gen", "--out", out});
    CHECK(bad.code == 1);
    CHECK(single_error_line(bad.err));
    CHECK(run({"--config", (dir / "missing.cfg").string(), "gen"}).code == 1);
}

TEST_CASE("optimize and eval emit csv with units and images") {
    testing::TempDir dir("cli_opt");
    const auto lay = (dir / "two.layout").string();
    write_text_file(lay, "turbine = 0 0\nturbine = 630 0\nmin_spacing = 252\nbox = 0 1000 -200 200\n");
    const auto csv = (dir / "opt.csv").string();
    const auto r = run({"optimize", "--layout", lay, "--u0", "11", "--ti", "0.05", "--out", csv});
    REQUIRE(r.code == 0);
    const auto text = read_text_file(csv);
    CHECK(text.rfind("evaluator,task,u0_m_s,ti,initial_power_W", 0) == 0);
    CHECK(text.find("reference-gaussian,yaw") != std::string::npos);

    const auto ev = run({"eval", "--layout", lay, "--evaluator", "reference-gaussian", "--tile-grid", "32x32",
                         "--out-dir", (dir / "eval").string()});
    REQUIRE(ev.code == 0);
    const auto ppm = testing::file_bytes(dir / "eval" / "reference.ppm");
    CHECK(std::string(ppm.begin(), ppm.begin() + 3) == "P6\n");
    CHECK(read_text_file(dir / "eval" / "transects.csv").rfind("x_over_d,x_m,y_m", 0) == 0);
    CHECK(read_text_file(dir / "eval" / "fields.csv").rfind("x_m,y_m,reference_m_s", 0) == 0);

    const auto sur = run({"optimize", "--layout", lay, "--evaluator", "surrogate-gaussian", "--out", csv});
    CHECK(sur.code == 1);
    CHECK(sur.err.find("--decoder") != std::string::npos);
}

TEST_CASE("colormap anchors and ppm layout") {
    CHECK(colormap(0.0) == Rgb{0, 0, 96});
    CHECK(colormap(0.25) == Rgb{0, 80, 255});
    CHECK(colormap(0.5) == Rgb{0, 200, 60});
    CHECK(colormap(0.75) == Rgb{255, 160, 0});
    CHECK(colormap(1.0) == Rgb{200, 0, 0});
    CHECK(colormap(2.0) == Rgb{200, 0, 0});
    // values[i * ny + j]: i along x, j along y; the first image row is the top (largest y)
    const std::vector<double> v{0.0, 1.0, 0.5, 0.25};
    const auto img = encode_ppm(v, 2, 2, 0.0, 1.0);
    const std::string header = "P6\n2 2\n255\n";
    REQUIRE(img.size() == header.size() + 12);
    const auto px = [&](int k) { return Rgb{img[header.size() + 3 * k], img[header.size() + 3 * k + 1], img[header.size() + 3 * k + 2]}; };
    CHECK(px(0) == colormap(1.0));
    CHECK(px(1) == colormap(0.25));
    CHECK(px(2) == colormap(0.0));
    CHECK(px(3) == colormap(0.5));
}
