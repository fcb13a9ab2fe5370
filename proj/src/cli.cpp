#include "wakeforge/cli.hpp"

#include "wakeforge/common.hpp"
#include "wakeforge/dataset.hpp"
#include "wakeforge/errors.hpp"
#include "wakeforge/image.hpp"
#include "wakeforge/network.hpp"
#include "wakeforge/optimize.hpp"
#include "wakeforge/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace wakeforge {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::string config;
    std::string turbine;
    unsigned threads = 0;
};

struct EvalOptions {
    std::string evaluator = "reference-gaussian";
    std::string decoder;
    std::string ti_net;
    std::string power_net;
    std::string tile_grid = "64x64";
    double c_visc = CurlSolverConfig{}.c_visc;
};

struct GenOptions {
    std::string model = "gaussian";
    std::size_t n = 500;
    std::string grid = "64x64";
    std::uint64_t seed = 1;
    std::size_t validation = 100;
    bool extra_validation = false;
    double c_visc = CurlSolverConfig{}.c_visc;
    std::string out;
};

struct TrainOptions {
    std::string dataset;
    int epochs = 2000;
    double lr = 0.01;
    double batch_fraction = 0.25;
    std::uint64_t seed = 1;
    std::size_t hidden = 200;
    double stop_at = 0.0;
    bool scheduler = false;
    bool keep_best = false;
    std::string out;
    std::string history;
};

struct TransferOptions {
    std::string pretrained;
    std::string dataset;
    std::string freeze = "0,1";
    int epochs = 1000;
    double lr = 0.01;
    double batch_fraction = 0.25;
    std::uint64_t seed = 1;
    bool keep_best = false;
    std::string out;
    std::string history;
};

struct SweepOptions {
    std::string pretrained;
    std::string dataset;
    std::string sizes = "20,40,60,80,100";
    int epochs = 1000;
    double lr = 0.01;
    double batch_fraction = 0.25;
    std::uint64_t seed = 1;
    std::string out = "sweep_tl.csv";
};

struct PredictorOptions {
    std::size_t samples = 2000;
    std::size_t layouts = 200;
    std::size_t validation_samples = 100;
    std::size_t validation_layouts = 10;
    int power_epochs = 1000;
    double power_lr = 0.003;
    int ti_epochs = 500;
    double ti_lr = 0.0065;
    double batch_fraction = 0.25;
    std::uint64_t seed = 11;
    std::string out_power = "power.wknm";
    std::string out_ti = "ti.wknm";
    std::string summary;
};

struct EvalCommandOptions {
    std::string layout;
    std::string reference = "gaussian";
    double u0 = 8.0;
    double ti = 0.06;
    double yaw = 0.0;
    std::string transects = "3,5,8";
    std::string out_dir = "eval_out";
};

struct TimingOptions {
    std::string counts = "1,2,4,8,16,24";
    std::string reference = "curl";
    int repeats = 3;
    double u0 = 8.0;
    double ti = 0.06;
    std::string out = "timing.csv";
};

struct OptimizeOptions {
    std::string task = "yaw";
    std::string layout;
    double u0 = 8.0;
    double ti = 0.06;
    std::string starts = "0,15,-15";
    int max_iterations = 200;
    std::string out = "optimize.csv";
};

struct HeatmapOptions {
    std::string task = "yaw";
    std::string layout;
    std::string ti_range = "0.05,0.15";
    std::string u_range = "7,12";
    std::string cells = "3x3";
    std::string starts = "0,15,-15";
    int max_iterations = 200;
    std::string out = "heatmap.csv";
    std::string image;
};

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    return parse_numbers(s, what);
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string& text, const std::string& what) {
    const auto x = text.find('x');
    if (x == std::string::npos) {
        throw ConfigError(what + " must look like AxB, got '" + text + "'");
    }
    const auto a = parse_numbers(text.substr(0, x), what);
    const auto b = parse_numbers(text.substr(x + 1), what);
    if (a.size() != 1 || b.size() != 1 || a[0] < 1 || b[0] < 1 || a[0] != std::floor(a[0]) ||
        b[0] != std::floor(b[0])) {
        throw ConfigError(what + " must look like AxB with positive integers, got '" + text + "'");
    }
    return {static_cast<std::size_t>(a[0]), static_cast<std::size_t>(b[0])};
}

std::pair<double, double> parse_range(const std::string& text, const std::string& what) {
    const auto v = parse_list(text, what);
    if (v.size() != 2 || v[0] > v[1]) {
        throw ConfigError(what + " must be 'lo,hi' with lo <= hi");
    }
    return {v[0], v[1]};
}

TurbineSpec turbine_from(const Globals& g) {
    if (g.turbine.empty()) {
        return nrel_5mw();
    }
    return load_turbine(g.turbine);
}

unsigned threads_from(const Globals& g) { return g.threads == 0 ? default_parallelism() : g.threads; }

std::string default_history(const std::string& history, const std::string& out) {
    return history.empty() ? out + ".history.csv" : history;
}

std::shared_ptr<const NetworkModel> load_shared(const std::string& path) {
    if (path.empty()) {
        return nullptr;
    }
    return std::make_shared<const NetworkModel>(load_model(path));
}

Evaluator build_evaluator(const std::string& tag_name, const EvalOptions& o, const TurbineSpec& spec) {
    const EvaluatorTag tag = parse_evaluator_tag(tag_name);
    if (is_reference(tag)) {
        const auto [nx, ny] = parse_shape(o.tile_grid, "--tile-grid");
        CurlSolverConfig curl;
        curl.c_visc = o.c_visc;
        return make_reference_evaluator(tag == EvaluatorTag::ReferenceCurl ? WakeModelKind::Curl
                                                                           : WakeModelKind::Gaussian,
                                        spec, nx, ny, curl);
    }
    if (o.decoder.empty()) {
        throw ConfigError("evaluator " + tag_name + " needs --decoder");
    }
    return make_surrogate_evaluator(tag, spec, {load_shared(o.decoder), load_shared(o.ti_net), load_shared(o.power_net)});
}

Evaluator build_reference_for(EvaluatorTag tag, const EvalOptions& o, const TurbineSpec& spec) {
    return build_evaluator(to_string(reference_of(tag)), o, spec);
}

void add_eval_options(CLI::App* app, EvalOptions& o, bool with_tag) {
    if (with_tag) {
        app->add_option("--evaluator", o.evaluator,
                        "reference-gaussian, reference-curl, surrogate-gaussian, surrogate-curl or surrogate-curl-TL");
    }
    app->add_option("--decoder", o.decoder, "Decoder model file for surrogate evaluators");
    app->add_option("--ti-net", o.ti_net, "TI predictor model file");
    app->add_option("--power-net", o.power_net, "Power predictor model file");
    app->add_option("--tile-grid", o.tile_grid, "Reference tile resolution NXxNY");
    app->add_option("--c-visc", o.c_visc, "Curl effective-viscosity coefficient");
}

void ensure_parent(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
}

int cmd_gen(const Globals& g, const GenOptions& o, std::ostream& out) {
    if (o.out.empty()) {
        throw ConfigError("gen needs --out");
    }
    GenerationConfig cfg;
    cfg.kind = parse_wake_model(o.model);
    cfg.n = o.n;
    std::tie(cfg.nx, cfg.ny) = parse_shape(o.grid, "--grid");
    cfg.seed = o.seed;
    cfg.validation_count = o.validation;
    cfg.extra_validation = o.extra_validation;
    cfg.spec = turbine_from(g);
    cfg.curl.c_visc = o.c_visc;
    cfg.threads = threads_from(g);
    const Stopwatch clock;
    const auto ds = generate_dataset(cfg);
    ensure_parent(o.out);
    save_dataset(ds, o.out);
    out << "wrote " << ds.size() << " " << to_string(ds.kind) << " wakes (" << ds.validation_count
        << " validation) to " << o.out << " in " << std::fixed << std::setprecision(2) << clock.seconds() << " s\n";
    return 0;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
    if (o.dataset.empty() || o.out.empty()) {
        throw ConfigError("train needs --dataset and --out");
    }
    const auto ds = load_dataset(o.dataset);
    if (ds.validation_count == 0 || ds.validation_count == ds.size()) {
        throw ConfigError("dataset needs both training and validation samples");
    }
    const auto training = training_part(ds);
    const auto validation = validation_part(ds);
    auto model = make_decoder(ds.nx, ds.ny, o.seed, o.hidden);
    fit_normalization(model, training);
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.batch_fraction = o.batch_fraction;
    cfg.seed = o.seed;
    cfg.scheduler.enabled = o.scheduler;
    cfg.keep_best = o.keep_best;
    if (o.stop_at > 0.0) {
        cfg.stop_at_accuracy = o.stop_at;
    }
    const Stopwatch clock;
    const auto history = train(model, training, validation, cfg);
    ensure_parent(o.out);
    save_model(model, o.out);
    const auto hist_path = default_history(o.history, o.out);
    write_text_file(hist_path, history.to_csv());
    out << "trained " << history.epochs.size() << " epochs in " << std::fixed << std::setprecision(1)
        << clock.seconds() << " s, validation accuracy " << std::setprecision(3)
        << accuracy(model, validation) << " %\n";
    return 0;
}

std::vector<bool> freeze_mask(const std::string& spec, std::size_t layers) {
    std::vector<bool> mask(layers, false);
    if (spec.empty() || spec == "none") {
        return mask;
    }
    for (const double v : parse_list(spec, "--freeze")) {
        if (v < 0 || v != std::floor(v) || static_cast<std::size_t>(v) >= layers) {
            throw ConfigError("--freeze index " + std::to_string(v) + " is not a layer of the model");
        }
        mask[static_cast<std::size_t>(v)] = true;
    }
    return mask;
}

int cmd_transfer(const TransferOptions& o, std::ostream& out) {
    if (o.pretrained.empty() || o.dataset.empty() || o.out.empty()) {
        throw ConfigError("transfer needs --pretrained, --dataset and --out");
    }
    const auto pretrained = load_model(o.pretrained);
    const auto ds = load_dataset(o.dataset);
    if (ds.nx != pretrained.out_nx || ds.ny != pretrained.out_ny) {
        throw ConfigError("dataset grid does not match the pretrained decoder");
    }
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.batch_fraction = o.batch_fraction;
    cfg.seed = o.seed;
    cfg.keep_best = o.keep_best;
    const auto result =
        fine_tune(pretrained, training_part(ds), validation_part(ds), cfg, freeze_mask(o.freeze, pretrained.layers.size()));
    ensure_parent(o.out);
    save_model(result.model, o.out);
    write_text_file(default_history(o.history, o.out), result.history.to_csv());
    out << "fine-tuned " << result.history.epochs.size() << " epochs, validation accuracy " << std::fixed
        << std::setprecision(3) << accuracy(result.model, validation_part(ds)) << " %\n";
    return 0;
}

int cmd_sweep_tl(const Globals& g, const SweepOptions& o, std::ostream& out) {
    if (o.pretrained.empty() || o.dataset.empty()) {
        throw ConfigError("sweep-tl needs --pretrained and --dataset");
    }
    const auto pretrained = load_model(o.pretrained);
    const auto ds = load_dataset(o.dataset);
    const auto validation = validation_part(ds);
    const auto train_idx = ds.training_indices();
    std::vector<std::size_t> sizes;
    for (const double v : parse_list(o.sizes, "--sizes")) {
        if (v < 2 || v != std::floor(v) || static_cast<std::size_t>(v) > train_idx.size()) {
            throw ConfigError("--sizes entries must be integers in [2, " + std::to_string(train_idx.size()) + "]");
        }
        sizes.push_back(static_cast<std::size_t>(v));
    }
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.batch_fraction = o.batch_fraction;
    cfg.seed = o.seed;
    cfg.keep_best = true;
    std::vector<double> acc(2 * sizes.size());
    parallel_for(acc.size(), threads_from(g), [&](std::size_t k) {
        const std::size_t size = sizes[k / 2];
        const auto subset = to_training_set(ds, std::span(train_idx).first(size));
        if (k % 2 == 0) {
            auto model = make_decoder(ds.nx, ds.ny, o.seed, pretrained.layers.front().out_width());
            fit_normalization(model, subset);
            train(model, subset, validation, cfg);
            acc[k] = accuracy(model, validation);
        } else {
            acc[k] = accuracy(fine_tune(pretrained, subset, validation, cfg).model, validation);
        }
    });
    std::ostringstream csv;
    csv << "wakes,scratch_accuracy_pct,tl_accuracy_pct\n" << std::setprecision(8);
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        csv << sizes[s] << ',' << acc[2 * s] << ',' << acc[2 * s + 1] << '\n';
    }
    ensure_parent(o.out);
    write_text_file(o.out, csv.str());
    out << csv.str();
    return 0;
}

int cmd_train_predictors(const Globals& g, const PredictorOptions& o, std::ostream& out) {
    const auto spec = turbine_from(g);
    PredictorDataConfig dcfg;
    dcfg.samples = o.samples;
    dcfg.layouts = o.layouts;
    dcfg.seed = o.seed;
    dcfg.threads = threads_from(g);
    const auto train_samples = generate_predictor_samples(dcfg, spec);
    PredictorDataConfig vcfg = dcfg;
    vcfg.samples = o.validation_samples;
    vcfg.layouts = o.validation_layouts;
    vcfg.seed = o.seed + 1;
    const auto val_samples = generate_predictor_samples(vcfg, spec);

    std::ostringstream summary;
    summary << "network,epochs,validation_error_pct\n" << std::setprecision(6);
    const auto fit = [&](NetworkKind kind, const TrainingSet& tr, const TrainingSet& va, int epochs, double lr,
                         const std::string& path) {
        auto model = make_predictor(kind, train_samples.front().line_speeds.size(), o.seed);
        fit_normalization(model, tr);
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        cfg.batch_fraction = o.batch_fraction;
        cfg.seed = o.seed;
        cfg.scheduler.enabled = true;
        const auto history = train(model, tr, va, cfg);
        ensure_parent(path);
        save_model(model, path);
        write_text_file(path + ".history.csv", history.to_csv());
        const double err = 100.0 - accuracy(model, va);
        summary << (kind == NetworkKind::PowerPredictor ? "power" : "ti") << ',' << epochs << ',' << err << '\n';
    };
    fit(NetworkKind::PowerPredictor, power_training_set(train_samples), power_training_set(val_samples), o.power_epochs,
        o.power_lr, o.out_power);
    fit(NetworkKind::TiPredictor, ti_training_set(train_samples), ti_training_set(val_samples), o.ti_epochs, o.ti_lr,
        o.out_ti);
    if (!o.summary.empty()) {
        ensure_parent(o.summary);
        write_text_file(o.summary, summary.str());
    }
    out << summary.str();
    return 0;
}

FarmLayout layout_or_single(const std::string& path, const TurbineSpec& spec, double yaw) {
    if (!path.empty()) {
        return load_layout(path, spec).layout;
    }
    FarmLayout l;
    l.spec = spec;
    l.positions = {{0.0, 0.0}};
    l.yaws = {yaw};
    return l;
}

int cmd_eval(const Globals& g, const EvalOptions& eo, const EvalCommandOptions& o, std::ostream& out) {
    const auto spec = turbine_from(g);
    const FarmLayout layout = layout_or_single(o.layout, spec, o.yaw);
    const Inflow inflow{o.u0, o.ti};
    const Evaluator reference = build_evaluator("reference-" + o.reference, eo, spec);
    const EvaluatorTag tag = parse_evaluator_tag(eo.evaluator);
    const Evaluator surrogate = build_evaluator(eo.evaluator, eo, spec);
    if (reference_of(tag) != reference.tag && !is_reference(tag)) {
        out << "note: comparing " << to_string(tag) << " against " << to_string(reference.tag) << '\n';
    }

    const auto ref = evaluate_farm(reference, layout, inflow, true);
    AssemblyOptions opts;
    opts.grid = ref.flow.grid;
    FarmEvaluation sur;
    sur.flow = assemble_farm_flow(layout, inflow, *surrogate.tiles, *surrogate.ti, opts);
    const auto& grid = ref.flow.grid;

    std::vector<double> err(grid.size());
    double mean_err = 0.0;
    double max_err = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        err[k] = 100.0 * std::abs(sur.flow.values[k] - ref.flow.values[k]) / inflow.u_inf;
        mean_err += err[k];
        max_err = std::max(max_err, err[k]);
    }
    mean_err /= static_cast<double>(grid.size());

    fs::create_directories(o.out_dir);
    const fs::path dir(o.out_dir);
    write_ppm(dir / "reference.ppm", ref.flow.values, grid.nx, grid.ny, 0.0, inflow.u_inf);
    write_ppm(dir / "surrogate.ppm", sur.flow.values, grid.nx, grid.ny, 0.0, inflow.u_inf);
    write_ppm(dir / "error.ppm", err, grid.nx, grid.ny, 0.0, std::max(max_err, 1e-9));

    std::ostringstream fields;
    fields << "x_m,y_m,reference_m_s,surrogate_m_s,error_pct\n" << std::setprecision(8);
    for (std::size_t i = 0; i < grid.nx; ++i) {
        for (std::size_t j = 0; j < grid.ny; ++j) {
            const std::size_t k = i * grid.ny + j;
            fields << grid.x(i) << ',' << grid.y(j) << ',' << ref.flow.values[k] << ',' << sur.flow.values[k] << ','
                   << err[k] << '\n';
        }
    }
    write_text_file(dir / "fields.csv", fields.str());

    const double d0 = spec.rotor_diameter;
    const Vec2 origin = layout.positions[processing_order(layout.positions).back()];
    std::ostringstream tr;
    tr << "x_over_d,x_m,y_m,reference_m_s,surrogate_m_s\n" << std::setprecision(8);
    const auto sample = [&](const std::vector<double>& values, double x, double y) {
        WakeField f{grid, values, {}};
        return f.sample(x, y, std::nan(""));
    };
    for (const double xd : parse_list(o.transects, "--transects")) {
        const double x = origin.x + xd * d0;
        for (std::size_t j = 0; j < grid.ny; ++j) {
            const double y = grid.y(j);
            tr << xd << ',' << x << ',' << y << ',' << sample(ref.flow.values, x, y) << ','
               << sample(sur.flow.values, x, y) << '\n';
        }
    }
    write_text_file(dir / "transects.csv", tr.str());

    std::ostringstream summary;
    summary << "turbine,x_m,y_m,reference_hub_speed_m_s,surrogate_hub_speed_m_s,reference_local_ti,"
               "surrogate_local_ti\n"
            << std::setprecision(8);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        summary << i << ',' << layout.positions[i].x << ',' << layout.positions[i].y << ','
                << ref.flow.turbines[i].hub_speed << ',' << sur.flow.turbines[i].hub_speed << ','
                << ref.flow.turbines[i].local_ti << ',' << sur.flow.turbines[i].local_ti << '\n';
    }
    write_text_file(dir / "turbines.csv", summary.str());
    out << "mean error " << std::fixed << std::setprecision(4) << mean_err << " %, max error " << max_err
        << " %, outputs in " << o.out_dir << '\n';
    return 0;
}

int cmd_timing(const Globals& g, const EvalOptions& eo, const TimingOptions& o, std::ostream& out) {
    const auto spec = turbine_from(g);
    const Evaluator reference = build_evaluator("reference-" + o.reference, eo, spec);
    const Evaluator surrogate = build_evaluator(eo.evaluator, eo, spec);
    if (o.repeats < 1) {
        throw ConfigError("--repeats must be at least 1");
    }
    const Inflow inflow{o.u0, o.ti};
    std::ostringstream csv;
    csv << "turbines,reference_s,surrogate_s,speedup\n" << std::setprecision(8);
    for (const double c : parse_list(o.counts, "--counts")) {
        if (c < 1 || c != std::floor(c)) {
            throw ConfigError("--counts entries must be positive integers");
        }
        const auto layout = grid_layout(static_cast<std::size_t>(c), 6, 5.0, 3.0, spec);
        const auto best_of = [&](const Evaluator& e) {
            double best = std::numeric_limits<double>::infinity();
            for (int r = 0; r < o.repeats; ++r) {
                const Stopwatch clock;
                evaluate_farm(e, layout, inflow, true);
                best = std::min(best, clock.seconds());
            }
            return best;
        };
        const double tr = best_of(reference);
        const double ts = best_of(surrogate);
        csv << static_cast<std::size_t>(c) << ',' << tr << ',' << ts << ',' << tr / ts << '\n';
    }
    ensure_parent(o.out);
    write_text_file(o.out, csv.str());
    out << csv.str();
    return 0;
}

OptimizerConfig optimizer_from(const std::string& starts, int max_iterations, unsigned threads) {
    OptimizerConfig cfg;
    cfg.starts = parse_list(starts, "--starts");
    cfg.max_iterations = max_iterations;
    cfg.threads = threads;
    return cfg;
}

LayoutBox box_for(const LayoutFile& lf) {
    if (!lf.box) {
        throw ConfigError("layout optimisation needs a 'box' entry in the layout file");
    }
    return {(*lf.box)[0], (*lf.box)[1], (*lf.box)[2], (*lf.box)[3]};
}

int cmd_optimize(const Globals& g, const EvalOptions& eo, const OptimizeOptions& o, std::ostream& out) {
    if (o.layout.empty()) {
        throw ConfigError("optimize needs --layout");
    }
    const auto spec = turbine_from(g);
    const auto lf = load_layout(o.layout, spec);
    const Evaluator search = build_evaluator(eo.evaluator, eo, spec);
    const Evaluator reference = build_reference_for(search.tag, eo, spec);
    const auto cfg = optimizer_from(o.starts, o.max_iterations, threads_from(g));
    const Inflow inflow{o.u0, o.ti};
    const Task task = parse_task(o.task);
    const OptimizationResult r = task == Task::Yaw
                                     ? optimize_yaw(lf.layout, inflow, search, reference, cfg)
                                     : optimize_layout(lf.layout, box_for(lf), lf.layout.min_spacing, inflow, search,
                                                       reference, cfg);
    const std::vector<OptimizationResult> rows{r};
    ensure_parent(o.out);
    write_text_file(o.out, results_csv(rows));
    out << results_csv(rows);
    return 0;
}

int cmd_heatmap(const Globals& g, const EvalOptions& eo, const HeatmapOptions& o, std::ostream& out) {
    if (o.layout.empty()) {
        throw ConfigError("heatmap needs --layout");
    }
    const auto spec = turbine_from(g);
    const auto lf = load_layout(o.layout, spec);
    const Evaluator search = build_evaluator(eo.evaluator, eo, spec);
    const Evaluator reference = build_reference_for(search.tag, eo, spec);
    HeatmapConfig h;
    std::tie(h.ti_min, h.ti_max) = parse_range(o.ti_range, "--ti-range");
    std::tie(h.u_min, h.u_max) = parse_range(o.u_range, "--u-range");
    std::tie(h.ti_cells, h.u_cells) = parse_shape(o.cells, "--cells");
    h.task = parse_task(o.task);
    if (h.task == Task::Layout) {
        h.box = box_for(lf);
    }
    h.threads = threads_from(g);
    const auto result = heatmap(lf.layout, h, search, reference, optimizer_from(o.starts, o.max_iterations, 1));
    ensure_parent(o.out);
    write_text_file(o.out, result.to_csv());
    if (!o.image.empty()) {
        // One block of pixels per cell; speed along x, TI along y.
        constexpr std::size_t block = 16;
        const std::size_t nx = h.u_cells * block;
        const std::size_t ny = h.ti_cells * block;
        std::vector<double> px(nx * ny);
        double hi = 1e-9;
        for (const auto& c : result.cells) {
            if (std::isfinite(c.gain_percent)) {
                hi = std::max(hi, c.gain_percent);
            }
        }
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const double v = result.at(j / block, i / block).gain_percent;
                px[i * ny + j] = std::isfinite(v) ? v : 0.0;
            }
        }
        ensure_parent(o.image);
        write_ppm(o.image, px, nx, ny, 0.0, hi);
    }
    out << result.to_csv();
    return 0;
}

// Flat `key = value` config entries become `--key=value` arguments unless the
// option already appears on the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        }
    }
    if (config.empty()) {
        return args;
    }
    const auto doc = read_key_value_file(config);
    std::size_t sub_pos = args.size();
    CLI::App* sub = nullptr;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (auto* s = app.get_subcommand_no_throw(args[i])) {
            sub = s;
            sub_pos = i;
            break;
        }
    }
    const auto given = [&](const std::string& key) {
        return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
        });
    };
    std::vector<std::string> root_extra;
    std::vector<std::string> sub_extra;
    for (const auto& [key, value] : doc.entries) {
        if (key == "config" || given(key)) {
            continue;
        }
        if (sub && sub->get_option_no_throw("--" + key)) {
            sub_extra.push_back("--" + key + "=" + value);
        } else if (app.get_option_no_throw("--" + key)) {
            root_extra.push_back("--" + key + "=" + value);
        } else {
            throw ConfigError(config + ": unknown key '" + key + "'");
        }
    }
    std::vector<std::string> merged(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_pos, args.size())));
    merged.insert(merged.end(), root_extra.begin(), root_extra.end());
    if (sub_pos < args.size()) {
        merged.push_back(args[sub_pos]);
        merged.insert(merged.end(), sub_extra.begin(), sub_extra.end());
        merged.insert(merged.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
    }
    return merged;
}

void apply_seed_env(std::uint64_t& seed) {
    if (const char* env = std::getenv("WAKEFORGE_SEED"); env && *env) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0') {
            throw ConfigError(std::string("WAKEFORGE_SEED is not an unsigned integer: '") + env + "'");
        }
        seed = v;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural surrogates of wind-turbine wakes: data generation, training, transfer and optimisation",
                 "wakeforge"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Flat key = value file supplying defaults for any flag");
    app.add_option("--turbine", g.turbine, "Turbine specification file (default: built-in 5 MW reference)");
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

    GenOptions gen;
    auto* c_gen = app.add_subcommand("gen", "Generate a wake dataset");
    c_gen->add_option("--model", gen.model, "gaussian or curl");
    c_gen->add_option("--n", gen.n, "Number of samples");
    c_gen->add_option("--grid", gen.grid, "Tile resolution NXxNY");
    c_gen->add_option("--seed", gen.seed, "Sampling seed");
    c_gen->add_option("--validation", gen.validation, "Validation samples (last by generation index)");
    c_gen->add_flag("--extra-validation", gen.extra_validation, "Draw validation samples as a fresh sample");
    c_gen->add_option("--c-visc", gen.c_visc, "Curl effective-viscosity coefficient");
    c_gen->add_option("--out", gen.out, "Dataset file");

    TrainOptions tr;
    auto* c_train = app.add_subcommand("train", "Train a decoder from scratch");
    c_train->add_option("--dataset", tr.dataset, "Dataset file");
    c_train->add_option("--epochs", tr.epochs, "Epochs");
    c_train->add_option("--lr", tr.lr, "Adam learning rate");
    c_train->add_option("--batch-fraction", tr.batch_fraction, "Mini-batch size as a fraction of the training set");
    c_train->add_option("--seed", tr.seed, "Initialisation and shuffling seed");
    c_train->add_option("--hidden", tr.hidden, "Hidden layer width");
    c_train->add_option("--stop-at", tr.stop_at, "Stop once validation accuracy (%) reaches this value");
    c_train->add_flag("--scheduler", tr.scheduler, "Reduce the learning rate on validation plateaus");
    c_train->add_flag("--keep-best", tr.keep_best, "Keep the parameters of the best validation epoch");
    c_train->add_option("--out", tr.out, "Model file");
    c_train->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");

    TransferOptions tf;
    auto* c_transfer = app.add_subcommand("transfer", "Fine-tune a pretrained decoder with frozen layers");
    c_transfer->add_option("--pretrained", tf.pretrained, "Pretrained model file");
    c_transfer->add_option("--dataset", tf.dataset, "Dataset file");
    c_transfer->add_option("--freeze", tf.freeze, "Comma-separated indices of frozen layers");
    c_transfer->add_option("--epochs", tf.epochs, "Epochs");
    c_transfer->add_option("--lr", tf.lr, "Adam learning rate");
    c_transfer->add_option("--batch-fraction", tf.batch_fraction, "Mini-batch fraction");
    c_transfer->add_option("--seed", tf.seed, "Shuffling seed");
    c_transfer->add_flag("--keep-best", tf.keep_best, "Keep the parameters of the best validation epoch");
    c_transfer->add_option("--out", tf.out, "Model file");
    c_transfer->add_option("--history", tf.history, "History CSV (default <out>.history.csv)");

    SweepOptions sw;
    auto* c_sweep = app.add_subcommand("sweep-tl", "Scratch vs transfer accuracy over training-set sizes");
    c_sweep->add_option("--pretrained", sw.pretrained, "Pretrained model file");
    c_sweep->add_option("--dataset", sw.dataset, "Dataset file of the target model");
    c_sweep->add_option("--sizes", sw.sizes, "Comma-separated training-set sizes");
    c_sweep->add_option("--epochs", sw.epochs, "Epochs per run");
    c_sweep->add_option("--lr", sw.lr, "Adam learning rate");
    c_sweep->add_option("--batch-fraction", sw.batch_fraction, "Mini-batch fraction");
    c_sweep->add_option("--seed", sw.seed, "Seed");
    c_sweep->add_option("--out", sw.out, "CSV file");

    PredictorOptions pr;
    auto* c_pred = app.add_subcommand("train-predictors", "Generate farm samples and train the power and TI networks");
    c_pred->add_option("--samples", pr.samples, "Training turbine samples");
    c_pred->add_option("--layouts", pr.layouts, "Random training layouts");
    c_pred->add_option("--validation-samples", pr.validation_samples, "Held-out turbine samples");
    c_pred->add_option("--validation-layouts", pr.validation_layouts, "Held-out random layouts");
    c_pred->add_option("--power-epochs", pr.power_epochs, "Power network epochs");
    c_pred->add_option("--power-lr", pr.power_lr, "Power network learning rate");
    c_pred->add_option("--ti-epochs", pr.ti_epochs, "TI network epochs");
    c_pred->add_option("--ti-lr", pr.ti_lr, "TI network learning rate");
    c_pred->add_option("--batch-fraction", pr.batch_fraction, "Mini-batch fraction");
    c_pred->add_option("--seed", pr.seed, "Seed");
    c_pred->add_option("--out-power", pr.out_power, "Power model file");
    c_pred->add_option("--out-ti", pr.out_ti, "TI model file");
    c_pred->add_option("--summary", pr.summary, "Validation summary CSV");

    EvalOptions eo;
    EvalCommandOptions ev;
    auto* c_eval = app.add_subcommand("eval", "Compare a surrogate farm flow field with the reference");
    add_eval_options(c_eval, eo, true);
    c_eval->add_option("--layout", ev.layout, "Layout file (default: one turbine at the origin)");
    c_eval->add_option("--reference", ev.reference, "Reference wake model: gaussian or curl");
    c_eval->add_option("--u0", ev.u0, "Inflow speed (m/s)");
    c_eval->add_option("--ti", ev.ti, "Ambient turbulence intensity");
    c_eval->add_option("--yaw", ev.yaw, "Yaw of the single turbine (deg)");
    c_eval->add_option("--transects", ev.transects, "Transect stations downstream of the last turbine (diameters)");
    c_eval->add_option("--out-dir", ev.out_dir, "Output directory");

    TimingOptions tm;
    auto* c_timing = app.add_subcommand("timing", "Farm evaluation time against turbine count");
    add_eval_options(c_timing, eo, true);
    c_timing->add_option("--counts", tm.counts, "Comma-separated turbine counts");
    c_timing->add_option("--reference", tm.reference, "Reference wake model: gaussian or curl");
    c_timing->add_option("--repeats", tm.repeats, "Repetitions per count (fastest kept)");
    c_timing->add_option("--u0", tm.u0, "Inflow speed (m/s)");
    c_timing->add_option("--ti", tm.ti, "Ambient turbulence intensity");
    c_timing->add_option("--out", tm.out, "CSV file");

    OptimizeOptions op;
    auto* c_opt = app.add_subcommand("optimize", "Yaw or layout optimisation");
    add_eval_options(c_opt, eo, true);
    c_opt->add_option("--task", op.task, "yaw or layout");
    c_opt->add_option("--layout", op.layout, "Layout file");
    c_opt->add_option("--u0", op.u0, "Inflow speed (m/s)");
    c_opt->add_option("--ti", op.ti, "Ambient turbulence intensity");
    c_opt->add_option("--starts", op.starts, "Comma-separated yaw start values (deg)");
    c_opt->add_option("--max-iterations", op.max_iterations, "Iteration cap per start");
    c_opt->add_option("--out", op.out, "CSV file");

    HeatmapOptions hm;
    auto* c_heat = app.add_subcommand("heatmap", "Optimisation gain over a TI x speed grid");
    add_eval_options(c_heat, eo, true);
    c_heat->add_option("--task", hm.task, "yaw or layout");
    c_heat->add_option("--layout", hm.layout, "Layout file");
    c_heat->add_option("--ti-range", hm.ti_range, "lo,hi");
    c_heat->add_option("--u-range", hm.u_range, "lo,hi (m/s)");
    c_heat->add_option("--cells", hm.cells, "TI cells x speed cells, e.g. 3x3");
    c_heat->add_option("--starts", hm.starts, "Comma-separated yaw start values (deg)");
    c_heat->add_option("--max-iterations", hm.max_iterations, "Iteration cap per start");
    c_heat->add_option("--out", hm.out, "CSV file");
    c_heat->add_option("--image", hm.image, "Heatmap image (PPM)");

    try {
        auto argv = merge_config(args, app);
        std::reverse(argv.begin(), argv.end());
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "wakeforge: error: usage: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        err << "wakeforge: error: config: " << e.what() << '\n';
        return 1;
    }

    try {
        for (auto* seed : {&gen.seed, &tr.seed, &tf.seed, &sw.seed, &pr.seed}) {
            apply_seed_env(*seed);
        }
        if (c_gen->parsed()) {
            return cmd_gen(g, gen, out);
        }
        if (c_train->parsed()) {
            return cmd_train(tr, out);
        }
        if (c_transfer->parsed()) {
            return cmd_transfer(tf, out);
        }
        if (c_sweep->parsed()) {
            return cmd_sweep_tl(g, sw, out);
        }
        if (c_pred->parsed()) {
            return cmd_train_predictors(g, pr, out);
        }
        if (c_eval->parsed()) {
            return cmd_eval(g, eo, ev, out);
        }
        if (c_timing->parsed()) {
            return cmd_timing(g, eo, tm, out);
        }
        if (c_opt->parsed()) {
            return cmd_optimize(g, eo, op, out);
        }
        if (c_heat->parsed()) {
            return cmd_heatmap(g, eo, hm, out);
        }
    } catch (const NumericError& e) {
        err << "wakeforge: error: numeric: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "wakeforge: error: config: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "wakeforge: error: io: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace wakeforge
