#include "ofp/cli/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ofp/error.hpp"
#include "ofp/hash.hpp"
#include "ofp/io.hpp"
#include "ofp/parallel.hpp"

#ifndef OFP_VERSION
#define OFP_VERSION "0.0.0"
#endif

namespace ofp::cli {
namespace {

namespace fs = std::filesystem;

// Every file of one invocation is written through this; all files carry the
// same provenance so a result can be traced back to its configuration.
class Output {
public:
    Output(fs::path dir, std::string command, std::uint64_t config_hash, std::ostream& log)
        : dir_(std::move(dir)), command_(std::move(command)), hash_(config_hash), log_(log) {
        fs::create_directories(dir_);
    }

    [[nodiscard]] std::string comment() const {
        return "ofp " OFP_VERSION " command=" + command_ + " config=" + hex64(hash_);
    }

    [[nodiscard]] Provenance provenance() const {
        return {{"tool", "ofp"}, {"version", OFP_VERSION}, {"command", command_}, {"config_hash", hex64(hash_)}};
    }

    [[nodiscard]] fs::path path(const std::string& name) const { return dir_ / name; }

    // Write to a sibling temporary first so an interrupted run never leaves a
    // truncated result behind.
    void write(const std::string& name, const std::function<void(std::ostream&)>& body) const {
        const auto target = path(name);
        auto tmp = target;
        tmp += ".tmp";
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            if (!os) throw std::runtime_error("cannot write " + tmp.string());
            body(os);
            os.flush();
            if (!os) throw std::runtime_error("write failed for " + tmp.string());
        }
        fs::rename(tmp, target);
        log_ << "wrote " << target.string() << '\n';
    }

private:
    fs::path dir_;
    std::string command_;
    std::uint64_t hash_;
    std::ostream& log_;
};

// Append-only checkpoint of finished Monte Carlo draws. Rows from a run with a
// different configuration hash are ignored.
class FileDrawCache final : public DrawCache {
public:
    FileDrawCache(fs::path path, std::uint64_t config_hash, std::string comment)
        : path_(std::move(path)), key_(hex64(config_hash)) {
        std::ifstream in(path_);
        std::string line;
        bool any = false;
        while (std::getline(in, line)) {
            any = true;
            if (line.empty() || line[0] == '#' || line.rfind("config", 0) == 0) continue;
            std::stringstream ss(line);
            std::string key, eps, draw, ok, value;
            if (!std::getline(ss, key, ',') || !std::getline(ss, eps, ',') || !std::getline(ss, draw, ',') ||
                !std::getline(ss, ok, ',') || !std::getline(ss, value))
                continue;  // a row cut short by an interruption
            if (key != key_) continue;
            try {
                entries_[{std::stoull(eps), std::stoull(draw)}] = DrawOutcome{std::stod(value), ok == "1"};
            } catch (const std::exception&) {
            }
        }
        out_.open(path_, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open checkpoint " + path_.string());
        if (!any) out_ << "# " << comment << "\nconfig,eps_index,draw,ok,estimate\n";
    }

    std::optional<DrawOutcome> lookup(std::size_t eps_index, std::size_t draw) override {
        auto it = entries_.find({eps_index, draw});
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void store(std::size_t eps_index, std::size_t draw, const DrawOutcome& outcome) override {
        entries_[{eps_index, draw}] = outcome;
        out_ << key_ << ',' << eps_index << ',' << draw << ',' << (outcome.ok ? 1 : 0) << ','
             << format_double(outcome.estimate) << '\n';
        out_.flush();
    }

    [[nodiscard]] std::size_t size() const { return entries_.size(); }

private:
    fs::path path_;
    std::string key_;
    std::map<std::pair<std::size_t, std::size_t>, DrawOutcome> entries_;
    std::ofstream out_;
};

struct Context {
    ExperimentConfig config;
    Options options;
    int threads = 1;
    std::ostream& log;
    Output out;
};

std::vector<ParameterPoint> grid_points(const ExperimentConfig& c) {
    if (c.grid.empty()) return {ParameterPoint{}};
    return c.points();
}

OptimizationResult run_optimizer(Context& ctx) {
    const auto& c = ctx.config;
    const auto points = grid_points(c);
    if (points.size() < 2) throw ConfigError("/grid", "optimization needs at least 2 parameter points");
    auto systems = make_systems(c.ensemble, points);
    auto opt = c.optimizer;
    opt.threads = ctx.threads;
    const auto t0 = std::chrono::steady_clock::now();
    auto result = optimize_multistart(systems, c.field.n_pulses, c.field.delay_t, opt,
                                      WeightMatrix::ones(points.size()));
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    ctx.log << "optimized C_N = " << format_double(result.final_value()) << " (start " << result.start_index
            << ", " << result.trace.values.size() - 1 << " iterations, " << result.trace.stop_reason << ", "
            << dt.count() << " s)\n";
    return result;
}

PulseSequence resolve_field(Context& ctx) {
    const auto& f = ctx.config.field;
    switch (f.kind) {
        case FieldSourceKind::kFile: {
            std::ifstream in(f.path);
            if (!in) throw ConfigError("/field/path", "cannot open " + f.path.string());
            return read_pulse_sequence(in);
        }
        case FieldSourceKind::kRandom:
            return random_field(f.n_pulses, f.delay_t, f.amplitude, f.seed, f.axes);
        case FieldSourceKind::kOptimize:
            break;
    }
    return run_optimizer(ctx).field;
}

Trajectory simulate_point(const ExperimentConfig& c, const ParameterPoint& p, const PulseSequence& field) {
    return simulate_fingerprint(make_ensemble(apply_parameters(c.ensemble, p)), field);
}

void write_field(const Context& ctx, const PulseSequence& field, Provenance extra = {}) {
    auto prov = ctx.out.provenance();
    prov.insert(prov.end(), extra.begin(), extra.end());
    ctx.out.write("field.json", [&](std::ostream& os) { write_pulse_sequence(os, field, prov); });
}

void write_gnuplot(const Context& ctx, const std::string& name, const std::string& body) {
    if (!ctx.options.gnuplot) return;
    ctx.out.write(name, [&](std::ostream& os) {
        os << "# " << ctx.out.comment() << "\nset datafile separator ','\nset key autotitle columnhead\n" << body;
    });
}

void cmd_simulate(Context& ctx) {
    const auto field = resolve_field(ctx);
    write_field(ctx, field);
    const auto points = grid_points(ctx.config);
    std::vector<Trajectory> traj(points.size());
    parallel_for(points.size(), ctx.threads,
                 [&](std::size_t i) { traj[i] = simulate_point(ctx.config, points[i], field); });
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto comment = ctx.out.comment() + " point=" + points[i].to_string();
        ctx.out.write("trajectory_" + std::to_string(i) + ".csv",
                      [&](std::ostream& os) { write_trajectory_csv(os, traj[i], field.delay_t, comment); });
    }
    write_gnuplot(ctx, "simulate.gp", "plot for [f in system('ls trajectory_*.csv')] f using 2:3 with lines\n");
}

void cmd_build_dict(Context& ctx) {
    const auto field = resolve_field(ctx);
    const auto points = grid_points(ctx.config);
    const auto dict = build_dictionary(ctx.config.ensemble, points, field, ctx.threads);
    const auto map = recognition_map(dict, ctx.threads);
    ctx.log << "C_N = " << format_double(figure_of_merit(dict, WeightMatrix::ones(dict.size())))
            << ", min off-diagonal D = " << format_double(map.min_off_diagonal) << '\n';
    write_field(ctx, field);
    ctx.out.write("dictionary.json", [&](std::ostream& os) { write_dictionary(os, dict); });
    ctx.out.write("recognition_map.csv",
                  [&](std::ostream& os) { write_recognition_map_csv(os, map, ctx.out.comment()); });
    ctx.out.write("recognition_map.json",
                  [&](std::ostream& os) { write_recognition_map_sidecar(os, map, ctx.out.provenance()); });
    write_gnuplot(ctx, "build-dict.gp", "unset key\nplot 'recognition_map.csv' matrix with image\n");
}

void cmd_optimize(Context& ctx) {
    const auto result = run_optimizer(ctx);
    const auto points = grid_points(ctx.config);
    const auto dict = build_dictionary(ctx.config.ensemble, points, result.field, ctx.threads);
    const auto map = recognition_map(dict, ctx.threads);
    write_field(ctx, result.field,
                {{"c_n", format_double(result.final_value())},
                 {"min_off_diagonal", format_double(map.min_off_diagonal)},
                 {"seed", std::to_string(result.seed)},
                 {"start_index", std::to_string(result.start_index)},
                 {"stop_reason", result.trace.stop_reason}});
    ctx.out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, result.trace, ctx.out.comment()); });

    const int n_random = ctx.options.random_baseline;
    if (n_random > 0) {
        const auto& c = ctx.config;
        std::vector<double> cn(static_cast<std::size_t>(n_random)), md(cn.size());
        parallel_for(cn.size(), ctx.threads, [&](std::size_t i) {
            const auto f = random_field(c.field.n_pulses, c.field.delay_t, c.baseline.amplitude, c.baseline.seed + i,
                                        c.field.axes);
            const auto d = build_dictionary(c.ensemble, points, f);
            cn[i] = figure_of_merit(d, WeightMatrix::ones(d.size()));
            md[i] = recognition_map(d).min_off_diagonal;
        });
        ctx.out.write("baseline.csv", [&](std::ostream& os) {
            os << "# " << ctx.out.comment() << "\nindex,seed,c_n,min_d\n";
            for (std::size_t i = 0; i < cn.size(); ++i)
                os << i << ',' << c.baseline.seed + i << ',' << format_double(cn[i]) << ',' << format_double(md[i])
                   << '\n';
        });
        const double mean = std::accumulate(cn.begin(), cn.end(), 0.0) / static_cast<double>(cn.size());
        ctx.log << "random baseline: mean C_N = " << format_double(mean) << " over " << n_random << " fields\n";
    }
    write_gnuplot(ctx, "optimize.gp", "set xlabel 'iteration'\nplot 'trace.csv' using 1:2 with lines\n");
}

Trajectory clean_signal(const Context& ctx, const PulseSequence& field) {
    if (ctx.config.truth.size() == 0 && !ctx.config.grid.empty())
        throw ConfigError("/truth", "needed to synthesize the measured signal");
    return simulate_point(ctx.config, ctx.config.truth, field);
}

void cmd_estimate(Context& ctx) {
    const auto field = resolve_field(ctx);
    const auto points = grid_points(ctx.config);
    const auto dict = build_dictionary(ctx.config.ensemble, points, field, ctx.threads);
    Trajectory g;
    if (ctx.options.signal) {
        std::ifstream in(*ctx.options.signal);
        if (!in) throw InvalidInput("cannot open signal " + ctx.options.signal->string());
        g = read_trajectory_csv(in);
    } else {
        g = clean_signal(ctx, field);
    }
    if (g.size() != field.count())
        throw DimensionError("signal has " + std::to_string(g.size()) + " samples, dictionary expects " +
                             std::to_string(field.count()));
    const auto report = estimate(dict, g, ctx.config.estimator);
    ctx.log << "matched entry " << report.matched_index << " (" << report.matched_parameters.to_string()
            << "), refined " << report.refined_parameters.to_string() << " after " << report.iterations
            << " iterations\n";
    ctx.out.write("estimate.json",
                  [&](std::ostream& os) { write_estimation_report(os, report, ctx.out.provenance()); });
    ctx.out.write("residuals.csv", [&](std::ostream& os) {
        os << "# " << ctx.out.comment() << "\nindex";
        for (const auto& p : dict.entries.front().parameters.values()) os << ',' << p.name;
        os << ",d\n";
        for (std::size_t i = 0; i < dict.size(); ++i) {
            os << i;
            for (const auto& p : dict.entries[i].parameters.values()) os << ',' << format_double(p.value);
            os << ',' << format_double(report.entry_residuals[i]) << '\n';
        }
    });
    ctx.out.write("fit_history.csv", [&](std::ostream& os) {
        os << "# " << ctx.out.comment() << "\niteration,residual\n";
        for (std::size_t i = 0; i < report.residual_history.size(); ++i)
            os << i << ',' << format_double(report.residual_history[i]) << '\n';
    });
    write_gnuplot(ctx, "estimate.gp", "set logscale y\nplot 'residuals.csv' using 2:(column('d')) with linespoints\n");
}

struct StudyResult {
    std::optional<WidthReport> report;
    std::string error;
};

StudyResult run_study(Context& ctx, const DrawFn& draw, const std::string& method) {
    const auto& n = ctx.config.noise;
    FileDrawCache cache(ctx.out.path("checkpoint_" + method + ".csv"), ctx.config.hash(), ctx.out.comment());
    if (cache.size()) ctx.log << method << ": resuming with " << cache.size() << " finished draws\n";
    WidthOptions opts;
    opts.draws = n.draws;
    opts.master_seed = n.seed;
    opts.width = n.width;
    opts.min_success = n.min_success;
    opts.threads = ctx.threads;
    opts.cache = &cache;
    StudyResult r;
    try {
        r.report = width_study(draw, n.epsilons, opts, method);
        ctx.out.write("width_" + method + ".csv",
                      [&](std::ostream& os) { write_width_csv(os, *r.report, ctx.out.comment()); });
        for (const auto& row : r.report->rows)
            ctx.log << method << " eps=" << format_double(row.epsilon) << " width=" << format_double(row.width)
                    << " failures=" << row.failures << '\n';
    } catch (const ScenarioError& e) {
        r.error = e.what();
        ctx.log << method << ": " << e.what() << '\n';
    }
    return r;
}

void write_ratio(Context& ctx, const StudyResult& num, const StudyResult& den) {
    if (!num.report || !den.report) return;
    const auto rows = compare_methods(*num.report, *den.report);
    ctx.out.write("ratio.csv", [&](std::ostream& os) { write_ratio_csv(os, rows, ctx.out.comment()); });
}

void finish_studies(std::initializer_list<const StudyResult*> results) {
    std::string failed;
    for (const auto* r : results)
        if (!r->report) failed += (failed.empty() ? "" : "; ") + r->error;
    if (!failed.empty()) throw ScenarioError(failed);
}

DrawFn dictionary_draw(Context& ctx, const PulseSequence& field) {
    auto dict = build_dictionary(ctx.config.ensemble, grid_points(ctx.config), field, ctx.threads);
    return fingerprint_draw(std::move(dict), clean_signal(ctx, field), ctx.config.estimator, ctx.config.noise.parameter);
}

void cmd_noise_study(Context& ctx) {
    const auto& c = ctx.config;
    const auto optimal = resolve_field(ctx);
    const auto random = random_field(optimal.count(), optimal.delay_t, c.baseline.amplitude, c.baseline.seed,
                                     c.field.axes);
    write_field(ctx, optimal);
    const auto a = run_study(ctx, dictionary_draw(ctx, optimal), "optimal");
    const auto b = run_study(ctx, dictionary_draw(ctx, random), "random");
    write_ratio(ctx, b, a);
    write_gnuplot(ctx, "noise-study.gp",
                  "set logscale xy\nplot 'width_optimal.csv' using 1:3 with linespoints, "
                  "'width_random.csv' using 1:3 with linespoints\n");
    finish_studies({&a, &b});
}

void cmd_ir_compare(Context& ctx) {
    const auto& c = ctx.config;
    const auto field = resolve_field(ctx);
    if (field.count() != c.ir.n_points)
        throw ConfigError("/field/n_pulses", "fingerprint budget " + std::to_string(field.count()) +
                                                 " differs from the inversion-recovery point count " +
                                                 std::to_string(c.ir.n_points));
    const double t1 = c.truth.find(param::kT1).value_or(c.ensemble.relaxation.t1);
    write_field(ctx, field);
    const auto a = run_study(ctx, dictionary_draw(ctx, field), "ofp");
    const auto b = run_study(ctx, inversion_recovery_draw(t1, c.ir.n_points, c.ir.spacing, c.ir.fit), "ir");
    write_ratio(ctx, b, a);
    write_gnuplot(ctx, "ir-compare.gp",
                  "set logscale xy\nplot 'width_ofp.csv' using 1:3 with linespoints, "
                  "'width_ir.csv' using 1:3 with linespoints\n");
    finish_studies({&a, &b});
}

void cmd_scan_fwhm(Context& ctx) {
    const auto& c = ctx.config;
    if (c.scan.fwhm_grid.empty()) throw ConfigError("/scan/fwhm_rad_per_s", "empty scan grid");
    const auto field = resolve_field(ctx);
    const auto truth = apply_parameters(c.ensemble, c.truth);
    const auto g = add_noise(simulate_fingerprint(make_ensemble(truth), field), {c.scan.epsilon, c.scan.seed});
    const auto rows = correlation_scan(g, field, truth, c.scan.start, c.scan.fwhm_grid, c.estimator, ctx.threads);
    write_field(ctx, field);
    ctx.out.write("scan.csv", [&](std::ostream& os) { write_scan_csv(os, rows, ctx.out.comment()); });
    const auto plateau = find_plateau(rows, c.scan.plateau_rel_tol);
    ctx.out.write("plateau.json", [&](std::ostream& os) {
        os << "{\n  \"first\": " << plateau.first << ",\n  \"last\": " << plateau.last << ",\n  \"argmin\": "
           << plateau.argmin << ",\n  \"fwhm_low\": " << format_double(rows[plateau.first].fwhm)
           << ",\n  \"fwhm_high\": " << format_double(rows[plateau.last].fwhm) << ",\n  \"config_hash\": \""
           << hex64(c.hash()) << "\"\n}\n";
    });
    ctx.log << "plateau fwhm in [" << format_double(rows[plateau.first].fwhm) << ", "
            << format_double(rows[plateau.last].fwhm) << "] rad/s, " << plateau.size() << " points\n";
    write_gnuplot(ctx, "scan-fwhm.gp", "plot 'scan.csv' using 1:2 with linespoints, '' using 1:5 with linespoints\n");
}

const std::map<std::string, void (*)(Context&)>& commands() {
    static const std::map<std::string, void (*)(Context&)> table{
        {"simulate", cmd_simulate},         {"build-dict", cmd_build_dict}, {"optimize", cmd_optimize},
        {"estimate", cmd_estimate},         {"noise-study", cmd_noise_study},
        {"ir-compare", cmd_ir_compare},     {"scan-fwhm", cmd_scan_fwhm}};
    return table;
}

}  // namespace

int resolve_threads(const std::optional<int>& flag) {
    if (flag) {
        if (*flag < 1) throw InvalidInput("--threads must be >= 1");
        return *flag;
    }
    if (const char* env = std::getenv("FP_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw InvalidInput(std::string("FP_THREADS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

void apply_overrides(ExperimentConfig& config, const Options& options) {
    if (options.seed) {
        config.optimizer.seed = *options.seed;
        config.noise.seed = *options.seed;
        config.scan.seed = *options.seed;
        if (config.field.kind == FieldSourceKind::kRandom) config.field.seed = *options.seed;
    }
    if (options.axes) {
        config.field.axes = *options.axes;
        config.optimizer.axes = *options.axes;
    }
    if (options.out) config.output_dir = *options.out;
}

void run_command(const Options& options, std::ostream& log) {
    auto it = commands().find(options.command);
    if (it == commands().end()) throw InvalidInput("unknown command " + options.command);
    auto config = load_config(options.config_path);
    apply_overrides(config, options);
    const int threads = resolve_threads(options.threads);
    Context ctx{config, options, threads, log, Output(config.output_dir, options.command, config.hash(), log)};
    it->second(ctx);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    static const std::map<std::string, std::string> kDescriptions{
        {"simulate", "write the trajectory of every grid point"},
        {"build-dict", "build the dictionary and its recognition map"},
        {"optimize", "optimize a pulse sequence for the grid dictionary"},
        {"estimate", "match a signal against the dictionary and refine"},
        {"noise-study", "estimate widths for the optimal and a random field"},
        {"ir-compare", "estimate widths for fingerprinting and inversion recovery"},
        {"scan-fwhm", "fit T2 over a grid of assumed line widths"}};
    CLI::App app{"Optimal fingerprinting: simulate, optimize and estimate with delta-pulse sequences", "ofp"};
    app.set_version_flag("--version", OFP_VERSION);
    app.require_subcommand(1);

    Options o;
    std::string axis;
    std::string seed;
    int threads = 0;
    std::string out_dir, signal;
    for (const auto& [name, cmd] : commands()) {
        (void)cmd;
        auto* sub = app.add_subcommand(name, kDescriptions.at(name));
        sub->add_option("--config", o.config_path, "experiment JSON")->required();
        sub->add_option("--seed", seed, "master seed for optimizer starts and noise draws");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", threads, "worker threads (default FP_THREADS or 1)");
        sub->add_option("--axis", axis, "control axes")->check(CLI::IsMember({"x", "xy"}));
        sub->add_flag("--gnuplot", o.gnuplot, "also write a gnuplot script");
        if (name == "optimize")
            sub->add_option("--random-baseline", o.random_baseline, "number of random comparison fields")
                ->check(CLI::NonNegativeNumber);
        if (name == "estimate") sub->add_option("--signal", signal, "measured trajectory CSV");
    }

    std::vector<const char*> argv{"ofp"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        o.command = app.get_subcommands().front()->get_name();
        if (!seed.empty()) {
            std::size_t used = 0;
            o.seed = std::stoull(seed, &used);
            if (used != seed.size() || seed[0] == '-') throw InvalidInput("--seed expects an unsigned integer");
        }
        if (threads != 0) o.threads = threads;
        if (!axis.empty()) o.axes = axis == "x" ? ControlAxes::kX : ControlAxes::kXY;
        if (!out_dir.empty()) o.out = out_dir;
        if (!signal.empty()) o.signal = signal;
        run_command(o, out);
        return kSuccess;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::invalid_argument& e) {  // InvalidInput, DimensionError, ConfigError
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
}

}  // namespace ofp::cli
