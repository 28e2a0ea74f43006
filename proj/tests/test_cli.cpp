#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ofp/cli/commands.hpp"
#include "ofp/ensemble.hpp"
#include "ofp/grape.hpp"
#include "ofp/io.hpp"

namespace fs = std::filesystem;
using namespace ofp;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "ofp-cli-XXXXXX").string();
        REQUIRE(mkdtemp(tmpl.data()) != nullptr);
        path = tmpl;
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out, err;
};

Run ofp_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// every regular file of `a` exists in `b` with the same bytes
bool same_tree(const fs::path& a, const fs::path& b) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++n;
        const auto other = b / e.path().filename();
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
            MESSAGE("differs: " << e.path().filename().string());
            return false;
        }
    }
    return n > 0;
}

const char* kDictConfig = R"({
  // three T1 values, small random field
  "ensemble": {"t1_s": 1.0, "t2_s": 0.2, "n_points": 11, "fwhm_rad_per_s": 10.0},
  "grid": {"t1_s": [0.1, 0.3, 0.5]},
  "truth": {"t1_s": 0.27},
  "field": {"source": "random", "n_pulses": 40, "seed": 5},
  "noise": {"epsilons": [0.0, 0.01, 0.05], "draws": 6, "seed": 3},
  "estimator": {"free_parameters": ["t1_s"]}
})";

class EnvGuard {
public:
    explicit EnvGuard(const char* name) : name_(name) {
        if (const char* v = std::getenv(name)) old_ = v;
    }
    ~EnvGuard() {
        if (old_.empty()) unsetenv(name_);
        else setenv(name_, old_.c_str(), 1);
    }

private:
    const char* name_;
    std::string old_;
};

}  // namespace

TEST_CASE("simulate with a minimal config") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", R"({"field": {"source": "random", "n_pulses": 25}})");
    const auto r = ofp_run({"simulate", "--config", cfg.string(), "--out", (tmp.path / "o").string()});
    REQUIRE(r.code == 0);
    std::ifstream in(tmp.path / "o" / "trajectory_0.csv");
    const auto traj = read_trajectory_csv(in);
    CHECK(traj.size() == 25);
    CHECK_FALSE(fs::exists(tmp.path / "o" / "trajectory_1.csv"));
    CHECK(slurp(tmp.path / "o" / "trajectory_0.csv").rfind("# ofp ", 0) == 0);

    // the trajectory is the library simulation of the default ensemble
    const auto field = random_field(25, 0.01, std::numbers::pi, 1000);
    CHECK(traj == simulate_fingerprint(make_ensemble(EnsembleSpec{}), field));
    std::ifstream fin(tmp.path / "o" / "field.json");
    CHECK(read_pulse_sequence(fin) == field);
}

TEST_CASE("reruns are byte identical") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", kDictConfig);
    for (const char* cmd : {"build-dict", "estimate", "noise-study"}) {
        const auto a = tmp.path / (std::string(cmd) + "-a");
        const auto b = tmp.path / (std::string(cmd) + "-b");
        REQUIRE(ofp_run({cmd, "--config", cfg.string(), "--out", a.string()}).code == 0);
        REQUIRE(ofp_run({cmd, "--config", cfg.string(), "--out", b.string(), "--threads", "3"}).code == 0);
        CHECK(same_tree(a, b));
    }
}

TEST_CASE("FP_THREADS sets the default worker count") {
    EnvGuard guard("FP_THREADS");
    unsetenv("FP_THREADS");
    CHECK(cli::resolve_threads(std::nullopt) == 1);
    setenv("FP_THREADS", "4", 1);
    CHECK(cli::resolve_threads(std::nullopt) == 4);
    CHECK(cli::resolve_threads(2) == 2);
    CHECK_THROWS_AS(cli::resolve_threads(0), InvalidInput);
    setenv("FP_THREADS", "many", 1);
    CHECK_THROWS_AS(cli::resolve_threads(std::nullopt), InvalidInput);

    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", kDictConfig);
    CHECK(ofp_run({"build-dict", "--config", cfg.string(), "--out", (tmp.path / "x").string()}).code == 2);
    setenv("FP_THREADS", "3", 1);
    REQUIRE(ofp_run({"build-dict", "--config", cfg.string(), "--out", (tmp.path / "a").string()}).code == 0);
    unsetenv("FP_THREADS");
    REQUIRE(ofp_run({"build-dict", "--config", cfg.string(), "--out", (tmp.path / "b").string()}).code == 0);
    CHECK(same_tree(tmp.path / "a", tmp.path / "b"));
}

TEST_CASE("input errors exit with 2") {
    TempDir tmp;
    const auto out = (tmp.path / "o").string();

    const auto bad = write_file(tmp.path / "bad.json", "{\n  \"grid\": {\"t1_s\": [0.1, 0.2]},\n  \"field\": {,}\n}\n");
    auto r = ofp_run({"build-dict", "--config", bad.string(), "--out", out});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 3") != std::string::npos);

    const auto unknown = write_file(tmp.path / "u.json", R"({"field": {"source": "random", "n_pulse": 5}})");
    r = ofp_run({"simulate", "--config", unknown.string(), "--out", out});
    CHECK(r.code == 2);
    CHECK(r.err.find("/field/n_pulse") != std::string::npos);

    const auto param = write_file(tmp.path / "p.json", R"({"grid": {"t3_s": [1.0]}})");
    CHECK(ofp_run({"simulate", "--config", param.string(), "--out", out}).code == 2);
    const auto type = write_file(tmp.path / "t.json", R"({"field": {"n_pulses": "many"}})");
    CHECK(ofp_run({"simulate", "--config", type.string(), "--out", out}).code == 2);

    CHECK(ofp_run({"simulate", "--config", (tmp.path / "missing.json").string()}).code == 2);
    CHECK(ofp_run({"simulate"}).code == 2);
    CHECK(ofp_run({"teleport", "--config", bad.string()}).code == 2);
    CHECK(ofp_run({"simulate", "--config", unknown.string(), "--axis", "z"}).code == 2);
    CHECK(ofp_run({"simulate", "--config", unknown.string(), "--seed", "-4"}).code == 2);
    CHECK(ofp_run({"--help"}).code == 0);
}

TEST_CASE("measured signal errors") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", kDictConfig);
    const auto out = (tmp.path / "o").string();

    std::ostringstream good;
    write_trajectory_csv(good, Trajectory{std::vector<Sample>(40, Sample{0.1, 0.2})}, 0.01);
    auto text = good.str();
    const auto ok = write_file(tmp.path / "ok.csv", text);
    CHECK(ofp_run({"estimate", "--config", cfg.string(), "--out", out, "--signal", ok.string()}).code == 0);

    text.replace(text.find("0.20000000000000001", text.find("\n5,")), 19, "0.2e");
    const auto corrupt = write_file(tmp.path / "bad.csv", text);
    auto r = ofp_run({"estimate", "--config", cfg.string(), "--out", out, "--signal", corrupt.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 6") != std::string::npos);

    std::ostringstream shorter;
    write_trajectory_csv(shorter, Trajectory{std::vector<Sample>(39, Sample{0.1, 0.2})}, 0.01);
    const auto mismatch = write_file(tmp.path / "short.csv", shorter.str());
    r = ofp_run({"estimate", "--config", cfg.string(), "--out", out, "--signal", mismatch.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("39") != std::string::npos);
}

TEST_CASE("runtime failures exit with 1") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", kDictConfig);
    const auto blocker = write_file(tmp.path / "file", "x");
    const auto r = ofp_run({"build-dict", "--config", cfg.string(), "--out", (blocker / "sub").string()});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("noise study resumes from its checkpoint") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", kDictConfig);
    const auto a = tmp.path / "a";
    const auto b = tmp.path / "b";
    REQUIRE(ofp_run({"noise-study", "--config", cfg.string(), "--out", a.string()}).code == 0);
    CHECK(fs::exists(a / "width_optimal.csv"));
    CHECK(fs::exists(a / "width_random.csv"));
    CHECK(fs::exists(a / "ratio.csv"));

    // keep the header and the first half of the finished draws, with the
    // last row cut mid-line as an interrupted run leaves it
    fs::create_directories(b);
    for (const char* m : {"optimal", "random"}) {
        const auto full = slurp(a / (std::string("checkpoint_") + m + ".csv"));
        std::istringstream lines(full);
        std::string line, kept;
        for (int i = 0; i < 2 + 9 && std::getline(lines, line); ++i) kept += line + "\n";
        std::getline(lines, line);
        kept += line.substr(0, line.size() / 2);
        write_file(b / (std::string("checkpoint_") + m + ".csv"), kept);
    }
    const auto r = ofp_run({"noise-study", "--config", cfg.string(), "--out", b.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("resuming with 9 finished draws") != std::string::npos);
    for (const char* f : {"width_optimal.csv", "width_random.csv", "ratio.csv", "field.json"})
        CHECK(slurp(a / f) == slurp(b / f));

    // a checkpoint from another configuration is not reused
    const auto c = tmp.path / "c";
    fs::create_directories(c);
    fs::copy_file(a / "checkpoint_optimal.csv", c / "checkpoint_optimal.csv");
    const auto r2 = ofp_run({"noise-study", "--config", cfg.string(), "--out", c.string(), "--seed", "9"});
    REQUIRE(r2.code == 0);
    CHECK(r2.out.find("optimal: resuming") == std::string::npos);
}

TEST_CASE("seed and axis overrides") {
    auto config = cli::parse_config(kDictConfig, ".");
    cli::Options o;
    o.seed = 77;
    o.axes = ControlAxes::kX;
    const auto before = config.hash();
    cli::apply_overrides(config, o);
    CHECK(config.noise.seed == 77);
    CHECK(config.optimizer.seed == 77);
    CHECK(config.scan.seed == 77);
    CHECK(config.field.seed == 77);
    CHECK(config.optimizer.axes == ControlAxes::kX);
    CHECK(config.hash() != before);
}

TEST_CASE("ir-compare requires matching measurement budgets") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", R"({
      "grid": {"t1_s": [0.1, 0.3, 0.5]},
      "truth": {"t1_s": 0.3},
      "field": {"source": "random", "n_pulses": 30},
      "ir": {"n_points": 40}
    })");
    const auto r = ofp_run({"ir-compare", "--config", cfg.string(), "--out", (tmp.path / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("/field/n_pulses") != std::string::npos);
}

TEST_CASE("optimize writes its field, trace and baseline") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "c.json", R"({
      "ensemble": {"n_points": 11},
      "grid": {"t1_s": [0.1, 0.5]},
      "field": {"source": "optimize", "n_pulses": 20},
      "optimizer": {"max_iterations": 15, "multi_starts": 2},
      "baseline": {"seed": 50}
    })");
    const auto out = tmp.path / "o";
    const auto r = ofp_run({"optimize", "--config", cfg.string(), "--out", out.string(), "--random-baseline", "3",
                            "--gnuplot"});
    REQUIRE(r.code == 0);
    Provenance p;
    std::ifstream in(out / "field.json");
    CHECK(read_pulse_sequence(in, &p).count() == 20);
    bool has_cn = false;
    for (const auto& [k, v] : p) has_cn = has_cn || k == "c_n";
    CHECK(has_cn);
    CHECK(fs::exists(out / "trace.csv"));
    CHECK(fs::exists(out / "optimize.gp"));
    const auto baseline = slurp(out / "baseline.csv");
    CHECK(baseline.find("\n0,50,") != std::string::npos);
    CHECK(baseline.find("\n2,52,") != std::string::npos);

    const auto one = write_file(tmp.path / "one.json", R"({"grid": {"t1_s": [0.1]}, "field": {"n_pulses": 5}})");
    CHECK(ofp_run({"optimize", "--config", one.string(), "--out", out.string()}).code == 2);
}

TEST_CASE("shipped configs load") {
    int n = 0;
    for (const auto& e : fs::directory_iterator(OFP_CONFIG_DIR)) {
        if (e.path().extension() != ".json") continue;
        ++n;
        CAPTURE(e.path().filename().string());
        CHECK_NOTHROW((void)cli::load_config(e.path()));
    }
    CHECK(n >= 4);

    TempDir tmp;
    const auto r = ofp_run({"simulate", "--config", (fs::path(OFP_CONFIG_DIR) / "single_spin.json").string(), "--out",
                            tmp.path.string()});
    CHECK(r.code == 0);
    std::ifstream in(tmp.path / "trajectory_0.csv");
    CHECK(read_trajectory_csv(in).size() == 200);
}
