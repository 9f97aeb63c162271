#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcal/agnostic.hpp"
#include "mcal/population.hpp"
#include "mcal/predictor.hpp"

using namespace mcal;
namespace fs = std::filesystem;

namespace {

const char* kCli = MCAL_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "mcal_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kGenConfig = R"({
  "n": 400,
  "collection": {"gamma": 0.1, "count": 4, "arity": 2,
                 "density_min": 0.2, "density_max": 0.4},
  "truth": {"kind": "per_set", "base": 0.5, "offset_min": 0.15,
            "offset_max": 0.3, "clip": true}
})";

const char* kLearnConfig = R"({
  "algorithm": "multicalibrated", "alpha": 0.1, "lambda": 0.1, "gamma": 0.1,
  "seed": 5, "oracle": {"flavor": "exact", "seed": 5}
})";

}  // namespace

TEST_CASE("gen is deterministic and learn/audit complete the loop") {
    const auto dir = fresh_dir("roundtrip");
    write_file(dir / "gen.json", kGenConfig);
    write_file(dir / "learn.json", kLearnConfig);

    REQUIRE(run("gen --config " + (dir / "gen.json").string() + " --out " + (dir / "a").string() +
                " --seed 9") == 0);
    REQUIRE(run("gen --config " + (dir / "gen.json").string() + " --out " + (dir / "b").string() +
                " --seed 9") == 0);
    CHECK(slurp(dir / "a" / "population.csv") == slurp(dir / "b" / "population.csv"));
    CHECK(slurp(dir / "a" / "truth.csv") == slurp(dir / "b" / "truth.csv"));
    CHECK(slurp(dir / "a" / "collection.json") == slurp(dir / "b" / "collection.json"));

    REQUIRE(run("learn --instance " + (dir / "a").string() + " --config " +
                (dir / "learn.json").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(fs::exists(dir / "run" / "predictor.csv"));
    CHECK(fs::exists(dir / "run" / "pre_closing.csv"));
    CHECK(fs::exists(dir / "run" / "program.json"));
    CHECK(fs::exists(dir / "run" / "trace.jsonl"));
    CHECK(fs::exists(dir / "run" / "manifest.json"));

    // the pre-closing iterate passes its own audit; exit code 0 means clean
    CHECK(run("audit --predictor " + (dir / "run" / "pre_closing.csv").string() + " --instance " +
              (dir / "a").string() + " --alpha 0.1 --lambda 0.1 --out " +
              (dir / "audit.json").string()) == 0);
    CHECK(fs::exists(dir / "audit.json"));
}

TEST_CASE("audit flags planted violations with exit code 1") {
    const auto dir = fresh_dir("audit");
    write_file(dir / "gen.json", R"({
      "n": 300,
      "collection": {"gamma": 0.05, "count": 1, "arity": 2, "density_min": 0.3,
                     "density_max": 0.3, "half_subset": true},
      "truth": {"kind": "half_qualified", "base": 0.5}
    })");
    REQUIRE(run("gen --config " + (dir / "gen.json").string() + " --out " + (dir / "inst").string() +
                " --seed 3") == 0);

    // constant 1/2 is flagged on the qualified half
    const auto pop = load_population((dir / "inst" / "population.csv").string());
    store_predictor(DensePredictor::constant(pop.size(), 0.5), (dir / "half.csv").string());
    CHECK(run("audit --predictor " + (dir / "half.csv").string() + " --instance " +
              (dir / "inst").string() + " --alpha 0.1 --lambda 0.1") == 1);

    // the truth vector audits clean in both modes
    CHECK(run("audit --predictor " + (dir / "inst" / "truth.csv").string() + " --instance " +
              (dir / "inst").string() + " --alpha 0.01 --lambda 0.1") == 0);
    CHECK(run("audit --predictor " + (dir / "inst" / "truth.csv").string() + " --instance " +
              (dir / "inst").string() + " --alpha 0.01 --mode ae") == 0);
}

TEST_CASE("exit codes: bad input 2, oracle refusal 3, guard trip 4") {
    const auto dir = fresh_dir("codes");
    write_file(dir / "gen.json", kGenConfig);
    REQUIRE(run("gen --config " + (dir / "gen.json").string() + " --out " + (dir / "inst").string() +
                " --seed 21") == 0);

    CHECK(run("learn --instance /nonexistent --config " + (dir / "gen.json").string() + " --out " +
              (dir / "x").string()) == 2);
    CHECK(run("gen --config /nonexistent.json --out " + (dir / "y").string() + " --seed 1") == 2);

    write_file(dir / "refuse.json", R"({
      "algorithm": "multicalibrated", "alpha": 0.1, "lambda": 0.1, "gamma": 0.1,
      "seed": 5,
      "oracle": {"flavor": "private", "epsilon": 5.0, "k_max": 100000, "m_max": 0,
                 "xi": 0.05, "seed": 5, "n_samples": 200000}
    })");
    CHECK(run("learn --instance " + (dir / "inst").string() + " --config " +
              (dir / "refuse.json").string() + " --out " + (dir / "r").string()) == 3);

    write_file(dir / "guard.json", R"({
      "algorithm": "multicalibrated", "alpha": 0.1, "lambda": 0.1, "gamma": 0.1,
      "seed": 5, "max_rounds_factor": 1e-8,
      "oracle": {"flavor": "exact", "seed": 5}
    })");
    CHECK(run("learn --instance " + (dir / "inst").string() + " --config " +
              (dir / "guard.json").string() + " --out " + (dir / "g").string()) == 4);
}

TEST_CASE("postprocess, reduce, and report emit their artifacts") {
    const auto dir = fresh_dir("tools");
    write_file(dir / "gen.json", kGenConfig);
    write_file(dir / "learn.json", kLearnConfig);
    REQUIRE(run("gen --config " + (dir / "gen.json").string() + " --out " + (dir / "inst").string() +
                " --seed 31") == 0);

    // family: the truth itself plus a constant
    const auto pop = load_population((dir / "inst" / "population.csv").string());
    fs::create_directories(dir / "family");
    fs::copy_file(dir / "inst" / "truth.csv", dir / "family" / "benchmark.csv");
    store_predictor(DensePredictor::constant(pop.size(), 0.5), (dir / "family" / "half.csv").string());

    CHECK(run("postprocess --instance " + (dir / "inst").string() + " --family " +
              (dir / "family").string() + " --out " + (dir / "post").string() +
              " --alpha 0.1 --lambda 0.1 --seed 2") == 0);
    CHECK(fs::exists(dir / "post" / "report.json"));
    CHECK(fs::exists(dir / "post" / "predictor.csv"));

    // labels perfectly aligned with the first planted set
    const auto collection = load_collection((dir / "inst" / "collection.json").string());
    LabelVector y;
    for (int i = 0; i < pop.size(); ++i) {
        y.values.push_back(evaluate_predicate(collection.predicates[0], pop, i) ? 1.0 : -1.0);
    }
    store_labels(y, (dir / "labels.csv").string());
    CHECK(run("reduce --instance " + (dir / "inst").string() + " --labels " +
              (dir / "labels.csv").string() + " --rho 0.5 --tau 0.045 --gamma 0.1 --alpha 0.02 --out " +
              (dir / "hyp.json").string()) == 0);
    CHECK(fs::exists(dir / "hyp.json"));
    const auto h = load_hypothesis((dir / "hyp.json").string());
    CHECK(correlation(h.evaluate_all(pop), y.values) >= 0.045);

    // learn twice, summarize both traces
    REQUIRE(run("learn --instance " + (dir / "inst").string() + " --config " +
                (dir / "learn.json").string() + " --out " + (dir / "run1").string()) == 0);
    REQUIRE(run("learn --instance " + (dir / "inst").string() + " --config " +
                (dir / "learn.json").string() + " --out " + (dir / "run2").string() +
                " --alpha 0.2") == 0);
    CHECK(run("report --out " + (dir / "summary.csv").string() + " " +
              (dir / "run1" / "trace.jsonl").string() + " " +
              (dir / "run2" / "trace.jsonl").string()) == 0);
    const auto summary = slurp(dir / "summary.csv");
    CHECK(summary.find("trace,algorithm,alpha,lambda,gamma,n,updates,checks,queries,bound,"
                       "within_bound,potential_initial,potential_final,wall_seconds") == 0);
    CHECK(run("report --curve --out " + (dir / "curve.csv").string() + " " +
              (dir / "run1" / "trace.jsonl").string()) == 0);
    const auto curve = slurp(dir / "curve.csv");
    CHECK(curve.find("trace,update_index,round,set,interval,v,size,delta,potential_before,"
                     "potential_after") == 0);

    // learner runs are reproducible: identical configs give identical artifacts
    REQUIRE(run("learn --instance " + (dir / "inst").string() + " --config " +
                (dir / "learn.json").string() + " --out " + (dir / "run3").string()) == 0);
    CHECK(slurp(dir / "run1" / "predictor.csv") == slurp(dir / "run3" / "predictor.csv"));
    CHECK(slurp(dir / "run1" / "program.json") == slurp(dir / "run3" / "program.json"));
}
