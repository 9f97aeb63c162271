#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcal/agnostic.hpp"
#include "mcal/auditor.hpp"
#include "mcal/bestinclass.hpp"
#include "mcal/learners.hpp"
#include "mcal/oracles.hpp"
#include "mcal/population.hpp"
#include "mcal/predictor.hpp"
#include "mcal/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAuditViolation = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitOracleRefusal = 3;
constexpr int kExitGuardTrip = 4;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class Manifest {
public:
    Manifest(std::string command, std::string config_text)
        : start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["config_hash"] = fnv1a_hex(config_text);
        j_["version"] = "1.0.0";
        j_["seeds"] = json::array();
        j_["inputs"] = json::object();
        j_["outputs"] = json::object();
    }

    void seed(std::uint64_t s) { j_["seeds"].push_back(s); }
    void input(const std::string& key, const std::string& path) { j_["inputs"][key] = path; }
    void output(const std::string& key, const std::string& path) { j_["outputs"][key] = path; }
    void note(const std::string& key, const json& value) { j_[key] = value; }

    void write(const fs::path& dir) {
        j_["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream out(dir / "manifest.json");
        out << j_.dump(2) << "\n";
    }

private:
    json j_;
    std::chrono::steady_clock::time_point start_;
};

struct Instance {
    mcal::Population population;
    mcal::GroundTruth truth;
    mcal::SubsetCollection collection;
};

Instance load_instance(const std::string& dir) {
    Instance inst;
    inst.population = mcal::load_population(dir + "/population.csv");
    inst.truth = mcal::load_truth(dir + "/truth.csv");
    inst.collection = mcal::load_collection(dir + "/collection.json", inst.population);
    if (inst.truth.size() != inst.population.size()) {
        throw std::runtime_error("truth/population size mismatch in " + dir);
    }
    return inst;
}

/// Default sample budget for sample-backed oracles, scaled per the
/// generalization bound with constant 50.
std::int64_t default_sample_size(int collection_size, double alpha, double lambda, double gamma,
                                 double xi) {
    const double denom = std::pow(alpha, 4) * std::pow(lambda, 1.5) * std::pow(gamma, 1.5);
    const double n =
        50.0 * std::log(static_cast<double>(collection_size) / (alpha * lambda * gamma * xi)) / denom;
    return static_cast<std::int64_t>(std::ceil(n));
}

int run_gen(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed) {
    const std::string config_text = read_file(config_path);
    const auto config = mcal::parse_generator_config(config_text);
    json cfg_json = json::parse(config_text);
    std::uint64_t use_seed;
    if (seed) {
        use_seed = *seed;
    } else if (cfg_json.contains("seed")) {
        use_seed = cfg_json.at("seed").get<std::uint64_t>();
    } else {
        throw std::runtime_error("gen requires a seed (--seed or config field)");
    }

    const auto inst = mcal::generate_synthetic(config, use_seed);
    fs::create_directories(out_dir);
    Manifest manifest("gen", config_text);
    manifest.seed(use_seed);
    manifest.input("config", config_path);

    mcal::store_population(inst.population, out_dir + "/population.csv");
    mcal::store_truth(inst.truth, out_dir + "/truth.csv");
    mcal::store_collection(inst.collection, out_dir + "/collection.json");
    manifest.output("population", out_dir + "/population.csv");
    manifest.output("truth", out_dir + "/truth.csv");
    manifest.output("collection", out_dir + "/collection.json");
    manifest.write(out_dir);
    return kExitOk;
}

int run_learn(const std::string& instance_dir, const std::string& config_path,
              const std::string& out_dir, std::optional<double> alpha, std::optional<double> lambda,
              std::optional<double> gamma, std::optional<std::uint64_t> seed,
              std::optional<std::string> oracle_flavor) {
    const std::string config_text = read_file(config_path);
    auto cfg = mcal::parse_learner_config(config_text);
    if (alpha) cfg.alpha = *alpha;
    if (lambda) cfg.lambda = *lambda;
    if (gamma) cfg.gamma = *gamma;
    if (seed) {
        cfg.seed = *seed;
        cfg.oracle.seed = *seed;
    }
    if (oracle_flavor) cfg.oracle.flavor = *oracle_flavor;

    const auto inst = load_instance(instance_dir);
    fs::create_directories(out_dir);
    Manifest manifest("learn", config_text);
    manifest.seed(cfg.seed);
    manifest.input("instance", instance_dir);
    manifest.input("config", config_path);

    std::optional<mcal::SampleStore> store;
    std::int64_t n_samples = 0;
    if (cfg.oracle.flavor != "exact") {
        n_samples = cfg.oracle.n_samples.value_or(default_sample_size(
            inst.collection.size(), cfg.alpha, cfg.lambda, cfg.gamma, cfg.oracle.xi));
        store.emplace(mcal::SampleStore::draw(inst.truth, n_samples, cfg.oracle.seed));
        manifest.note("n_samples", n_samples);
    }

    mcal::LearnTrace trace;
    if (cfg.algorithm == "multi_ae") {
        mcal::MultiAeParams params;
        params.alpha = cfg.alpha;
        params.gamma = cfg.gamma;
        params.tau = cfg.oracle.tolerance;
        params.max_rounds_factor = cfg.max_rounds_factor;
        std::unique_ptr<mcal::SqOracle> oracle;
        if (cfg.oracle.flavor == "exact") {
            const double tau = params.tau > 0.0 ? params.tau : cfg.alpha * cfg.gamma / 4.0;
            oracle = std::make_unique<mcal::ExactSqOracle>(inst.truth, tau, cfg.oracle.perturb,
                                                           cfg.oracle.seed);
        } else if (cfg.oracle.flavor == "empirical") {
            oracle = std::make_unique<mcal::EmpiricalSqOracle>(*store, cfg.oracle.confidence);
        } else {
            throw std::runtime_error("multi_ae supports exact and empirical oracles");
        }
        auto result = mcal::learn_multi_ae(inst.collection, inst.population, *oracle, params, &inst.truth);
        mcal::store_predictor(result.predictor, out_dir + "/predictor.csv");
        manifest.output("predictor", out_dir + "/predictor.csv");
        trace = std::move(result.trace);
    } else {
        mcal::MulticalParams params;
        params.alpha = cfg.alpha;
        params.lambda = cfg.lambda;
        params.gamma = cfg.gamma;
        params.max_rounds_factor = cfg.max_rounds_factor;
        std::unique_ptr<mcal::GcOracle> oracle;
        if (cfg.oracle.flavor == "exact") {
            oracle = std::make_unique<mcal::ExactGcOracle>(inst.truth, cfg.oracle.window_min,
                                                           cfg.oracle.gray_zone, cfg.oracle.perturb,
                                                           cfg.oracle.seed);
        } else if (cfg.oracle.flavor == "empirical") {
            oracle = std::make_unique<mcal::EmpiricalGcOracle>(*store, cfg.oracle.window_min,
                                                               cfg.oracle.gray_zone);
        } else {
            mcal::PrivacyBudget budget;
            budget.epsilon = cfg.oracle.epsilon;
            budget.delta = cfg.oracle.delta;
            budget.k_max = cfg.oracle.k_max;
            budget.m_max = cfg.oracle.m_max;
            oracle = std::make_unique<mcal::PrivateGcOracle>(*store, budget, cfg.oracle.xi,
                                                             cfg.oracle.seed, cfg.oracle.window_min,
                                                             cfg.oracle.noise_scale);
        }
        auto result =
            mcal::learn_multicalibrated(inst.collection, inst.population, *oracle, params, &inst.truth);
        mcal::store_predictor(result.predictor, out_dir + "/predictor.csv");
        mcal::store_predictor(result.pre_closing, out_dir + "/pre_closing.csv");
        mcal::store_program(result.program, out_dir + "/program.json");
        manifest.output("predictor", out_dir + "/predictor.csv");
        manifest.output("pre_closing", out_dir + "/pre_closing.csv");
        manifest.output("program", out_dir + "/program.json");
        trace = std::move(result.trace);
    }
    mcal::store_trace(trace, out_dir + "/trace.jsonl");
    manifest.output("trace", out_dir + "/trace.jsonl");
    const auto bound = mcal::bound_check(trace);
    manifest.note("updates", trace.updates);
    manifest.note("update_bound", bound.bound);
    manifest.note("within_bound", bound.within);
    manifest.write(out_dir);
    return kExitOk;
}

int run_audit(const std::string& predictor_path, const std::string& instance_dir, double alpha,
              double lambda, const std::string& mode, const std::string& out_path) {
    const auto inst = load_instance(instance_dir);
    const auto x = mcal::load_predictor(predictor_path);
    if (x.size() != inst.population.size()) throw std::runtime_error("predictor length mismatch");

    mcal::AuditReport report;
    if (mode == "al") {
        const mcal::DiscretizationGrid grid(lambda);
        report = mcal::check_al_multicalibration(x, inst.truth, inst.collection, inst.population,
                                                 alpha, grid);
    } else if (mode == "ae") {
        report = mcal::check_multi_ae(x, inst.truth, inst.collection, inst.population, alpha);
    } else {
        throw std::runtime_error("audit mode must be 'al' or 'ae'");
    }
    if (!out_path.empty()) {
        mcal::store_audit_report(report, out_path);
    } else {
        std::cout << "violations=" << report.violations.size()
                  << " squared_error=" << report.squared_error << "\n";
    }
    return report.clean() ? kExitOk : kExitAuditViolation;
}

int run_postprocess(const std::string& instance_dir, const std::string& family_dir,
                    const std::string& out_dir, double alpha, double lambda,
                    std::optional<std::uint64_t> seed) {
    const auto inst = load_instance(instance_dir);
    mcal::PredictorFamily family;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(family_dir)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) family.add(f.stem().string(), mcal::load_predictor(f.string()));
    if (family.size() == 0) throw std::runtime_error("family directory holds no predictor CSVs");

    fs::create_directories(out_dir);
    Manifest manifest("postprocess", instance_dir + "|" + family_dir);
    if (seed) manifest.seed(*seed);
    manifest.input("instance", instance_dir);
    manifest.input("family", family_dir);

    mcal::ExactGcOracle oracle(inst.truth, 0.0, mcal::GrayZonePolicy::Accept, false, seed.value_or(1));
    mcal::PostprocessParams params;
    params.alpha = alpha;
    params.lambda = lambda;
    auto result = mcal::postprocess(inst.collection, family, inst.population, oracle, params, &inst.truth);

    mcal::store_predictor(result.predictor, out_dir + "/predictor.csv");
    mcal::store_program(result.program, out_dir + "/program.json");
    mcal::store_trace(result.trace, out_dir + "/trace.jsonl");

    // Lemma verification against every family member, at the calibration
    // level the closing pass actually delivers (alpha + lambda).
    const mcal::DiscretizationGrid grid(lambda);
    json lemmas = json::array();
    int lemma_violations = 0;
    for (int i = 0; i < family.size(); ++i) {
        const auto lemma = mcal::verify_lemma_best(family.predictors[static_cast<std::size_t>(i)],
                                                   result.predictor, inst.truth, grid, alpha + lambda);
        lemma_violations += lemma.violations;
        lemmas.push_back({{"h", family.names[static_cast<std::size_t>(i)]},
                          {"violations", lemma.violations},
                          {"precondition_failures", lemma.precondition_failures},
                          {"global_holds", lemma.global_holds}});
    }
    mcal::store_postprocess_report(result.report, nullptr, out_dir + "/report.json");
    manifest.output("predictor", out_dir + "/predictor.csv");
    manifest.output("program", out_dir + "/program.json");
    manifest.output("trace", out_dir + "/trace.jsonl");
    manifest.output("report", out_dir + "/report.json");
    manifest.note("gap", result.report.gap);
    manifest.note("gap_bound", result.report.gap_bound);
    manifest.note("within_bound", result.report.within_bound);
    manifest.note("lemma", lemmas);
    manifest.write(out_dir);
    return result.report.within_bound && lemma_violations == 0 ? kExitOk : kExitAuditViolation;
}

int run_reduce(const std::string& instance_dir, const std::string& labels_path, double rho,
               double tau, double gamma, double alpha, const std::string& out_path) {
    const auto population = mcal::load_population(instance_dir + "/population.csv");
    const auto collection = mcal::load_collection(instance_dir + "/collection.json");
    const auto labels = mcal::load_labels(labels_path);
    if (labels.size() != population.size()) throw std::runtime_error("label length mismatch");

    mcal::WalFromMcParams params;
    params.contract = mcal::WALContract{rho, tau};
    params.gamma = gamma;
    params.alpha = alpha;
    const auto hypothesis = mcal::wal_from_multicalibration(collection, population, labels, params);
    mcal::store_hypothesis(hypothesis, out_path);

    const auto hv = hypothesis.evaluate_all(population);
    const double corr = mcal::correlation(hv, labels.values);
    std::cout << "correlation=" << corr << "\n";
    return kExitOk;
}

int run_report(const std::vector<std::string>& trace_paths, const std::string& out_path, bool curve) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    if (curve) {
        out << "trace,update_index,round,set,interval,v,size,delta,potential_before,potential_after\n";
        for (const auto& path : trace_paths) {
            const auto trace = mcal::load_trace(path);
            int idx = 0;
            for (const auto& r : trace.records) {
                out << path << "," << idx++ << "," << r.round << "," << r.set_index << ","
                    << r.interval << "," << r.center << "," << r.category_size << "," << r.delta
                    << "," << r.potential_before << "," << r.potential_after << "\n";
            }
        }
    } else {
        out << "trace,algorithm,alpha,lambda,gamma,n,updates,checks,queries,bound,within_bound,"
               "potential_initial,potential_final,wall_seconds\n";
        for (const auto& path : trace_paths) {
            const auto trace = mcal::load_trace(path);
            const auto bound = mcal::bound_check(trace);
            const double p0 = trace.records.empty() ? -1.0 : trace.records.front().potential_before;
            const double p1 = trace.records.empty() ? -1.0 : trace.records.back().potential_after;
            out << path << "," << trace.algorithm << "," << trace.alpha << "," << trace.lambda << ","
                << trace.gamma << "," << trace.population_size << "," << trace.updates << ","
                << trace.checks << "," << trace.queries << "," << bound.bound << ","
                << (bound.within ? 1 : 0) << "," << p0 << "," << p1 << "," << trace.wall_seconds
                << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multicalibrated prediction toolkit"};
    app.require_subcommand(1);

    std::string config_path, instance_dir, out_dir, predictor_path, family_dir, labels_path, out_path;
    std::string audit_mode = "al";
    std::string oracle_flavor;
    double alpha = 0.1, lambda = 0.1, gamma = 0.1, rho = 0.5, tau = 0.045;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha_opt, lambda_opt, gamma_opt;
    std::vector<std::string> trace_paths;
    bool curve = false;

    auto* gen = app.add_subcommand("gen", "generate a synthetic instance");
    gen->add_option("--config", config_path, "generator config JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed, "generator seed");

    auto* learn = app.add_subcommand("learn", "run a learner on an instance");
    learn->add_option("--instance", instance_dir, "instance directory")->required();
    learn->add_option("--config", config_path, "learner config JSON")->required();
    learn->add_option("--out", out_dir, "output directory")->required();
    learn->add_option("--alpha", alpha_opt, "override alpha");
    learn->add_option("--lambda", lambda_opt, "override lambda");
    learn->add_option("--gamma", gamma_opt, "override gamma");
    learn->add_option("--seed", seed, "override seed");
    learn->add_option("--oracle", oracle_flavor, "override oracle flavor")
        ->check(CLI::IsMember({"exact", "empirical", "private"}));

    auto* audit = app.add_subcommand("audit", "audit a predictor against ground truth");
    audit->add_option("--predictor", predictor_path, "predictor CSV")->required();
    audit->add_option("--instance", instance_dir, "instance directory")->required();
    audit->add_option("--alpha", alpha, "audit level")->required();
    audit->add_option("--lambda", lambda, "grid width for the category scan");
    audit->add_option("--mode", audit_mode, "al (multicalibration) or ae (expectation)");
    audit->add_option("--out", out_path, "report JSON path");

    auto* post = app.add_subcommand("postprocess", "calibrate against a predictor family");
    post->add_option("--instance", instance_dir, "instance directory")->required();
    post->add_option("--family", family_dir, "directory of candidate predictor CSVs")->required();
    post->add_option("--out", out_dir, "output directory")->required();
    post->add_option("--alpha", alpha, "calibration level");
    post->add_option("--lambda", lambda, "grid width");
    post->add_option("--seed", seed, "oracle seed");

    auto* reduce = app.add_subcommand("reduce", "answer a weak-agnostic-learning query");
    reduce->add_option("--instance", instance_dir, "instance directory")->required();
    reduce->add_option("--labels", labels_path, "labels CSV (id,y)")->required();
    reduce->add_option("--rho", rho, "promised correlation");
    reduce->add_option("--tau", tau, "required hypothesis correlation");
    reduce->add_option("--gamma", gamma, "density floor");
    reduce->add_option("--alpha", alpha, "calibration level for the inner run");
    reduce->add_option("--out", out_path, "hypothesis JSON path")->required();

    auto* report = app.add_subcommand("report", "summarize trace files as CSV");
    report->add_option("--out", out_path, "output CSV")->required();
    report->add_flag("--curve", curve, "emit one row per update instead of per trace");
    report->add_option("traces", trace_paths, "trace JSONL files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen(config_path, out_dir, seed);
        if (learn->parsed())
            return run_learn(instance_dir, config_path, out_dir, alpha_opt, lambda_opt, gamma_opt,
                             seed, oracle_flavor.empty() ? std::nullopt
                                                         : std::optional<std::string>(oracle_flavor));
        if (audit->parsed())
            return run_audit(predictor_path, instance_dir, alpha, lambda, audit_mode, out_path);
        if (post->parsed()) return run_postprocess(instance_dir, family_dir, out_dir, alpha, lambda, seed);
        if (reduce->parsed()) return run_reduce(instance_dir, labels_path, rho, tau, gamma, alpha, out_path);
        if (report->parsed()) return run_report(trace_paths, out_path, curve);
    } catch (const mcal::BudgetExhausted& e) {
        std::cerr << "oracle refusal: " << e.what() << "\n";
        return kExitOracleRefusal;
    } catch (const mcal::GuardTripped& e) {
        std::cerr << "guard trip: " << e.what() << "\n";
        return kExitGuardTrip;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    return kExitBadInput;
}
