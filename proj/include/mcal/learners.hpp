#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcal/oracles.hpp"
#include "mcal/population.hpp"
#include "mcal/predictor.hpp"

namespace mcal {

/// One accepted update (or calibration side-step) in a learner run.
struct UpdateRecord {
    int round = 0;              // sweep index
    int set_index = -1;
    int interval = -1;          // grid interval, -1 for whole-set updates
    double center = 0.0;
    std::int64_t category_size = 0;
    double delta = 0.0;
    double potential_before = -1.0;  // ||x - p*||^2; negative when truth is unknown
    double potential_after = -1.0;
    std::string kind = "update";
};

struct LearnTrace {
    std::string algorithm;  // "multi_ae", "multicalibrated", "via_wal"
    double alpha = 0.0;
    double lambda = 0.0;
    double gamma = 0.0;
    double tau = 0.0;  // the WAL correlation bound for via_wal, SQ tolerance for multi_ae
    int population_size = 0;
    std::vector<UpdateRecord> records;
    std::int64_t updates = 0;   // non-check responses acted on
    std::int64_t checks = 0;    // check-mark responses
    std::int64_t queries = 0;   // oracle queries issued
    double wall_seconds = 0.0;

    bool has_potentials() const { return !records.empty() && records.front().potential_before >= 0.0; }
};

struct BoundReport {
    double bound = 0.0;
    std::int64_t updates = 0;
    bool within = false;
};

/// Theoretical non-check update caps: 16/(3*alpha^2*gamma) for the AE
/// learner, 16/(alpha^3*lambda*gamma) for the multicalibration learner,
/// 10/tau^2 for the reduction-driven learner.
BoundReport bound_check(const LearnTrace& trace);

class GuardTripped : public std::runtime_error {
public:
    explicit GuardTripped(const std::string& what) : std::runtime_error(what) {}
};

struct MultiAeParams {
    double alpha = 0.1;
    double gamma = 0.1;
    double tau = 0.0;  // must be <= alpha*gamma/4; 0 selects exactly that default
    double max_rounds_factor = 10.0;
};

struct MultiAeResult {
    DensePredictor predictor;
    LearnTrace trace;
};

/// Iterative statistical-query learner: sweep C, and whenever the queried
/// set total deviates from the running sum by more than alpha*|S| - tau*N,
/// shift the whole set by the relative deviation (projected). Stops on the
/// first sweep with no update.
MultiAeResult learn_multi_ae(const SubsetCollection& collection, const Population& pop,
                             SqOracle& oracle, const MultiAeParams& params,
                             const GroundTruth* truth_for_instrumentation = nullptr);

struct MulticalParams {
    double alpha = 0.1;
    double lambda = 0.1;
    double gamma = 0.1;
    double max_rounds_factor = 10.0;
    std::optional<int> precision_bits;  // default max(ceil(log2(1/alpha)), 20)
};

struct MulticalResult {
    DensePredictor predictor;        // after the closing interval-averaging pass
    DensePredictor pre_closing;      // the raw iterate the (alpha,lambda) audit applies to
    UpdateProgram program;
    LearnTrace trace;
};

/// Guess-and-check learner over categories S_v = S ∩ {i : x_i in λ(v)}.
/// Every value response r shifts the category by r - mean(x over S_v),
/// projected; the closing pass replaces each value by its interval mean and
/// is recorded in the program's final table. All arithmetic is quantized to
/// the program's precision so the emitted program replays the dense output
/// exactly.
MulticalResult learn_multicalibrated(const SubsetCollection& collection, const Population& pop,
                                     GcOracle& oracle, const MulticalParams& params,
                                     const GroundTruth* truth_for_instrumentation = nullptr);

// -- trace / config files -----------------------------------------------------

/// JSON-lines: one record per update plus a totals footer.
void store_trace(const LearnTrace& trace, const std::string& path);
LearnTrace load_trace(const std::string& path);

struct LearnerConfig {
    std::string algorithm = "multicalibrated";  // or "multi_ae"
    double alpha = 0.1;
    double lambda = 0.1;
    double gamma = 0.1;
    double max_rounds_factor = 10.0;
    std::uint64_t seed = 1;
    OracleConfig oracle;
};

LearnerConfig parse_learner_config(const std::string& json_text);

}  // namespace mcal
