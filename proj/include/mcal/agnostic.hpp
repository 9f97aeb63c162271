#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mcal/learners.hpp"
#include "mcal/population.hpp"
#include "mcal/predictor.hpp"

namespace mcal {

/// A set predicate read as a boolean concept into {-1,+1}: members map to +1.
struct Concept {
    SetPredicate predicate;

    double evaluate(const Population& pop, int id) const {
        return evaluate_predicate(predicate, pop, id) ? 1.0 : -1.0;
    }
};

/// Real labels in [-1,1], one per individual.
struct LabelVector {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
    void validate() const;
};

/// Total hypothesis X -> [-1,1].
class Hypothesis {
public:
    struct Constant {
        double value;
    };
    struct ConceptKind {
        SetPredicate predicate;
    };
    struct SignOfPredictor {
        DensePredictor predictor;  // sign taken in label space: sgn(2x - 1), ties to +1
    };
    struct Tabulated {
        std::vector<double> values;
    };
    using Node = std::variant<Constant, ConceptKind, SignOfPredictor, Tabulated>;

    explicit Hypothesis(Node node) : node_(std::move(node)) {}
    static Hypothesis constant(double v) { return Hypothesis(Node{Constant{v}}); }
    static Hypothesis of_concept(SetPredicate p) { return Hypothesis(Node{ConceptKind{std::move(p)}}); }
    static Hypothesis sign_of(DensePredictor x) { return Hypothesis(Node{SignOfPredictor{std::move(x)}}); }
    static Hypothesis tabulated(std::vector<double> v) { return Hypothesis(Node{Tabulated{std::move(v)}}); }

    double evaluate(const Population& pop, int id) const;
    std::vector<double> evaluate_all(const Population& pop) const;
    const Node& node() const { return node_; }

private:
    Node node_;
};

/// Weak-agnostic-learning contract: on the promise that some concept
/// correlates above rho with the labels, a returned hypothesis must
/// correlate above tau.
struct WALContract {
    double rho = 0.0;
    double tau = 0.0;  // requires rho >= tau > 0
};

/// Uniform-distribution correlation (1/N) * sum a_i * b_i.
double correlation(std::span<const double> a, std::span<const double> b);

/// Label-space maps between predictions in [0,1] and labels in [-1,1];
/// they compose to the identity.
inline double to_label_space(double u) { return 2.0 * u - 1.0; }
inline double to_prediction_space(double y) { return (y + 1.0) / 2.0; }

/// Delta_i = (x_i - o_i)/2 on the interval around center index `interval`,
/// zero elsewhere. `reference` is the outcome bit vector (or p* itself when
/// sampling noise is being eliminated).
std::vector<double> build_delta_labels(const DensePredictor& x, std::span<const double> reference,
                                       const DiscretizationGrid& grid, int interval);

struct LabeledExample {
    int id = 0;
    double y = 0.0;  // label in [-1,1]
};

using WeakLearner =
    std::function<std::optional<Hypothesis>(std::span<const LabeledExample>, const WALContract&)>;

/// Reference weak learner: scans every concept in C plus the constants +-1
/// and returns the empirical-correlation maximizer when it beats tau.
WeakLearner make_exhaustive_weak_learner(const std::vector<Concept>& concepts, const Population& pop);

/// Direct evaluation helper for tests.
std::optional<Hypothesis> exhaustive_weak_learner(const std::vector<Concept>& concepts,
                                                  const Population& pop,
                                                  std::span<const LabeledExample> examples,
                                                  const WALContract& contract);

struct ViaWalParams {
    double alpha = 0.2;
    double lambda = 0.2;
    double gamma = 0.2;
    WALContract contract;          // requires rho <= alpha^2*lambda*gamma/2
    std::int64_t sample_size = 0;  // 0 selects the derived default
    double max_updates_factor = 10.0;
    double xi = 0.05;
};

/// Supplies one fresh batch of labeled outcome draws (id, value); exact-mode
/// sources label the whole population with p* itself.
using OutcomeSampler = std::function<std::vector<LabeledExample>(std::int64_t)>;

OutcomeSampler exact_label_source(const Population& pop, const GroundTruth& truth);
OutcomeSampler sampling_label_source(const Population& pop, const GroundTruth& truth, std::uint64_t seed);

struct ViaWalResult {
    DensePredictor predictor;
    LearnTrace trace;
};

/// Multicalibration via weak agnostic learning: per grid interval of the
/// current predictor, convert any calibration violation into Delta labels,
/// ask the weak learner (both label signs), and take the returned hypothesis
/// as a projected gradient step of size eta = tau/(2*beta_v) restricted to
/// the interval, where beta_v is the interval's own mass. A per-interval
/// additive offset restores observable tau/4-calibration first whenever the
/// sampled discrepancy exceeds it.
ViaWalResult learn_via_wal(const SubsetCollection& collection, const Population& pop,
                           const WeakLearner& learner, const OutcomeSampler& sampler,
                           const ViaWalParams& params,
                           const GroundTruth* truth_for_instrumentation = nullptr);

/// Runs a multicalibration learner against arbitrary benchmark values in
/// [0,1] (labels standing in for p*); injectable so the reduction can be
/// driven by any learner implementation.
using McRunner = std::function<DensePredictor(const SubsetCollection&, const Population&,
                                              const GroundTruth&, double alpha, double lambda,
                                              double gamma)>;

struct WalFromMcParams {
    WALContract contract;
    double gamma = 0.1;
    double alpha = 0.02;  // requires tau <= min(rho - 2*gamma, rho/4 - 4*alpha)
};

/// The converse reduction: answers a weak-agnostic-learning query with
/// either a constant hypothesis (small-support and biased-label cases) or
/// the sign of a predictor multicalibrated against the labels.
Hypothesis wal_from_multicalibration(const SubsetCollection& collection, const Population& pop,
                                     const LabelVector& y, const WalFromMcParams& params,
                                     const McRunner& runner = McRunner{});

// -- files ---------------------------------------------------------------------

void store_labels(const LabelVector& y, const std::string& path);
LabelVector load_labels(const std::string& path);

void store_hypothesis(const Hypothesis& h, const std::string& path);
Hypothesis load_hypothesis(const std::string& path);

}  // namespace mcal
