#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mcal {

/// Attribute kinds for the fixed per-population feature schema. Boolean
/// attributes are stored as 0/1 reals so that conjunctions and threshold
/// stumps share one representation.
enum class AttrKind { Boolean, Real };

struct FeatureVector {
    std::vector<double> values;
};

/// The universe of N individuals. Ids are dense integers 0..N-1 and each
/// individual carries one fixed-width feature row.
class Population {
public:
    Population() = default;
    Population(std::vector<AttrKind> schema, std::vector<std::vector<double>> rows);

    int size() const { return static_cast<int>(rows_.size()); }
    int feature_dim() const { return static_cast<int>(schema_.size()); }
    const std::vector<AttrKind>& schema() const { return schema_; }
    const std::vector<double>& features(int id) const { return rows_[static_cast<std::size_t>(id)]; }
    double attribute(int id, int attr) const { return rows_[static_cast<std::size_t>(id)][static_cast<std::size_t>(attr)]; }

private:
    std::vector<AttrKind> schema_;
    std::vector<std::vector<double>> rows_;
};

/// True Bernoulli parameter per individual; the hidden benchmark the
/// learners are measured against.
struct GroundTruth {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
    void validate() const;  // throws if any entry leaves [0,1]
};

/// Realized 0/1 outcomes together with the seed that produced them.
struct OutcomeVector {
    std::vector<std::uint8_t> bits;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(bits.size()); }
};

/// Membership predicates over individuals. Evaluation is pure; every kind
/// is decidable from the feature row (or the id, for Explicit).
struct ConjunctionPredicate {
    // pairs of (attribute index, required 0/1 literal); empty list is the
    // vacuous conjunction and matches everything
    std::vector<std::pair<int, int>> literals;
};

enum class StumpDirection { Ge, Lt };

struct StumpPredicate {
    int attr = 0;
    double threshold = 0.0;
    StumpDirection direction = StumpDirection::Ge;
};

struct ExplicitPredicate {
    std::vector<int> ids;  // kept sorted ascending
};

struct AllPredicate {};

class SetPredicate {
public:
    using Node = std::variant<ConjunctionPredicate, StumpPredicate, ExplicitPredicate, AllPredicate>;

    SetPredicate() : node_(AllPredicate{}) {}
    explicit SetPredicate(Node node);

    static SetPredicate conjunction(std::vector<std::pair<int, int>> literals);
    static SetPredicate stump(int attr, double threshold, StumpDirection dir);
    static SetPredicate explicit_ids(std::vector<int> ids);
    static SetPredicate all();

    const Node& node() const { return node_; }
    std::string describe() const;

private:
    Node node_;
};

/// Protected collection C with its declared density floor gamma.
struct SubsetCollection {
    std::vector<SetPredicate> predicates;
    double gamma = 0.0;

    int size() const { return static_cast<int>(predicates.size()); }

    /// Throws if any member set has |S| < gamma * N against `pop`.
    void validate_density(const Population& pop) const;
};

struct Members {
    std::vector<int> ids;  // sorted ascending
    double density = 0.0;
};

bool evaluate_predicate(const SetPredicate& pred, const Population& pop, int id);
Members members(const SetPredicate& pred, const Population& pop);

/// Independent Bernoulli draw per individual; pure function of (truth, seed).
OutcomeVector sample_outcomes(const GroundTruth& truth, std::uint64_t seed);

/// n uniform-with-replacement ids, each labeled by a fresh Bernoulli draw.
std::vector<std::pair<int, int>> draw_labeled_samples(const Population& pop, const GroundTruth& truth,
                                                      std::int64_t n, std::uint64_t seed);

// -- file formats -----------------------------------------------------------
// population: CSV `id,f0,f1,...` (booleans as 0/1)
// truth:      CSV `id,p`, nine fractional digits
// outcomes:   CSV `id,o`
// collection: JSON {"gamma": g, "sets": [...]}

void store_population(const Population& pop, const std::string& path);
Population load_population(const std::string& path);

void store_truth(const GroundTruth& truth, const std::string& path);
GroundTruth load_truth(const std::string& path);

void store_outcomes(const OutcomeVector& o, const std::string& path);
OutcomeVector load_outcomes(const std::string& path);

void store_collection(const SubsetCollection& c, const std::string& path);
SubsetCollection load_collection(const std::string& path);
/// Load plus the density-floor check against the bound population.
SubsetCollection load_collection(const std::string& path, const Population& pop);

std::string predicate_to_json(const SetPredicate& pred);
SetPredicate predicate_from_json(const std::string& json_text);

}  // namespace mcal
