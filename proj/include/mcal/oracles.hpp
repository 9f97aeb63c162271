#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcal/population.hpp"
#include "mcal/random.hpp"

namespace mcal {

struct SqAnswer {
    double value = 0.0;      // estimate of p_S = sum over S of the reference quantity
    double tolerance = 0.0;  // guaranteed (exact) or achieved-at-confidence (empirical) bound, as tau*N
};

struct GcResponse {
    bool accepted = false;  // the check mark
    double value = 0.0;     // meaningful only when !accepted; lies in [0,1]

    static GcResponse check() { return GcResponse{true, 0.0}; }
    static GcResponse answer(double r) { return GcResponse{false, r}; }
};

/// What to do when the deviation falls in the definitional gray zone
/// [2*omega*N, 4*omega*N], where either response is permitted.
enum class GrayZonePolicy { Accept, Answer };

/// Immutable labeled-sample aggregate. Only per-set sums of draw counts and
/// positive outcomes are ever consumed downstream, so the store keeps those
/// per-individual tallies instead of the raw pair list; this is an exact
/// sufficient statistic for every estimator here and keeps criterion-scale
/// stores (hundreds of millions of draws) in O(N) memory.
class SampleStore {
public:
    static SampleStore from_pairs(int population_size, const std::vector<std::pair<int, int>>& pairs);

    /// Distributionally identical to aggregating n independent uniform
    /// labeled draws: per-id counts come from the exact multinomial (a chain
    /// of conditional binomials), per-id positives from Binomial(count, p*).
    static SampleStore draw(const GroundTruth& truth, std::int64_t n, std::uint64_t seed);

    int population_size() const { return static_cast<int>(counts_.size()); }
    std::int64_t total_draws() const { return total_; }

    std::int64_t hits(std::span<const int> set) const;  // |S ∩ X| counted with multiplicity
    std::int64_t ones(std::span<const int> set) const;  // sum of outcomes over those hits

    /// The inflated empirical estimate p̂_S(X) = (|S|/|S∩X|) * sum of outcomes.
    double inflated_estimate(std::span<const int> set) const;

private:
    SampleStore(std::vector<std::int64_t> counts, std::vector<std::int64_t> ones, std::int64_t total)
        : counts_(std::move(counts)), ones_(std::move(ones)), total_(total) {}

    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> ones_;
    std::int64_t total_ = 0;
};

/// Query/answer caps with usage counters for the private oracle. The
/// counters never exceed the caps; once a cap is hit further queries are
/// refused rather than silently degraded.
struct PrivacyBudget {
    double epsilon = 1.0;
    double delta = 1e-6;
    std::int64_t k_max = 0;  // total queries
    std::int64_t m_max = 0;  // non-check answers
    std::int64_t queries_asked = 0;
    std::int64_t answers_released = 0;
};

class BudgetExhausted : public std::runtime_error {
public:
    explicit BudgetExhausted(const std::string& what) : std::runtime_error(what) {}
};

// -- statistical queries ------------------------------------------------------

class SqOracle {
public:
    virtual ~SqOracle() = default;
    virtual SqAnswer query(std::span<const int> set) = 0;
    virtual double tolerance() const = 0;
};

/// Answers from p* directly. With perturbation enabled the answer is shifted
/// by a seeded offset bounded by tau*N (an adversarial-but-valid oracle);
/// default is the exact sum.
class ExactSqOracle : public SqOracle {
public:
    ExactSqOracle(const GroundTruth& truth, double tau, bool perturb = false, std::uint64_t seed = 0);
    SqAnswer query(std::span<const int> set) override;
    double tolerance() const override { return tau_; }

private:
    const GroundTruth& truth_;
    double tau_;
    bool perturb_;
    Rng rng_;
};

/// Answers |S| * (mean outcome over S ∩ X); the tolerance field reports the
/// Hoeffding bound achieved at the declared confidence.
class EmpiricalSqOracle : public SqOracle {
public:
    EmpiricalSqOracle(const SampleStore& store, double confidence = 0.05);
    SqAnswer query(std::span<const int> set) override;
    double tolerance() const override;

private:
    const SampleStore& store_;
    double confidence_;
};

// -- guess-and-check ----------------------------------------------------------

class GcOracle {
public:
    virtual ~GcOracle() = default;
    /// guess in [0,1]; window must be >= min_window().
    virtual GcResponse query(std::span<const int> set, double guess, double window) = 0;
    virtual double min_window() const = 0;
};

class ExactGcOracle : public GcOracle {
public:
    ExactGcOracle(const GroundTruth& truth, double min_window = 0.0,
                  GrayZonePolicy gray = GrayZonePolicy::Accept, bool perturb = false,
                  std::uint64_t seed = 0);
    GcResponse query(std::span<const int> set, double guess, double window) override;
    double min_window() const override { return min_window_; }

private:
    const GroundTruth& truth_;
    double min_window_;
    GrayZonePolicy gray_;
    bool perturb_;
    Rng rng_;
};

class EmpiricalGcOracle : public GcOracle {
public:
    EmpiricalGcOracle(const SampleStore& store, double min_window = 0.0,
                      GrayZonePolicy gray = GrayZonePolicy::Accept);
    GcResponse query(std::span<const int> set, double guess, double window) override;
    double min_window() const override { return min_window_; }

private:
    const SampleStore& store_;
    double min_window_;
    GrayZonePolicy gray_;
};

/// Sparse-vector style private oracle: the deviation |p̂_S(X) - |S|v| is
/// compared against the noisy threshold 3*omega*N + Lap(b_t); checks are
/// free, answers release p̂_S(X)/|S| + Lap(b_r) clipped to [0,1] and consume
/// one unit of the answer budget.
///
/// Noise scales follow the standard above-threshold composition over m_max
/// releases with per-query sensitivity d = |S|/|S∩X| (one flipped outcome
/// moves p̂_S(X) by exactly d):
///     b_t = 2 * d * m_max / epsilon          (threshold comparisons)
///     b_r = 2 * d * m_max / (epsilon * |S|)  (released ratio)
/// Per-query accuracy: P(|Lap(b)| > t) = exp(-t/b), so the responses behave
/// as a window-2*omega oracle (checks only when deviation < 4*omega*N,
/// answers 2*omega*N-accurate) with probability >= 1 - xi per query whenever
/// b_t <= omega*N/ln(4/xi) and b_r*|S| <= 2*omega*N/ln(4/xi), i.e. when the
/// sample is large enough for the budget.
class PrivateGcOracle : public GcOracle {
public:
    PrivateGcOracle(const SampleStore& store, PrivacyBudget budget, double xi, std::uint64_t seed,
                    double min_window = 0.0, std::optional<double> noise_scale_override = std::nullopt);

    GcResponse query(std::span<const int> set, double guess, double window) override;
    double min_window() const override { return min_window_; }
    const PrivacyBudget& budget() const { return budget_; }

private:
    const SampleStore& store_;
    PrivacyBudget budget_;
    double xi_;
    double min_window_;
    std::optional<double> noise_scale_override_;  // 0 disables noise (testing mode)
    Rng rng_;
};

// -- configuration ------------------------------------------------------------

/// Parsed form of the oracle config JSON:
/// {"flavor":"exact"|"empirical"|"private", "tolerance":t, "window_min":w,
///  "gray_zone":"accept"|"answer", "epsilon":e, "delta":d, "k_max":k,
///  "m_max":m, "xi":x, "seed":s, "n_samples":n, "perturb":b, "confidence":c,
///  "noise_scale":z}
struct OracleConfig {
    std::string flavor = "exact";
    double tolerance = 0.0;
    double window_min = 0.0;
    GrayZonePolicy gray_zone = GrayZonePolicy::Accept;
    double epsilon = 1.0;
    double delta = 1e-6;
    std::int64_t k_max = 1'000'000;
    std::int64_t m_max = 10'000;
    double xi = 0.05;
    std::uint64_t seed = 1;
    std::optional<std::int64_t> n_samples;  // empirical/private; defaulted by the caller if absent
    bool perturb = false;
    double confidence = 0.05;
    std::optional<double> noise_scale;
};

OracleConfig parse_oracle_config(const std::string& json_text);
std::string oracle_config_to_json(const OracleConfig& cfg);

}  // namespace mcal
