#include "mcal/oracles.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "mcal/predictor.hpp"

namespace mcal {

using nlohmann::json;

// -- SampleStore ----------------------------------------------------------------

SampleStore SampleStore::from_pairs(int population_size, const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(population_size), 0);
    std::vector<std::int64_t> ones(static_cast<std::size_t>(population_size), 0);
    for (const auto& [id, bit] : pairs) {
        if (id < 0 || id >= population_size) throw std::out_of_range("sample id out of range");
        if (bit != 0 && bit != 1) throw std::invalid_argument("sample outcome must be 0 or 1");
        ++counts[static_cast<std::size_t>(id)];
        ones[static_cast<std::size_t>(id)] += bit;
    }
    return SampleStore(std::move(counts), std::move(ones), static_cast<std::int64_t>(pairs.size()));
}

SampleStore SampleStore::draw(const GroundTruth& truth, std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample count must be at least 1");
    truth.validate();
    const int nn = truth.size();
    std::vector<std::int64_t> counts(static_cast<std::size_t>(nn), 0);
    std::vector<std::int64_t> ones(static_cast<std::size_t>(nn), 0);
    Rng rng(seed);
    // multinomial counts via the conditional-binomial chain
    std::int64_t remaining = n;
    for (int i = 0; i < nn && remaining > 0; ++i) {
        const double p = 1.0 / static_cast<double>(nn - i);
        const std::int64_t c = (i + 1 == nn) ? remaining : rng.binomial(remaining, p);
        counts[static_cast<std::size_t>(i)] = c;
        ones[static_cast<std::size_t>(i)] = rng.binomial(c, truth.probs[static_cast<std::size_t>(i)]);
        remaining -= c;
    }
    return SampleStore(std::move(counts), std::move(ones), n);
}

std::int64_t SampleStore::hits(std::span<const int> set) const {
    std::int64_t h = 0;
    for (int id : set) h += counts_[static_cast<std::size_t>(id)];
    return h;
}

std::int64_t SampleStore::ones(std::span<const int> set) const {
    std::int64_t o = 0;
    for (int id : set) o += ones_[static_cast<std::size_t>(id)];
    return o;
}

double SampleStore::inflated_estimate(std::span<const int> set) const {
    const std::int64_t h = hits(set);
    if (h == 0) throw std::runtime_error("no samples intersect the queried set");
    return static_cast<double>(set.size()) * static_cast<double>(ones(set)) / static_cast<double>(h);
}

// -- statistical queries ----------------------------------------------------------

ExactSqOracle::ExactSqOracle(const GroundTruth& truth, double tau, bool perturb, std::uint64_t seed)
    : truth_(truth), tau_(tau), perturb_(perturb), rng_(seed) {
    if (!(tau > 0.0)) throw std::invalid_argument("statistical-query tolerance must be positive");
}

SqAnswer ExactSqOracle::query(std::span<const int> set) {
    double sum = 0.0;
    for (int id : set) sum += truth_.probs[static_cast<std::size_t>(id)];
    if (perturb_) {
        const double bound = tau_ * static_cast<double>(truth_.size());
        sum += (2.0 * rng_.next_unit() - 1.0) * bound;
    }
    return SqAnswer{sum, tau_ * static_cast<double>(truth_.size())};
}

EmpiricalSqOracle::EmpiricalSqOracle(const SampleStore& store, double confidence)
    : store_(store), confidence_(confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must lie in (0,1)");
}

SqAnswer EmpiricalSqOracle::query(std::span<const int> set) {
    const std::int64_t h = store_.hits(set);
    if (h == 0) throw std::runtime_error("no samples intersect the queried set");
    const double mean = static_cast<double>(store_.ones(set)) / static_cast<double>(h);
    // Hoeffding both-sided bound on the mean at the declared confidence,
    // scaled back to an absolute bound on the sum over S
    const double mean_bound = std::sqrt(std::log(2.0 / confidence_) / (2.0 * static_cast<double>(h)));
    return SqAnswer{static_cast<double>(set.size()) * mean,
                    static_cast<double>(set.size()) * mean_bound};
}

double EmpiricalSqOracle::tolerance() const { return 0.0; }  // achieved bound is per-query

// -- guess-and-check ---------------------------------------------------------------

namespace {

/// The definitional three-way decision given the flavor's reference sum.
GcResponse gc_decide(double ref_sum, std::size_t set_size, double guess, double window, double n,
                     GrayZonePolicy gray, double answer_value) {
    const double dev = std::abs(ref_sum - static_cast<double>(set_size) * guess);
    if (dev < 2.0 * window * n) return GcResponse::check();
    if (dev <= 4.0 * window * n && gray == GrayZonePolicy::Accept) return GcResponse::check();
    return GcResponse::answer(clip01(answer_value));
}

void check_window(double window, double min_window) {
    if (window < min_window) {
        throw std::invalid_argument("query window below the oracle's declared minimum");
    }
    if (!(window > 0.0)) throw std::invalid_argument("query window must be positive");
}

}  // namespace

ExactGcOracle::ExactGcOracle(const GroundTruth& truth, double min_window, GrayZonePolicy gray,
                             bool perturb, std::uint64_t seed)
    : truth_(truth), min_window_(min_window), gray_(gray), perturb_(perturb), rng_(seed) {}

GcResponse ExactGcOracle::query(std::span<const int> set, double guess, double window) {
    check_window(window, min_window_);
    const double n = static_cast<double>(truth_.size());
    double p_s = 0.0;
    for (int id : set) p_s += truth_.probs[static_cast<std::size_t>(id)];
    double r = set.empty() ? 0.0 : p_s / static_cast<double>(set.size());
    if (perturb_ && !set.empty()) {
        // any r with |r*|S| - p_S| <= omega*N is a valid answer
        r += (2.0 * rng_.next_unit() - 1.0) * window * n / static_cast<double>(set.size());
    }
    return gc_decide(p_s, set.size(), guess, window, n, gray_, r);
}

EmpiricalGcOracle::EmpiricalGcOracle(const SampleStore& store, double min_window, GrayZonePolicy gray)
    : store_(store), min_window_(min_window), gray_(gray) {}

GcResponse EmpiricalGcOracle::query(std::span<const int> set, double guess, double window) {
    check_window(window, min_window_);
    const double n = static_cast<double>(store_.population_size());
    const double p_hat = store_.inflated_estimate(set);
    return gc_decide(p_hat, set.size(), guess, window, n, gray_, p_hat / static_cast<double>(set.size()));
}

PrivateGcOracle::PrivateGcOracle(const SampleStore& store, PrivacyBudget budget, double xi,
                                 std::uint64_t seed, double min_window,
                                 std::optional<double> noise_scale_override)
    : store_(store),
      budget_(budget),
      xi_(xi),
      min_window_(min_window),
      noise_scale_override_(noise_scale_override),
      rng_(seed) {
    if (!(budget_.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (budget_.m_max < 0 || budget_.k_max < 0) throw std::invalid_argument("budget caps must be nonnegative");
}

GcResponse PrivateGcOracle::query(std::span<const int> set, double guess, double window) {
    check_window(window, min_window_);
    if (budget_.queries_asked >= budget_.k_max) {
        throw BudgetExhausted("query budget k_max exhausted");
    }
    if (budget_.answers_released >= budget_.m_max) {
        throw BudgetExhausted("answer budget m_max exhausted");
    }
    ++budget_.queries_asked;

    const double n = static_cast<double>(store_.population_size());
    const std::int64_t h = store_.hits(set);
    if (h == 0) throw std::runtime_error("no samples intersect the queried set");
    const double p_hat = store_.inflated_estimate(set);
    const double dev = std::abs(p_hat - static_cast<double>(set.size()) * guess);

    const double sensitivity = static_cast<double>(set.size()) / static_cast<double>(h);
    double b_threshold, b_release;
    if (noise_scale_override_) {
        b_threshold = *noise_scale_override_;
        b_release = set.empty() ? 0.0 : *noise_scale_override_ / static_cast<double>(set.size());
    } else {
        b_threshold = 2.0 * sensitivity * static_cast<double>(budget_.m_max) / budget_.epsilon;
        b_release = 2.0 * sensitivity * static_cast<double>(budget_.m_max) /
                    (budget_.epsilon * static_cast<double>(set.size()));
    }

    const double threshold = 3.0 * window * n + (b_threshold > 0.0 ? rng_.laplace(b_threshold) : 0.0);
    if (dev < threshold) return GcResponse::check();

    ++budget_.answers_released;
    double r = p_hat / static_cast<double>(set.size());
    if (b_release > 0.0) r += rng_.laplace(b_release);
    return GcResponse::answer(clip01(r));
}

// -- configuration ------------------------------------------------------------------

OracleConfig parse_oracle_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed oracle config: ") + e.what());
    }
    OracleConfig cfg;
    cfg.flavor = j.value("flavor", cfg.flavor);
    if (cfg.flavor != "exact" && cfg.flavor != "empirical" && cfg.flavor != "private") {
        throw std::runtime_error("oracle flavor must be exact, empirical, or private");
    }
    cfg.tolerance = j.value("tolerance", cfg.tolerance);
    cfg.window_min = j.value("window_min", cfg.window_min);
    if (j.contains("gray_zone")) {
        const std::string g = j.at("gray_zone").get<std::string>();
        if (g == "accept") {
            cfg.gray_zone = GrayZonePolicy::Accept;
        } else if (g == "answer") {
            cfg.gray_zone = GrayZonePolicy::Answer;
        } else {
            throw std::runtime_error("gray_zone must be 'accept' or 'answer'");
        }
    }
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.delta = j.value("delta", cfg.delta);
    cfg.k_max = j.value("k_max", cfg.k_max);
    cfg.m_max = j.value("m_max", cfg.m_max);
    cfg.xi = j.value("xi", cfg.xi);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<std::int64_t>();
    cfg.perturb = j.value("perturb", cfg.perturb);
    cfg.confidence = j.value("confidence", cfg.confidence);
    if (j.contains("noise_scale")) cfg.noise_scale = j.at("noise_scale").get<double>();
    return cfg;
}

std::string oracle_config_to_json(const OracleConfig& cfg) {
    json j;
    j["flavor"] = cfg.flavor;
    j["tolerance"] = cfg.tolerance;
    j["window_min"] = cfg.window_min;
    j["gray_zone"] = cfg.gray_zone == GrayZonePolicy::Accept ? "accept" : "answer";
    j["epsilon"] = cfg.epsilon;
    j["delta"] = cfg.delta;
    j["k_max"] = cfg.k_max;
    j["m_max"] = cfg.m_max;
    j["xi"] = cfg.xi;
    j["seed"] = cfg.seed;
    if (cfg.n_samples) j["n_samples"] = *cfg.n_samples;
    j["perturb"] = cfg.perturb;
    j["confidence"] = cfg.confidence;
    if (cfg.noise_scale) j["noise_scale"] = *cfg.noise_scale;
    return j.dump(2);
}

}  // namespace mcal
