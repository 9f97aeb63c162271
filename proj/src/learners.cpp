#include "mcal/learners.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mcal/auditor.hpp"

namespace mcal {

using nlohmann::json;

namespace {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Incremental ||x - p*||^2 tracker; recomputes only touched coordinates.
class Potential {
public:
    Potential(const DensePredictor& x, const GroundTruth* truth) : truth_(truth) {
        if (truth_) value_ = squared_error(x, *truth_);
    }

    bool active() const { return truth_ != nullptr; }
    double value() const { return value_; }

    double removed(const DensePredictor& x, const std::vector<int>& ids) const {
        double s = 0.0;
        for (int id : ids) {
            const double d = x.values[static_cast<std::size_t>(id)] - truth_->probs[static_cast<std::size_t>(id)];
            s += d * d;
        }
        return s;
    }

    void replace(double before_part, double after_part) { value_ += after_part - before_part; }

private:
    const GroundTruth* truth_;
    double value_ = -1.0;
};

std::vector<std::vector<int>> collect_member_lists(const SubsetCollection& collection,
                                                   const Population& pop, double gamma) {
    std::vector<std::vector<int>> lists;
    lists.reserve(static_cast<std::size_t>(collection.size()));
    const double floor = gamma * static_cast<double>(pop.size());
    for (const auto& pred : collection.predicates) {
        auto m = members(pred, pop);
        if (static_cast<double>(m.ids.size()) < floor) {
            throw std::invalid_argument("collection set " + pred.describe() +
                                        " is below the density floor gamma");
        }
        lists.push_back(std::move(m.ids));
    }
    return lists;
}

}  // namespace

BoundReport bound_check(const LearnTrace& trace) {
    BoundReport report;
    if (trace.algorithm == "multi_ae") {
        report.bound = 16.0 / (3.0 * trace.alpha * trace.alpha * trace.gamma);
    } else if (trace.algorithm == "multicalibrated") {
        report.bound = 16.0 / (trace.alpha * trace.alpha * trace.alpha * trace.lambda * trace.gamma);
    } else if (trace.algorithm == "via_wal") {
        report.bound = 10.0 / (trace.tau * trace.tau);
    } else {
        throw std::invalid_argument("unknown trace algorithm: " + trace.algorithm);
    }
    report.updates = trace.updates;
    report.within = static_cast<double>(trace.updates) <= report.bound;
    return report;
}

MultiAeResult learn_multi_ae(const SubsetCollection& collection, const Population& pop,
                             SqOracle& oracle, const MultiAeParams& params,
                             const GroundTruth* truth) {
    Stopwatch clock;
    const int n = pop.size();
    const double nd = static_cast<double>(n);
    double tau = params.tau;
    if (tau <= 0.0) tau = params.alpha * params.gamma / 4.0;
    if (tau > params.alpha * params.gamma / 4.0 + 1e-12) {
        throw std::invalid_argument("statistical-query tolerance must satisfy tau <= alpha*gamma/4");
    }

    const auto sets = collect_member_lists(collection, pop, params.gamma);

    MultiAeResult result;
    result.predictor = DensePredictor::constant(n, 0.5);
    auto& x = result.predictor;
    LearnTrace& trace = result.trace;
    trace.algorithm = "multi_ae";
    trace.alpha = params.alpha;
    trace.gamma = params.gamma;
    trace.tau = tau;
    trace.population_size = n;

    Potential potential(x, truth);
    const double guard = params.max_rounds_factor * 16.0 / (3.0 * params.alpha * params.alpha * params.gamma);

    for (int round = 0;; ++round) {
        bool updated = false;
        for (int s = 0; s < collection.size(); ++s) {
            const auto& ids = sets[static_cast<std::size_t>(s)];
            const double size = static_cast<double>(ids.size());
            ++trace.queries;
            const double estimate = oracle.query(ids).value;
            double x_sum = 0.0;
            for (int id : ids) x_sum += x.values[static_cast<std::size_t>(id)];
            const double delta_s = estimate - x_sum;
            if (std::abs(delta_s) <= params.alpha * size - tau * nd) {
                ++trace.checks;
                continue;
            }
            const double shift = delta_s / size;
            UpdateRecord rec;
            rec.round = round;
            rec.set_index = s;
            rec.category_size = static_cast<std::int64_t>(ids.size());
            rec.delta = shift;
            if (potential.active()) {
                rec.potential_before = potential.value();
                const double before_part = potential.removed(x, ids);
                apply_update_in_place(x, ids, shift);
                potential.replace(before_part, potential.removed(x, ids));
                rec.potential_after = potential.value();
            } else {
                apply_update_in_place(x, ids, shift);
            }
            trace.records.push_back(std::move(rec));
            ++trace.updates;
            updated = true;
            if (static_cast<double>(trace.updates) > guard) {
                throw GuardTripped("multi-AE update count exceeded " + std::to_string(guard) +
                                   "; the oracle is violating its tolerance contract");
            }
        }
        if (!updated) break;
    }
    trace.wall_seconds = clock.seconds();
    return result;
}

MulticalResult learn_multicalibrated(const SubsetCollection& collection, const Population& pop,
                                     GcOracle& oracle, const MulticalParams& params,
                                     const GroundTruth* truth) {
    Stopwatch clock;
    const int n = pop.size();
    const double nd = static_cast<double>(n);
    const int bits = params.precision_bits.value_or(precision_bits_for(params.alpha));
    const DiscretizationGrid grid(params.lambda);

    // the narrowest admissible query window must be answerable
    const double smallest_beta = params.alpha * params.lambda * params.gamma;
    if (oracle.min_window() > params.alpha * smallest_beta / 4.0) {
        throw std::invalid_argument("oracle minimum window too wide for these parameters");
    }

    const auto sets = collect_member_lists(collection, pop, params.gamma);

    MulticalResult result;
    result.program.lambda = params.lambda;
    result.program.precision_bits = bits;
    auto& x = result.predictor;
    x = DensePredictor::constant(n, quantize(0.5, bits));
    LearnTrace& trace = result.trace;
    trace.algorithm = "multicalibrated";
    trace.alpha = params.alpha;
    trace.lambda = params.lambda;
    trace.gamma = params.gamma;
    trace.population_size = n;

    Potential potential(x, truth);
    const double guard = params.max_rounds_factor * 16.0 /
                         (std::pow(params.alpha, 3) * params.lambda * params.gamma);

    std::vector<int> category;
    for (int round = 0;; ++round) {
        bool updated = false;
        for (int s = 0; s < collection.size(); ++s) {
            const auto& ids = sets[static_cast<std::size_t>(s)];
            const double set_floor = params.alpha * params.lambda * static_cast<double>(ids.size());
            for (int k = 0; k < grid.interval_count(); ++k) {
                // categories are re-derived from the current x at every visit:
                // earlier updates move members between intervals
                category.clear();
                double x_sum = 0.0;
                for (int id : ids) {
                    const double v = x.values[static_cast<std::size_t>(id)];
                    if (grid.interval_of(v) != k) continue;
                    category.push_back(id);
                    x_sum += v;
                }
                if (category.empty() || static_cast<double>(category.size()) < set_floor) continue;
                const double beta = static_cast<double>(category.size()) / nd;
                const double guess = quantize(x_sum / static_cast<double>(category.size()), bits);
                const double window = params.alpha * beta / 4.0;
                ++trace.queries;
                const GcResponse resp = oracle.query(category, clip01(guess), window);
                if (resp.accepted) {
                    ++trace.checks;
                    continue;
                }
                const double delta = quantize(resp.value, bits) - guess;
                UpdateRecord rec;
                rec.round = round;
                rec.set_index = s;
                rec.interval = k;
                rec.center = grid.center(k);
                rec.category_size = static_cast<std::int64_t>(category.size());
                rec.delta = delta;
                if (potential.active()) {
                    rec.potential_before = potential.value();
                    const double before_part = potential.removed(x, category);
                    apply_update_in_place(x, category, delta);
                    potential.replace(before_part, potential.removed(x, category));
                    rec.potential_after = potential.value();
                } else {
                    apply_update_in_place(x, category, delta);
                }
                trace.records.push_back(std::move(rec));
                result.program.steps.push_back(
                    UpdateStep{collection.predicates[static_cast<std::size_t>(s)], grid.center(k), delta});
                ++trace.updates;
                updated = true;
                if (static_cast<double>(trace.updates) > guard) {
                    throw GuardTripped("multicalibration update count exceeded " + std::to_string(guard) +
                                       "; the oracle is violating its window contract");
                }
            }
        }
        if (!updated) break;
    }

    result.pre_closing = x;

    // closing pass: each individual takes the mean prediction of its interval
    std::map<int, double> table;
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(grid.interval_count()));
    for (int id = 0; id < n; ++id) {
        buckets[static_cast<std::size_t>(grid.interval_of(x.values[static_cast<std::size_t>(id)]))].push_back(id);
    }
    for (int k = 0; k < grid.interval_count(); ++k) {
        const auto& bucket = buckets[static_cast<std::size_t>(k)];
        if (bucket.empty()) continue;
        double sum = 0.0;
        for (int id : bucket) sum += x.values[static_cast<std::size_t>(id)];
        const double mean = quantize(sum / static_cast<double>(bucket.size()), bits);
        table[k] = mean;
        for (int id : bucket) x.values[static_cast<std::size_t>(id)] = mean;
    }
    result.program.final_table = std::move(table);

    trace.wall_seconds = clock.seconds();
    return result;
}

// -- trace serialization ----------------------------------------------------------

void store_trace(const LearnTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& r : trace.records) {
        json j;
        j["round"] = r.round;
        j["set"] = r.set_index;
        if (r.interval >= 0) {
            j["interval"] = r.interval;
            j["v"] = r.center;
        }
        j["size"] = r.category_size;
        j["delta"] = r.delta;
        if (r.potential_before >= 0.0) {
            j["potential_before"] = r.potential_before;
            j["potential_after"] = r.potential_after;
        }
        j["kind"] = r.kind;
        out << j.dump() << "\n";
    }
    json totals;
    totals["totals"] = {{"algorithm", trace.algorithm}, {"alpha", trace.alpha},
                        {"lambda", trace.lambda},       {"gamma", trace.gamma},
                        {"tau", trace.tau},             {"n", trace.population_size},
                        {"updates", trace.updates},     {"checks", trace.checks},
                        {"queries", trace.queries},     {"wall_seconds", trace.wall_seconds}};
    out << totals.dump() << "\n";
}

LearnTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    LearnTrace trace;
    std::string line;
    bool saw_totals = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("malformed trace line in " + path + ": " + e.what());
        }
        if (j.contains("totals")) {
            const auto& t = j.at("totals");
            trace.algorithm = t.at("algorithm").get<std::string>();
            trace.alpha = t.at("alpha").get<double>();
            trace.lambda = t.at("lambda").get<double>();
            trace.gamma = t.at("gamma").get<double>();
            trace.tau = t.value("tau", 0.0);
            trace.population_size = t.at("n").get<int>();
            trace.updates = t.at("updates").get<std::int64_t>();
            trace.checks = t.at("checks").get<std::int64_t>();
            trace.queries = t.at("queries").get<std::int64_t>();
            trace.wall_seconds = t.at("wall_seconds").get<double>();
            saw_totals = true;
            continue;
        }
        UpdateRecord r;
        r.round = j.at("round").get<int>();
        r.set_index = j.at("set").get<int>();
        r.interval = j.value("interval", -1);
        r.center = j.value("v", 0.0);
        r.category_size = j.at("size").get<std::int64_t>();
        r.delta = j.at("delta").get<double>();
        r.potential_before = j.value("potential_before", -1.0);
        r.potential_after = j.value("potential_after", -1.0);
        r.kind = j.value("kind", "update");
        trace.records.push_back(std::move(r));
    }
    if (!saw_totals) throw std::runtime_error("trace file missing totals footer: " + path);
    return trace;
}

LearnerConfig parse_learner_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed learner config: ") + e.what());
    }
    LearnerConfig cfg;
    cfg.algorithm = j.value("algorithm", cfg.algorithm);
    if (cfg.algorithm != "multi_ae" && cfg.algorithm != "multicalibrated") {
        throw std::runtime_error("learner algorithm must be multi_ae or multicalibrated");
    }
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.max_rounds_factor = j.value("max_rounds_factor", cfg.max_rounds_factor);
    if (!j.contains("seed")) throw std::runtime_error("learner config must pin a seed");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("oracle")) cfg.oracle = parse_oracle_config(j.at("oracle").dump());
    return cfg;
}

}  // namespace mcal
