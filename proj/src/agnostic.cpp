#include "mcal/agnostic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mcal/auditor.hpp"
#include "mcal/oracles.hpp"
#include "mcal/random.hpp"

namespace mcal {

using nlohmann::json;

void LabelVector::validate() const {
    for (double v : values) {
        if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("label outside [-1,1]");
    }
}

double Hypothesis::evaluate(const Population& pop, int id) const {
    return std::visit(
        [&](const auto& node) -> double {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Constant>) {
                return node.value;
            } else if constexpr (std::is_same_v<T, ConceptKind>) {
                return evaluate_predicate(node.predicate, pop, id) ? 1.0 : -1.0;
            } else if constexpr (std::is_same_v<T, SignOfPredictor>) {
                const double y = to_label_space(node.predictor.values[static_cast<std::size_t>(id)]);
                return y < 0.0 ? -1.0 : 1.0;
            } else {
                return node.values[static_cast<std::size_t>(id)];
            }
        },
        node_);
}

std::vector<double> Hypothesis::evaluate_all(const Population& pop) const {
    std::vector<double> out(static_cast<std::size_t>(pop.size()));
    for (int id = 0; id < pop.size(); ++id) out[static_cast<std::size_t>(id)] = evaluate(pop, id);
    return out;
}

double correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("correlation: length mismatch");
    if (a.empty()) throw std::invalid_argument("correlation over empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum / static_cast<double>(a.size());
}

std::vector<double> build_delta_labels(const DensePredictor& x, std::span<const double> reference,
                                       const DiscretizationGrid& grid, int interval) {
    if (static_cast<std::size_t>(x.size()) != reference.size()) {
        throw std::invalid_argument("build_delta_labels: length mismatch");
    }
    std::vector<double> delta(reference.size(), 0.0);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (grid.interval_of(x.values[i]) != interval) continue;
        delta[i] = (x.values[i] - reference[i]) / 2.0;
    }
    return delta;
}

std::optional<Hypothesis> exhaustive_weak_learner(const std::vector<Concept>& concepts,
                                                  const Population& pop,
                                                  std::span<const LabeledExample> examples,
                                                  const WALContract& contract) {
    if (!(contract.rho >= contract.tau && contract.tau > 0.0)) {
        throw std::invalid_argument("weak learner contract requires rho >= tau > 0");
    }
    if (examples.empty()) return std::nullopt;
    const double n = static_cast<double>(examples.size());

    double best = -2.0;
    std::optional<Hypothesis> best_h;

    const auto consider = [&](double corr, auto make) {
        if (corr > best) {
            best = corr;
            best_h = make();
        }
    };

    double label_sum = 0.0;
    for (const auto& ex : examples) label_sum += ex.y;
    consider(label_sum / n, [] { return Hypothesis::constant(1.0); });
    consider(-label_sum / n, [] { return Hypothesis::constant(-1.0); });

    for (const auto& c : concepts) {
        double sum = 0.0;
        for (const auto& ex : examples) sum += c.evaluate(pop, ex.id) * ex.y;
        const SetPredicate& pred = c.predicate;
        consider(sum / n, [&] { return Hypothesis::of_concept(pred); });
    }
    if (best > contract.tau) return best_h;
    return std::nullopt;
}

WeakLearner make_exhaustive_weak_learner(const std::vector<Concept>& concepts, const Population& pop) {
    return [&concepts, &pop](std::span<const LabeledExample> examples, const WALContract& contract) {
        return exhaustive_weak_learner(concepts, pop, examples, contract);
    };
}

OutcomeSampler exact_label_source(const Population& pop, const GroundTruth& truth) {
    return [&pop, &truth](std::int64_t) {
        std::vector<LabeledExample> out;
        out.reserve(static_cast<std::size_t>(pop.size()));
        for (int id = 0; id < pop.size(); ++id) {
            out.push_back(LabeledExample{id, truth.probs[static_cast<std::size_t>(id)]});
        }
        return out;
    };
}

OutcomeSampler sampling_label_source(const Population& pop, const GroundTruth& truth,
                                     std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    return [&pop, &truth, rng](std::int64_t n) {
        std::vector<LabeledExample> out;
        out.reserve(static_cast<std::size_t>(n));
        for (std::int64_t k = 0; k < n; ++k) {
            const int id = static_cast<int>(rng->next_below(pop.size()));
            out.push_back(LabeledExample{
                id, rng->bernoulli(truth.probs[static_cast<std::size_t>(id)]) ? 1.0 : 0.0});
        }
        return out;
    };
}

ViaWalResult learn_via_wal(const SubsetCollection& collection, const Population& pop,
                           const WeakLearner& learner, const OutcomeSampler& sampler,
                           const ViaWalParams& params, const GroundTruth* truth) {
    const auto started = std::chrono::steady_clock::now();
    const int n = pop.size();
    const double nd = static_cast<double>(n);
    const DiscretizationGrid grid(params.lambda);
    const double beta_min = params.alpha * params.lambda * params.gamma;
    const double tau = params.contract.tau;
    if (!(params.contract.rho <= params.alpha * params.alpha * params.lambda * params.gamma / 2.0 + 1e-12)) {
        throw std::invalid_argument("weak learning contract requires rho <= alpha^2*lambda*gamma/2");
    }

    std::int64_t sample_size = params.sample_size;
    if (sample_size <= 0) {
        // Hoeffding + union bound over C x Lambda[0,1], with the relative-error
        // scaling carried through beta_min
        const double events = 4.0 * static_cast<double>(grid.interval_count()) *
                              static_cast<double>(collection.size() + 2);
        sample_size = static_cast<std::int64_t>(
            std::ceil(8.0 * std::log(events / params.xi) / (beta_min * beta_min * tau * tau)));
    }

    ViaWalResult result;
    result.predictor = DensePredictor::constant(n, 0.5);
    auto& x = result.predictor;
    LearnTrace& trace = result.trace;
    trace.algorithm = "via_wal";
    trace.alpha = params.alpha;
    trace.lambda = params.lambda;
    trace.gamma = params.gamma;
    trace.tau = tau;
    trace.population_size = n;

    const double guard = params.max_updates_factor / (tau * tau);
    double potential = truth ? squared_error(x, *truth) : -1.0;

    const auto potential_delta = [&](const std::vector<int>& ids, const DensePredictor& before,
                                     const DensePredictor& after) {
        double d = 0.0;
        for (int id : ids) {
            const double pb = before.values[static_cast<std::size_t>(id)] - truth->probs[static_cast<std::size_t>(id)];
            const double pa = after.values[static_cast<std::size_t>(id)] - truth->probs[static_cast<std::size_t>(id)];
            d += pa * pa - pb * pb;
        }
        return d;
    };

    bool progressed = true;
    int round = -1;
    while (progressed) {
        progressed = false;
        ++round;
        for (int k = 0; k < grid.interval_count() && !progressed; ++k) {
            std::vector<int> interval_ids;
            for (int id = 0; id < n; ++id) {
                if (grid.interval_of(x.values[static_cast<std::size_t>(id)]) == k) interval_ids.push_back(id);
            }
            if (static_cast<double>(interval_ids.size()) < beta_min * nd) continue;
            const double beta_v = static_cast<double>(interval_ids.size()) / nd;

            const auto examples = sampler(sample_size);
            if (examples.empty()) throw std::runtime_error("label source returned no examples");

            // estimate of (1/N) * sum over the interval of (x_i - o_i), scaled
            // from the batch by the uniform draw
            double disc_sum = 0.0;
            std::int64_t in_interval = 0;
            for (const auto& ex : examples) {
                if (grid.interval_of(x.values[static_cast<std::size_t>(ex.id)]) != k) continue;
                disc_sum += x.values[static_cast<std::size_t>(ex.id)] - ex.y;
                ++in_interval;
            }
            const double disc = disc_sum / static_cast<double>(examples.size());
            if (std::abs(disc) > tau / 4.0) {
                // offset side-step: restore observable tau/4-calibration on the interval
                const double shift = in_interval > 0
                                         ? -disc_sum / static_cast<double>(in_interval)
                                         : 0.0;
                DensePredictor before = truth ? x : DensePredictor{};
                apply_update_in_place(x, interval_ids, shift);
                UpdateRecord rec;
                rec.round = round;
                rec.set_index = -1;
                rec.interval = k;
                rec.center = grid.center(k);
                rec.category_size = static_cast<std::int64_t>(interval_ids.size());
                rec.delta = shift;
                rec.kind = "sidestep";
                if (truth) {
                    rec.potential_before = potential;
                    potential += potential_delta(interval_ids, before, x);
                    rec.potential_after = potential;
                }
                trace.records.push_back(std::move(rec));
                ++trace.updates;
                progressed = true;
                break;
            }

            for (int sign = 0; sign < 2 && !progressed; ++sign) {
                const double sgn = sign == 0 ? 1.0 : -1.0;
                std::vector<LabeledExample> labeled;
                labeled.reserve(examples.size());
                for (const auto& ex : examples) {
                    double d = 0.0;
                    if (grid.interval_of(x.values[static_cast<std::size_t>(ex.id)]) == k) {
                        d = (x.values[static_cast<std::size_t>(ex.id)] - ex.y) / 2.0;
                    }
                    labeled.push_back(LabeledExample{ex.id, sgn * d});
                }
                ++trace.queries;
                const auto h = learner(labeled, params.contract);
                if (!h) {
                    ++trace.checks;
                    continue;
                }
                const double eta = tau / (2.0 * beta_v);
                DensePredictor before = truth ? x : DensePredictor{};
                for (int id : interval_ids) {
                    auto& v = x.values[static_cast<std::size_t>(id)];
                    v = clip01(v - eta * sgn * h->evaluate(pop, id));
                }
                UpdateRecord rec;
                rec.round = round;
                rec.set_index = -1;
                rec.interval = k;
                rec.center = grid.center(k);
                rec.category_size = static_cast<std::int64_t>(interval_ids.size());
                rec.delta = -eta * sgn;
                if (truth) {
                    rec.potential_before = potential;
                    potential += potential_delta(interval_ids, before, x);
                    rec.potential_after = potential;
                }
                trace.records.push_back(std::move(rec));
                ++trace.updates;
                progressed = true;
            }
            if (static_cast<double>(trace.updates) > guard) {
                throw GuardTripped("via-WAL update count exceeded " + std::to_string(guard) +
                                   "; the weak learner is violating its contract");
            }
        }
    }
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

Hypothesis wal_from_multicalibration(const SubsetCollection& collection, const Population& pop,
                                     const LabelVector& y, const WalFromMcParams& params,
                                     const McRunner& runner) {
    y.validate();
    if (y.size() != pop.size()) throw std::invalid_argument("label length mismatch");
    const double rho = params.contract.rho;
    const double tau = params.contract.tau;
    if (tau > std::min(rho - 2.0 * params.gamma, rho / 4.0 - 4.0 * params.alpha) + 1e-12) {
        throw std::invalid_argument("contract requires tau <= min(rho - 2*gamma, rho/4 - 4*alpha)");
    }

    const double nd = static_cast<double>(pop.size());
    double label_sum = 0.0;
    for (double v : y.values) label_sum += v;
    const double mean_y = label_sum / nd;

    // small-support case: the all-(-1) hypothesis already correlates
    if (-mean_y >= rho - 2.0 * params.gamma) return Hypothesis::constant(-1.0);

    // biased-label case: one of the constants suffices
    if (std::abs(mean_y) > rho / 4.0) return Hypothesis::constant(mean_y > 0.0 ? 1.0 : -1.0);

    // calibrate against the labels as the benchmark, in prediction space
    GroundTruth mapped;
    mapped.probs.resize(y.values.size());
    for (std::size_t i = 0; i < y.values.size(); ++i) {
        mapped.probs[i] = to_prediction_space(y.values[i]);
    }

    SubsetCollection large;
    large.gamma = params.gamma;
    const double floor = params.gamma * nd;
    for (const auto& pred : collection.predicates) {
        if (static_cast<double>(members(pred, pop).ids.size()) >= floor) large.predicates.push_back(pred);
    }
    large.predicates.push_back(SetPredicate::all());

    // run to alpha/2-multicalibration in prediction space, which is
    // alpha-multicalibration on the [-1,1] label scale
    const double alpha_run = params.alpha / 4.0;
    const double lambda_run = params.alpha / 4.0;
    DensePredictor x;
    if (runner) {
        x = runner(large, pop, mapped, alpha_run, lambda_run, params.gamma);
    } else {
        ExactGcOracle oracle(mapped);
        MulticalParams mc;
        mc.alpha = alpha_run;
        mc.lambda = lambda_run;
        mc.gamma = params.gamma;
        x = learn_multicalibrated(large, pop, oracle, mc).predictor;
    }
    return Hypothesis::sign_of(std::move(x));
}

// -- files -------------------------------------------------------------------------

void store_labels(const LabelVector& y, const std::string& path) {
    y.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,y\n";
    char buf[32];
    for (int i = 0; i < y.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9f", y.values[static_cast<std::size_t>(i)]);
        out << i << "," << buf << "\n";
    }
}

LabelVector load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty labels file: " + path);
    LabelVector y;
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("label row must be id,y");
        if (std::stoi(line.substr(0, comma)) != expect) throw std::runtime_error("label ids must be dense");
        y.values.push_back(std::stod(line.substr(comma + 1)));
        ++expect;
    }
    y.validate();
    return y;
}

void store_hypothesis(const Hypothesis& h, const std::string& path) {
    json j;
    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Hypothesis::Constant>) {
                j["kind"] = "constant";
                j["value"] = node.value;
            } else if constexpr (std::is_same_v<T, Hypothesis::ConceptKind>) {
                j["kind"] = "concept";
                j["set"] = json::parse(predicate_to_json(node.predicate));
            } else if constexpr (std::is_same_v<T, Hypothesis::SignOfPredictor>) {
                j["kind"] = "sign_of_predictor";
                j["predictor"] = node.predictor.values;
            } else {
                j["kind"] = "tabulated";
                j["values"] = node.values;
            }
        },
        h.node());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

Hypothesis load_hypothesis(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed hypothesis file " + path + ": " + e.what());
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return Hypothesis::constant(j.at("value").get<double>());
    if (kind == "concept") return Hypothesis::of_concept(predicate_from_json(j.at("set").dump()));
    if (kind == "sign_of_predictor") {
        DensePredictor x;
        x.values = j.at("predictor").get<std::vector<double>>();
        x.validate();
        return Hypothesis::sign_of(std::move(x));
    }
    if (kind == "tabulated") {
        auto values = j.at("values").get<std::vector<double>>();
        for (double v : values) {
            if (!(v >= -1.0 && v <= 1.0)) throw std::runtime_error("tabulated hypothesis value outside [-1,1]");
        }
        return Hypothesis::tabulated(std::move(values));
    }
    throw std::runtime_error("unknown hypothesis kind: " + kind);
}

}  // namespace mcal
