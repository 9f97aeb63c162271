#include "mcal/bestinclass.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace mcal {

using nlohmann::json;

void PredictorFamily::add(std::string name, DensePredictor x) {
    x.validate();
    names.push_back(std::move(name));
    predictors.push_back(std::move(x));
}

std::vector<SetPredicate> categories_of(const DensePredictor& h, const DiscretizationGrid& grid,
                                        double size_floor) {
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(grid.interval_count()));
    for (int id = 0; id < h.size(); ++id) {
        buckets[static_cast<std::size_t>(grid.interval_of(h.values[static_cast<std::size_t>(id)]))].push_back(id);
    }
    std::vector<SetPredicate> out;
    for (auto& bucket : buckets) {
        if (bucket.empty() || static_cast<double>(bucket.size()) < size_floor) continue;
        out.push_back(SetPredicate::explicit_ids(std::move(bucket)));
    }
    return out;
}

PostprocessResult postprocess(const SubsetCollection& collection, const PredictorFamily& family,
                              const Population& pop, GcOracle& oracle, const PostprocessParams& params,
                              const GroundTruth* truth) {
    if (family.size() == 0) throw std::invalid_argument("postprocess needs a nonempty family");
    const int n = pop.size();
    const double nd = static_cast<double>(n);
    const DiscretizationGrid grid(params.lambda);

    // the categories of each h are frozen as explicit sets up front: unlike
    // the iterate's categories, h's level sets never move
    SubsetCollection combined = collection;
    const double floor = params.alpha * params.lambda * nd;
    for (const auto& h : family.predictors) {
        if (h.size() != n) throw std::invalid_argument("family member length mismatch");
        for (auto& cat : categories_of(h, grid, floor)) combined.predicates.push_back(std::move(cat));
    }

    // density floor actually attained by the combined collection
    double min_density = 1.0;
    for (const auto& pred : combined.predicates) {
        min_density = std::min(min_density, members(pred, pop).density);
    }
    combined.gamma = std::max(min_density, 1e-9);

    MulticalParams mc;
    mc.alpha = params.alpha;
    mc.lambda = params.lambda;
    mc.gamma = combined.gamma;
    mc.max_rounds_factor = params.max_rounds_factor;
    auto learned = learn_multicalibrated(combined, pop, oracle, mc, truth);

    PostprocessResult result;
    result.predictor = std::move(learned.predictor);
    result.pre_closing = std::move(learned.pre_closing);
    result.program = std::move(learned.program);
    result.trace = std::move(learned.trace);
    result.report.calibration_sets = combined.size();
    result.report.gap_bound = 6.0 * params.alpha * nd;
    if (truth) {
        result.report.squared_error = squared_error(result.predictor, *truth);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& h : family.predictors) {
            const double err = squared_error(h, *truth);
            result.report.family_errors.push_back(err);
            best = std::min(best, err);
        }
        result.report.best_error = best;
        result.report.gap = result.report.squared_error - best;
        result.report.within_bound = result.report.gap < result.report.gap_bound;
    }
    return result;
}

LemmaReport verify_lemma_best(const DensePredictor& y, const DensePredictor& x,
                              const GroundTruth& truth, const DiscretizationGrid& grid, double alpha) {
    if (y.size() != x.size() || x.size() != truth.size()) {
        throw std::invalid_argument("verify_lemma_best: length mismatch");
    }
    const int n = x.size();
    const double lambda = grid.lambda();
    LemmaReport report;

    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(grid.interval_count()));
    for (int id = 0; id < n; ++id) {
        buckets[static_cast<std::size_t>(grid.interval_of(y.values[static_cast<std::size_t>(id)]))].push_back(id);
    }

    for (int k = 0; k < grid.interval_count(); ++k) {
        const auto& ids = buckets[static_cast<std::size_t>(k)];
        if (ids.empty()) continue;
        CategoryLemmaCheck check;
        check.interval = k;
        check.center = grid.center(k);
        check.size = static_cast<int>(ids.size());

        // precondition: x is alpha-calibrated on this level set of y,
        // witnessed over x's own categories within it
        std::vector<std::vector<int>> sub(static_cast<std::size_t>(grid.interval_count()));
        for (int id : ids) {
            sub[static_cast<std::size_t>(grid.interval_of(x.values[static_cast<std::size_t>(id)]))].push_back(id);
        }
        std::size_t excluded = 0;
        for (const auto& cat : sub) {
            if (cat.empty()) continue;
            double err = 0.0;
            for (int id : cat) {
                err += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
            }
            if (std::abs(err / static_cast<double>(cat.size())) > alpha) excluded += cat.size();
        }
        check.precondition_ok =
            static_cast<double>(excluded) <= alpha * static_cast<double>(ids.size());

        const double v = grid.center(k);
        double lhs = 0.0;
        double vx = 0.0;
        for (int id : ids) {
            const double p = truth.probs[static_cast<std::size_t>(id)];
            const double dy = y.values[static_cast<std::size_t>(id)] - p;
            const double dx = x.values[static_cast<std::size_t>(id)] - p;
            lhs += dy * dy - dx * dx;
            const double dv = v - x.values[static_cast<std::size_t>(id)];
            vx += dv * dv;
        }
        check.lhs = lhs;
        check.rhs = vx - (4.0 * alpha + lambda) * static_cast<double>(ids.size());
        check.holds = check.lhs >= check.rhs;
        if (!check.precondition_ok) {
            ++report.precondition_failures;
        } else if (!check.holds) {
            ++report.violations;
        }
        report.categories.push_back(check);
    }

    report.global_lhs = squared_error(y, truth) - squared_error(x, truth);
    double xy = 0.0;
    for (int id = 0; id < n; ++id) {
        const double d = x.values[static_cast<std::size_t>(id)] - y.values[static_cast<std::size_t>(id)];
        xy += d * d;
    }
    report.global_rhs = xy - (4.0 * alpha + lambda) * static_cast<double>(n);
    report.global_holds = report.global_lhs >= report.global_rhs;
    return report;
}

void store_postprocess_report(const PostprocessReport& report, const LemmaReport* lemma,
                              const std::string& path) {
    json j;
    j["squared_error"] = report.squared_error;
    j["family_errors"] = report.family_errors;
    j["best_error"] = report.best_error;
    j["gap"] = report.gap;
    j["gap_bound"] = report.gap_bound;
    j["within_bound"] = report.within_bound;
    j["calibration_sets"] = report.calibration_sets;
    if (lemma) {
        json l;
        l["global_lhs"] = lemma->global_lhs;
        l["global_rhs"] = lemma->global_rhs;
        l["global_holds"] = lemma->global_holds;
        l["precondition_failures"] = lemma->precondition_failures;
        l["violations"] = lemma->violations;
        json cats = json::array();
        for (const auto& c : lemma->categories) {
            cats.push_back({{"v", c.center},
                            {"size", c.size},
                            {"lhs", c.lhs},
                            {"rhs", c.rhs},
                            {"precondition_ok", c.precondition_ok},
                            {"holds", c.holds}});
        }
        l["categories"] = cats;
        j["lemma"] = l;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mcal
