#include "mcal/auditor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mcal {

using nlohmann::json;

namespace {

void require_sizes(const DensePredictor& x, int n, const char* what) {
    if (x.size() != n) throw std::invalid_argument(std::string(what) + ": predictor length mismatch");
}

/// Bucket the member ids of S by the grid interval of their prediction.
std::vector<std::vector<int>> bucket_by_interval(const DensePredictor& x, const std::vector<int>& ids,
                                                 const DiscretizationGrid& grid) {
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(grid.interval_count()));
    for (int id : ids) {
        buckets[static_cast<std::size_t>(grid.interval_of(x.values[static_cast<std::size_t>(id)]))].push_back(id);
    }
    return buckets;
}

template <typename RefAt>
CalibrationCheck calibration_scan(const DensePredictor& x, RefAt ref_at, const std::vector<int>& ids,
                                  double alpha, const DiscretizationGrid& grid, int set_index) {
    if (ids.empty()) throw std::invalid_argument("calibration check over an empty set");
    CalibrationCheck out;
    const auto buckets = bucket_by_interval(x, ids, grid);
    std::size_t excluded_mass = 0;
    for (int k = 0; k < grid.interval_count(); ++k) {
        const auto& members = buckets[static_cast<std::size_t>(k)];
        if (members.empty()) continue;
        double err_sum = 0.0;
        for (int id : members) err_sum += x.values[static_cast<std::size_t>(id)] - ref_at(id);
        const double mean_err = err_sum / static_cast<double>(members.size());
        out.worst_error = std::max(out.worst_error, std::abs(mean_err));
        if (std::abs(mean_err) > alpha) {
            excluded_mass += members.size();
            out.excluded.push_back(Violation{set_index, k, grid.center(k),
                                             static_cast<int>(members.size()), mean_err});
        } else {
            out.worst_retained_error = std::max(out.worst_retained_error, std::abs(mean_err));
        }
    }
    out.excluded_fraction = static_cast<double>(excluded_mass) / static_cast<double>(ids.size());
    out.calibrated = static_cast<double>(excluded_mass) <= alpha * static_cast<double>(ids.size());
    return out;
}

json violation_to_json(const Violation& v) {
    json j;
    j["set"] = v.set_index;
    j["v"] = v.center;
    j["size"] = v.category_size;
    j["signed_error"] = v.signed_error;
    return j;
}

}  // namespace

double ae_error(const DensePredictor& x, const GroundTruth& truth, const SetPredicate& pred,
                const Population& pop) {
    require_sizes(x, pop.size(), "ae_error");
    const auto m = members(pred, pop);
    if (m.ids.empty()) throw std::invalid_argument("ae_error over an empty set");
    double sum = 0.0;
    for (int id : m.ids) {
        sum += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
    }
    return sum / static_cast<double>(m.ids.size());
}

CalibrationCheck check_calibration(const DensePredictor& x, const GroundTruth& truth,
                                   const SetPredicate& pred, const Population& pop, double alpha,
                                   const DiscretizationGrid& grid) {
    require_sizes(x, pop.size(), "check_calibration");
    const auto m = members(pred, pop);
    return calibration_scan(
        x, [&](int id) { return truth.probs[static_cast<std::size_t>(id)]; }, m.ids, alpha, grid, -1);
}

CalibrationCheck check_observable_calibration(const DensePredictor& x, const OutcomeVector& outcomes,
                                              const SetPredicate& pred, const Population& pop,
                                              double alpha, const DiscretizationGrid& grid) {
    require_sizes(x, pop.size(), "check_observable_calibration");
    if (outcomes.size() != pop.size()) throw std::invalid_argument("outcome length mismatch");
    const auto m = members(pred, pop);
    return calibration_scan(
        x, [&](int id) { return static_cast<double>(outcomes.bits[static_cast<std::size_t>(id)]); },
        m.ids, alpha, grid, -1);
}

AuditReport check_al_multicalibration(const DensePredictor& x, const GroundTruth& truth,
                                      const SubsetCollection& collection, const Population& pop,
                                      double alpha, const DiscretizationGrid& grid) {
    require_sizes(x, pop.size(), "check_al_multicalibration");
    AuditReport report;
    report.alpha = alpha;
    report.lambda = grid.lambda();
    report.squared_error = squared_error(x, truth);
    for (int s = 0; s < collection.size(); ++s) {
        const auto& pred = collection.predicates[static_cast<std::size_t>(s)];
        const auto m = members(pred, pop);
        SetAudit audit;
        audit.set_index = s;
        audit.description = pred.describe();
        audit.set_size = static_cast<int>(m.ids.size());
        if (m.ids.empty()) {
            audit.calibrated = true;  // vacuous
            report.sets.push_back(std::move(audit));
            continue;
        }
        double ae_sum = 0.0;
        for (int id : m.ids) {
            ae_sum += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
        }
        audit.ae_error = ae_sum / static_cast<double>(m.ids.size());

        const auto cal = calibration_scan(
            x, [&](int id) { return truth.probs[static_cast<std::size_t>(id)]; }, m.ids, alpha, grid, s);
        audit.calibrated = cal.calibrated;
        audit.excluded_fraction = cal.excluded_fraction;

        // (alpha,lambda) categories: size floor alpha*lambda*|S|, error bound alpha
        const double floor = alpha * grid.lambda() * static_cast<double>(m.ids.size());
        const auto buckets = bucket_by_interval(x, m.ids, grid);
        for (int k = 0; k < grid.interval_count(); ++k) {
            const auto& cat = buckets[static_cast<std::size_t>(k)];
            if (cat.empty() || static_cast<double>(cat.size()) < floor) continue;
            double err_sum = 0.0;
            for (int id : cat) {
                err_sum += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
            }
            const double mean_err = err_sum / static_cast<double>(cat.size());
            if (std::abs(mean_err) > alpha) {
                audit.violations.push_back(
                    Violation{s, k, grid.center(k), static_cast<int>(cat.size()), mean_err});
            }
        }
        for (const auto& v : audit.violations) report.violations.push_back(v);
        report.sets.push_back(std::move(audit));
    }
    std::sort(report.violations.begin(), report.violations.end(),
              [](const Violation& a, const Violation& b) {
                  return std::abs(a.signed_error) > std::abs(b.signed_error);
              });
    return report;
}

AuditReport check_multi_ae(const DensePredictor& x, const GroundTruth& truth,
                           const SubsetCollection& collection, const Population& pop, double alpha) {
    require_sizes(x, pop.size(), "check_multi_ae");
    AuditReport report;
    report.alpha = alpha;
    report.lambda = 0.0;
    report.squared_error = squared_error(x, truth);
    for (int s = 0; s < collection.size(); ++s) {
        const auto& pred = collection.predicates[static_cast<std::size_t>(s)];
        const auto m = members(pred, pop);
        SetAudit audit;
        audit.set_index = s;
        audit.description = pred.describe();
        audit.set_size = static_cast<int>(m.ids.size());
        if (!m.ids.empty()) {
            double sum = 0.0;
            for (int id : m.ids) {
                sum += x.values[static_cast<std::size_t>(id)] - truth.probs[static_cast<std::size_t>(id)];
            }
            audit.ae_error = sum / static_cast<double>(m.ids.size());
            audit.calibrated = std::abs(audit.ae_error) <= alpha;
            if (!audit.calibrated) {
                audit.violations.push_back(
                    Violation{s, -1, 0.0, static_cast<int>(m.ids.size()), audit.ae_error});
                report.violations.push_back(audit.violations.back());
            }
        } else {
            audit.calibrated = true;
        }
        report.sets.push_back(std::move(audit));
    }
    std::sort(report.violations.begin(), report.violations.end(),
              [](const Violation& a, const Violation& b) {
                  return std::abs(a.signed_error) > std::abs(b.signed_error);
              });
    return report;
}

double squared_error(const DensePredictor& x, const GroundTruth& truth) {
    if (x.size() != truth.size()) throw std::invalid_argument("squared_error: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double d = x.values[i] - truth.probs[i];
        sum += d * d;
    }
    return sum;
}

void store_audit_report(const AuditReport& report, const std::string& path) {
    json j;
    j["alpha"] = report.alpha;
    j["lambda"] = report.lambda;
    j["squared_error"] = report.squared_error;
    j["violation_count"] = report.violations.size();
    j["worst_violation"] = report.violations.empty() ? json(nullptr) : violation_to_json(report.violations.front());
    json sets = json::array();
    for (const auto& s : report.sets) {
        json js;
        js["set"] = s.set_index;
        js["description"] = s.description;
        js["size"] = s.set_size;
        js["ae_error"] = s.ae_error;
        js["calibrated"] = s.calibrated;
        js["excluded_fraction"] = s.excluded_fraction;
        json vs = json::array();
        for (const auto& v : s.violations) vs.push_back(violation_to_json(v));
        js["violations"] = vs;
        sets.push_back(js);
    }
    j["sets"] = sets;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mcal
