#pragma once

#include <string>
#include <vector>

#include "mcal/population.hpp"
#include "mcal/predictor.hpp"

namespace mcal {

/// One flagged category: its interval center, size, and the signed mean
/// error sum(x_i - p*_i) / |S_v|.
struct Violation {
    int set_index = -1;
    int interval = 0;
    double center = 0.0;
    int category_size = 0;
    double signed_error = 0.0;
};

struct SetAudit {
    int set_index = -1;
    std::string description;
    int set_size = 0;
    double ae_error = 0.0;          // E_{i~S}[x_i - p*_i]
    bool calibrated = false;        // alpha-calibration with the category-aligned witness
    double excluded_fraction = 0.0; // mass of categories the witness had to drop
    std::vector<Violation> violations;  // categories failing the (alpha,lambda) bound
};

struct AuditReport {
    double alpha = 0.0;
    double lambda = 0.0;
    double squared_error = 0.0;  // ||x - p*||^2
    std::vector<SetAudit> sets;
    std::vector<Violation> violations;  // all (alpha,lambda) violations, worst first

    bool clean() const { return violations.empty(); }
    const Violation* worst() const { return violations.empty() ? nullptr : &violations.front(); }
};

struct CalibrationCheck {
    bool calibrated = false;
    double excluded_fraction = 0.0;            // |S \ S'| / |S|
    double worst_retained_error = 0.0;         // max |mean error| over kept categories
    double worst_error = 0.0;                  // max |mean error| over all nonempty categories
    std::vector<Violation> excluded;           // the categories dropped from S'
};

/// Signed mean accuracy-in-expectation error over S; throws on empty S.
double ae_error(const DensePredictor& x, const GroundTruth& truth, const SetPredicate& pred,
                const Population& pop);

/// alpha-calibration with the constructive witness: drop exactly the
/// categories of x within S whose mean error exceeds alpha, pass iff the
/// dropped mass is at most alpha*|S|.
CalibrationCheck check_calibration(const DensePredictor& x, const GroundTruth& truth,
                                   const SetPredicate& pred, const Population& pop, double alpha,
                                   const DiscretizationGrid& grid);

/// Same construction against realized outcomes instead of p*.
CalibrationCheck check_observable_calibration(const DensePredictor& x, const OutcomeVector& outcomes,
                                              const SetPredicate& pred, const Population& pop,
                                              double alpha, const DiscretizationGrid& grid);

/// Exhaustive (alpha,lambda)-multicalibration scan over all S in C and all
/// grid intervals; flags every category with |S_v| >= alpha*lambda*|S| whose
/// mean error magnitude exceeds alpha.
AuditReport check_al_multicalibration(const DensePredictor& x, const GroundTruth& truth,
                                      const SubsetCollection& collection, const Population& pop,
                                      double alpha, const DiscretizationGrid& grid);

/// Per-set AE audit: flags every S in C with |ae_error| > alpha.
AuditReport check_multi_ae(const DensePredictor& x, const GroundTruth& truth,
                           const SubsetCollection& collection, const Population& pop, double alpha);

double squared_error(const DensePredictor& x, const GroundTruth& truth);

void store_audit_report(const AuditReport& report, const std::string& path);

}  // namespace mcal
