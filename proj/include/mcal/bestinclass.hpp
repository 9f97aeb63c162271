#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcal/auditor.hpp"
#include "mcal/learners.hpp"
#include "mcal/population.hpp"
#include "mcal/predictor.hpp"

namespace mcal {

/// Named candidate predictors (the class H). Program-form members are
/// expanded to dense vectors once, up front.
struct PredictorFamily {
    std::vector<std::string> names;
    std::vector<DensePredictor> predictors;

    int size() const { return static_cast<int>(predictors.size()); }
    void add(std::string name, DensePredictor x);
};

/// Explicit level sets of h over the grid, dropping those below the size
/// floor (alpha*lambda*N in the calibration run).
std::vector<SetPredicate> categories_of(const DensePredictor& h, const DiscretizationGrid& grid,
                                        double size_floor);

struct PostprocessParams {
    double alpha = 0.1;
    double lambda = 0.1;  // the gap bound below is stated for lambda = alpha
    double max_rounds_factor = 10.0;
};

struct PostprocessReport {
    double squared_error = 0.0;               // ||x - p*||^2
    std::vector<double> family_errors;        // ||h - p*||^2 per member
    double best_error = 0.0;                  // min over H
    double gap = 0.0;                         // squared_error - best_error
    double gap_bound = 0.0;                   // 6*alpha*N
    bool within_bound = false;
    int calibration_sets = 0;                 // |C| + retained categories of H
};

struct PostprocessResult {
    DensePredictor predictor;
    DensePredictor pre_closing;
    UpdateProgram program;
    LearnTrace trace;
    PostprocessReport report;
};

/// Calibrate on C plus the categories of every h in H; the output stays
/// multicalibrated on C while its squared error lands within 6*alpha*N of
/// the best family member.
PostprocessResult postprocess(const SubsetCollection& collection, const PredictorFamily& family,
                              const Population& pop, GcOracle& oracle, const PostprocessParams& params,
                              const GroundTruth* truth_for_report = nullptr);

struct CategoryLemmaCheck {
    int interval = 0;
    double center = 0.0;
    int size = 0;
    double lhs = 0.0;          // sum((y-p*)^2 - (x-p*)^2) over the category
    double rhs = 0.0;          // sum((v-x)^2) - (4*alpha+lambda)*|S_v(y)|
    bool precondition_ok = false;  // x alpha-calibrated on this category
    bool holds = false;
};

struct LemmaReport {
    std::vector<CategoryLemmaCheck> categories;
    double global_lhs = 0.0;   // ||y-p*||^2 - ||x-p*||^2
    double global_rhs = 0.0;   // ||x-y||^2 - (4*alpha+lambda)*N
    bool global_holds = false;
    int precondition_failures = 0;
    int violations = 0;  // categories passing the precondition but failing the inequality
};

/// Per-category improvement inequality: for every level set of y on which x
/// is alpha-calibrated,
///   sum((y-p*)^2 - (x-p*)^2) >= sum((v-x)^2) - (4*alpha+lambda)*|S_v(y)|,
/// and globally ||y-p*||^2 - ||x-p*||^2 >= ||x-y||^2 - (4*alpha+lambda)*N.
LemmaReport verify_lemma_best(const DensePredictor& y, const DensePredictor& x,
                              const GroundTruth& truth, const DiscretizationGrid& grid, double alpha);

void store_postprocess_report(const PostprocessReport& report, const LemmaReport* lemma,
                              const std::string& path);

}  // namespace mcal
