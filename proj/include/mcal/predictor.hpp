#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcal/population.hpp"

namespace mcal {

/// Prediction vector x in [0,1]^N.
struct DensePredictor {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
    static DensePredictor constant(int n, double v);
    void validate() const;  // throws if any entry leaves [0,1]
};

/// Partition of [0,1] into ceil(1/lambda) half-open intervals
/// [k*lambda, (k+1)*lambda) with the final interval closed at 1. When
/// 1/lambda is not an integer the final interval absorbs the remainder and
/// its center is its midpoint (for integer 1/lambda this is 1 - lambda/2).
class DiscretizationGrid {
public:
    explicit DiscretizationGrid(double lambda);

    double lambda() const { return lambda_; }
    int interval_count() const { return count_; }

    /// Index of the unique interval containing `value`; value must be in [0,1].
    int interval_of(double value) const;

    double center(int k) const;
    double lower(int k) const { return static_cast<double>(k) * lambda_; }
    /// Upper boundary; the final interval reaches exactly 1.
    double upper(int k) const {
        return k + 1 == count_ ? 1.0 : static_cast<double>(k + 1) * lambda_;
    }

    std::vector<double> centers() const;

private:
    double lambda_;
    int count_;
};

/// One level set of a predictor inside a protected set: the members of S
/// whose current prediction falls in the interval around center v.
struct Category {
    int set_index = -1;          // index into the collection, or -1 for a synthetic set
    int interval = 0;            // grid interval index
    double center = 0.0;
    std::vector<int> ids;        // sorted ascending
    double beta = 0.0;           // |S_v| / N

    int size() const { return static_cast<int>(ids.size()); }
};

/// Round to b fractional bits. All learner arithmetic lives on this lattice
/// so a traced update program replays the dense values bit-for-bit.
inline double quantize(double v, int bits) {
    const double scale = std::ldexp(1.0, bits);
    return std::round(v * scale) / scale;
}

inline int precision_bits_for(double alpha) {
    const int from_alpha = static_cast<int>(std::ceil(std::log2(1.0 / alpha)));
    return std::max(from_alpha, 20);
}

/// One conditional shift: if the predicate holds and the current value lies
/// in the interval around `center`, add `delta` (clipping to [0,1]).
struct UpdateStep {
    SetPredicate predicate;
    double center = 0.0;
    double delta = 0.0;
};

/// Compressed predictor: constant 1/2, an ordered chain of conditional
/// shifts, and an optional closing table that replaces each value by its
/// interval's recorded mean.
struct UpdateProgram {
    double lambda = 0.1;
    int precision_bits = 20;
    std::vector<UpdateStep> steps;
    std::optional<std::map<int, double>> final_table;  // interval index -> replacement value

    int size() const { return static_cast<int>(steps.size()); }

    double evaluate(const Population& pop, int id) const;
    DensePredictor evaluate_all(const Population& pop) const;
};

/// Replace every value by the mean over its grid interval; empty intervals
/// untouched. Intervals whose values are all equal are left bit-identical,
/// and means are clamped into their interval, which makes the operation
/// exactly idempotent.
DensePredictor discretize(const DensePredictor& x, const DiscretizationGrid& grid);

Category category_of(const SetPredicate& pred, const DiscretizationGrid& grid, int interval,
                     const DensePredictor& x, const Population& pop, int set_index = -1);

/// x'_i = clip(x_i + delta) on the member ids, identity elsewhere.
DensePredictor apply_update(const DensePredictor& x, const std::vector<int>& ids, double delta);
void apply_update_in_place(DensePredictor& x, const std::vector<int>& ids, double delta);

inline double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// -- file formats -------------------------------------------------------------

void store_predictor(const DensePredictor& x, const std::string& path);
DensePredictor load_predictor(const std::string& path);

void store_program(const UpdateProgram& prog, const std::string& path);
UpdateProgram load_program(const std::string& path);

}  // namespace mcal
