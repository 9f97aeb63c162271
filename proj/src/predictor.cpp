#include "mcal/predictor.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mcal {

using nlohmann::json;

DensePredictor DensePredictor::constant(int n, double v) {
    DensePredictor x;
    x.values.assign(static_cast<std::size_t>(n), v);
    return x;
}

void DensePredictor::validate() const {
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("prediction outside [0,1]");
    }
}

DiscretizationGrid::DiscretizationGrid(double lambda) : lambda_(lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in (0,1]");
    count_ = static_cast<int>(std::ceil(1.0 / lambda - 1e-12));
    if (count_ < 1) count_ = 1;
}

int DiscretizationGrid::interval_of(double value) const {
    if (!(value >= 0.0 && value <= 1.0)) throw std::out_of_range("value outside [0,1]");
    int k = static_cast<int>(value / lambda_);
    if (k > count_ - 1) k = count_ - 1;
    // fix up against the actual boundary arithmetic so membership agrees
    // exactly with lower()/upper() comparisons
    while (k > 0 && value < lower(k)) --k;
    while (k + 1 < count_ && value >= upper(k)) ++k;
    return k;
}

double DiscretizationGrid::center(int k) const {
    if (k < 0 || k >= count_) throw std::out_of_range("interval index out of range");
    if (k + 1 == count_) return (lower(k) + 1.0) / 2.0;  // final interval absorbs any remainder
    return (static_cast<double>(k) + 0.5) * lambda_;
}

std::vector<double> DiscretizationGrid::centers() const {
    std::vector<double> out(static_cast<std::size_t>(count_));
    for (int k = 0; k < count_; ++k) out[static_cast<std::size_t>(k)] = center(k);
    return out;
}

DensePredictor discretize(const DensePredictor& x, const DiscretizationGrid& grid) {
    x.validate();
    const int n = x.size();
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(grid.interval_count()));
    for (int i = 0; i < n; ++i) {
        buckets[static_cast<std::size_t>(grid.interval_of(x.values[static_cast<std::size_t>(i)]))].push_back(i);
    }
    DensePredictor out = x;
    for (int k = 0; k < grid.interval_count(); ++k) {
        const auto& ids = buckets[static_cast<std::size_t>(k)];
        if (ids.empty()) continue;
        const double first = x.values[static_cast<std::size_t>(ids.front())];
        bool all_equal = true;
        double sum = 0.0;
        for (int id : ids) {
            const double v = x.values[static_cast<std::size_t>(id)];
            all_equal = all_equal && v == first;
            sum += v;
        }
        double mean = all_equal ? first : sum / static_cast<double>(ids.size());
        // rounding may push the mean out of its half-open interval by one ulp
        if (mean < grid.lower(k)) mean = grid.lower(k);
        if (k + 1 < grid.interval_count() && mean >= grid.upper(k)) {
            mean = std::nextafter(grid.upper(k), 0.0);
        }
        if (mean > 1.0) mean = 1.0;
        for (int id : ids) out.values[static_cast<std::size_t>(id)] = mean;
    }
    return out;
}

Category category_of(const SetPredicate& pred, const DiscretizationGrid& grid, int interval,
                     const DensePredictor& x, const Population& pop, int set_index) {
    Category c;
    c.set_index = set_index;
    c.interval = interval;
    c.center = grid.center(interval);
    for (int id = 0; id < pop.size(); ++id) {
        if (grid.interval_of(x.values[static_cast<std::size_t>(id)]) != interval) continue;
        if (!evaluate_predicate(pred, pop, id)) continue;
        c.ids.push_back(id);
    }
    c.beta = static_cast<double>(c.ids.size()) / static_cast<double>(pop.size());
    return c;
}

void apply_update_in_place(DensePredictor& x, const std::vector<int>& ids, double delta) {
    for (int id : ids) {
        auto& v = x.values[static_cast<std::size_t>(id)];
        v = clip01(v + delta);
    }
}

DensePredictor apply_update(const DensePredictor& x, const std::vector<int>& ids, double delta) {
    DensePredictor out = x;
    apply_update_in_place(out, ids, delta);
    return out;
}

double UpdateProgram::evaluate(const Population& pop, int id) const {
    const DiscretizationGrid grid(lambda);
    double v = quantize(0.5, precision_bits);
    for (const auto& step : steps) {
        if (!evaluate_predicate(step.predicate, pop, id)) continue;
        if (grid.interval_of(v) != grid.interval_of(clip01(step.center))) continue;
        v = clip01(v + step.delta);
    }
    if (final_table) {
        const auto it = final_table->find(grid.interval_of(v));
        if (it != final_table->end()) v = it->second;
    }
    return v;
}

DensePredictor UpdateProgram::evaluate_all(const Population& pop) const {
    DensePredictor out;
    out.values.resize(static_cast<std::size_t>(pop.size()));
    for (int id = 0; id < pop.size(); ++id) {
        out.values[static_cast<std::size_t>(id)] = evaluate(pop, id);
    }
    return out;
}

namespace {

std::string format9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

}  // namespace

void store_predictor(const DensePredictor& x, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,x\n";
    for (int i = 0; i < x.size(); ++i) out << i << "," << format9(x.values[static_cast<std::size_t>(i)]) << "\n";
}

DensePredictor load_predictor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty predictor file: " + path);
    DensePredictor x;
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("predictor row must be id,x");
        if (std::stoi(line.substr(0, comma)) != expect) throw std::runtime_error("predictor ids must be dense");
        x.values.push_back(std::stod(line.substr(comma + 1)));
        ++expect;
    }
    x.validate();
    return x;
}

void store_program(const UpdateProgram& prog, const std::string& path) {
    json j;
    j["lambda"] = prog.lambda;
    j["bits"] = prog.precision_bits;
    json steps = json::array();
    for (const auto& s : prog.steps) {
        json step;
        step["set"] = json::parse(predicate_to_json(s.predicate));
        step["v"] = s.center;
        step["delta"] = s.delta;
        steps.push_back(step);
    }
    j["steps"] = steps;
    if (prog.final_table) {
        json table = json::object();
        const DiscretizationGrid grid(prog.lambda);
        for (const auto& [k, value] : *prog.final_table) {
            table[format9(grid.center(k))] = value;
        }
        j["final"] = table;
    } else {
        j["final"] = nullptr;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

UpdateProgram load_program(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed program file " + path + ": " + e.what());
    }
    UpdateProgram prog;
    prog.lambda = j.at("lambda").get<double>();
    prog.precision_bits = j.at("bits").get<int>();
    [[maybe_unused]] const DiscretizationGrid lambda_check(prog.lambda);  // rejects bad lambda
    for (const auto& step : j.at("steps")) {
        UpdateStep s;
        s.predicate = predicate_from_json(step.at("set").dump());
        s.center = step.at("v").get<double>();
        if (!(s.center >= 0.0 && s.center <= 1.0)) {
            throw std::runtime_error("program step center outside [0,1]");
        }
        s.delta = step.at("delta").get<double>();
        prog.steps.push_back(std::move(s));
    }
    if (!j.at("final").is_null()) {
        const DiscretizationGrid grid(prog.lambda);
        std::map<int, double> table;
        for (const auto& [key, value] : j.at("final").items()) {
            const double center = std::stod(key);
            table[grid.interval_of(clip01(center))] = value.get<double>();
        }
        prog.final_table = std::move(table);
    }
    return prog;
}

}  // namespace mcal
