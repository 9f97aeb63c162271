#include "mcal/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mcal/random.hpp"

namespace mcal {

using nlohmann::json;

Population::Population(std::vector<AttrKind> schema, std::vector<std::vector<double>> rows)
    : schema_(std::move(schema)), rows_(std::move(rows)) {
    if (rows_.empty()) throw std::invalid_argument("population must contain at least one individual");
    for (const auto& r : rows_) {
        if (r.size() != schema_.size()) {
            throw std::invalid_argument("feature row length does not match schema");
        }
    }
}

void GroundTruth::validate() const {
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("ground-truth probability outside [0,1]");
        }
    }
}

SetPredicate::SetPredicate(Node node) : node_(std::move(node)) {
    if (auto* e = std::get_if<ExplicitPredicate>(&node_)) {
        std::sort(e->ids.begin(), e->ids.end());
        e->ids.erase(std::unique(e->ids.begin(), e->ids.end()), e->ids.end());
    }
}

SetPredicate SetPredicate::conjunction(std::vector<std::pair<int, int>> literals) {
    return SetPredicate(Node{ConjunctionPredicate{std::move(literals)}});
}

SetPredicate SetPredicate::stump(int attr, double threshold, StumpDirection dir) {
    return SetPredicate(Node{StumpPredicate{attr, threshold, dir}});
}

SetPredicate SetPredicate::explicit_ids(std::vector<int> ids) {
    return SetPredicate(Node{ExplicitPredicate{std::move(ids)}});
}

SetPredicate SetPredicate::all() { return SetPredicate(Node{AllPredicate{}}); }

std::string SetPredicate::describe() const {
    std::ostringstream out;
    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, ConjunctionPredicate>) {
                out << "conj(";
                for (std::size_t i = 0; i < node.literals.size(); ++i) {
                    if (i) out << ",";
                    out << "a" << node.literals[i].first << "=" << node.literals[i].second;
                }
                out << ")";
            } else if constexpr (std::is_same_v<T, StumpPredicate>) {
                out << "stump(a" << node.attr << (node.direction == StumpDirection::Ge ? ">=" : "<")
                    << node.threshold << ")";
            } else if constexpr (std::is_same_v<T, ExplicitPredicate>) {
                out << "explicit(" << node.ids.size() << " ids)";
            } else {
                out << "all";
            }
        },
        node_);
    return out.str();
}

bool evaluate_predicate(const SetPredicate& pred, const Population& pop, int id) {
    if (id < 0 || id >= pop.size()) throw std::out_of_range("individual id out of range");
    return std::visit(
        [&](const auto& node) -> bool {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, ConjunctionPredicate>) {
                for (const auto& [attr, want] : node.literals) {
                    if (attr < 0 || attr >= pop.feature_dim()) {
                        throw std::out_of_range("conjunction literal attribute index out of range");
                    }
                    const bool bit = pop.attribute(id, attr) != 0.0;
                    if (bit != (want != 0)) return false;
                }
                return true;
            } else if constexpr (std::is_same_v<T, StumpPredicate>) {
                if (node.attr < 0 || node.attr >= pop.feature_dim()) {
                    throw std::out_of_range("stump attribute index out of range");
                }
                const double v = pop.attribute(id, node.attr);
                return node.direction == StumpDirection::Ge ? v >= node.threshold : v < node.threshold;
            } else if constexpr (std::is_same_v<T, ExplicitPredicate>) {
                return std::binary_search(node.ids.begin(), node.ids.end(), id);
            } else {
                return true;
            }
        },
        pred.node());
}

Members members(const SetPredicate& pred, const Population& pop) {
    Members m;
    m.ids.reserve(static_cast<std::size_t>(pop.size()));
    for (int id = 0; id < pop.size(); ++id) {
        if (evaluate_predicate(pred, pop, id)) m.ids.push_back(id);
    }
    m.ids.shrink_to_fit();
    m.density = static_cast<double>(m.ids.size()) / static_cast<double>(pop.size());
    return m;
}

void SubsetCollection::validate_density(const Population& pop) const {
    const double floor = gamma * static_cast<double>(pop.size());
    for (int s = 0; s < size(); ++s) {
        const auto m = members(predicates[static_cast<std::size_t>(s)], pop);
        if (static_cast<double>(m.ids.size()) < floor) {
            throw std::runtime_error("collection set " + std::to_string(s) + " (" +
                                     predicates[static_cast<std::size_t>(s)].describe() +
                                     ") violates the density floor gamma=" + std::to_string(gamma));
        }
    }
}

OutcomeVector sample_outcomes(const GroundTruth& truth, std::uint64_t seed) {
    truth.validate();
    OutcomeVector o;
    o.seed = seed;
    o.bits.resize(truth.probs.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < truth.probs.size(); ++i) {
        o.bits[i] = rng.bernoulli(truth.probs[i]) ? 1 : 0;
    }
    return o;
}

std::vector<std::pair<int, int>> draw_labeled_samples(const Population& pop, const GroundTruth& truth,
                                                      std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample count must be at least 1");
    if (truth.size() != pop.size()) throw std::invalid_argument("truth length does not match population");
    Rng rng(seed);
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        const int id = static_cast<int>(rng.next_below(pop.size()));
        const int bit = rng.bernoulli(truth.probs[static_cast<std::size_t>(id)]) ? 1 : 0;
        out.emplace_back(id, bit);
    }
    return out;
}

// -- serialization ------------------------------------------------------------

namespace {

std::string format_prob(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9f", p);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

json predicate_to_json_obj(const SetPredicate& pred) {
    json j;
    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, ConjunctionPredicate>) {
                j["kind"] = "conjunction";
                json lits = json::array();
                for (const auto& [attr, want] : node.literals) lits.push_back(json::array({attr, want}));
                j["literals"] = lits;
            } else if constexpr (std::is_same_v<T, StumpPredicate>) {
                j["kind"] = "stump";
                j["attr"] = node.attr;
                j["threshold"] = node.threshold;
                j["direction"] = node.direction == StumpDirection::Ge ? "ge" : "lt";
            } else if constexpr (std::is_same_v<T, ExplicitPredicate>) {
                j["kind"] = "explicit";
                j["ids"] = node.ids;
            } else {
                j["kind"] = "all";
            }
        },
        pred.node());
    return j;
}

SetPredicate predicate_from_json_obj(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conjunction") {
        std::vector<std::pair<int, int>> lits;
        for (const auto& lit : j.at("literals")) {
            if (!lit.is_array() || lit.size() != 2) throw std::runtime_error("malformed conjunction literal");
            int want = lit[1].is_boolean() ? (lit[1].get<bool>() ? 1 : 0) : lit[1].get<int>();
            lits.emplace_back(lit[0].get<int>(), want);
        }
        return SetPredicate::conjunction(std::move(lits));
    }
    if (kind == "stump") {
        const std::string dir = j.at("direction").get<std::string>();
        if (dir != "ge" && dir != "lt") throw std::runtime_error("stump direction must be 'ge' or 'lt'");
        return SetPredicate::stump(j.at("attr").get<int>(), j.at("threshold").get<double>(),
                                   dir == "ge" ? StumpDirection::Ge : StumpDirection::Lt);
    }
    if (kind == "explicit") return SetPredicate::explicit_ids(j.at("ids").get<std::vector<int>>());
    if (kind == "all") return SetPredicate::all();
    throw std::runtime_error("unknown predicate kind: " + kind);
}

}  // namespace

void store_population(const Population& pop, const std::string& path) {
    auto out = open_out(path);
    out << "id";
    for (int a = 0; a < pop.feature_dim(); ++a) out << ",f" << a;
    out << "\n";
    for (int id = 0; id < pop.size(); ++id) {
        out << id;
        for (int a = 0; a < pop.feature_dim(); ++a) {
            const double v = pop.attribute(id, a);
            if (pop.schema()[static_cast<std::size_t>(a)] == AttrKind::Boolean) {
                out << "," << (v != 0.0 ? 1 : 0);
            } else {
                out << "," << format_prob(v);
            }
        }
        out << "\n";
    }
}

Population load_population(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty population file: " + path);
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "id") throw std::runtime_error("population header must start with 'id'");
    const int dim = static_cast<int>(header.size()) - 1;

    std::vector<std::vector<double>> rows;
    std::vector<bool> looks_boolean(static_cast<std::size_t>(dim), true);
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != dim + 1) throw std::runtime_error("population row arity mismatch");
        if (std::stoi(fields[0]) != expect) throw std::runtime_error("population ids must be dense 0..N-1");
        std::vector<double> row(static_cast<std::size_t>(dim));
        for (int a = 0; a < dim; ++a) {
            const double v = std::stod(fields[static_cast<std::size_t>(a) + 1]);
            row[static_cast<std::size_t>(a)] = v;
            if (v != 0.0 && v != 1.0) looks_boolean[static_cast<std::size_t>(a)] = false;
        }
        rows.push_back(std::move(row));
        ++expect;
    }
    std::vector<AttrKind> schema(static_cast<std::size_t>(dim));
    for (int a = 0; a < dim; ++a) {
        schema[static_cast<std::size_t>(a)] = looks_boolean[static_cast<std::size_t>(a)] ? AttrKind::Boolean : AttrKind::Real;
    }
    return Population(std::move(schema), std::move(rows));
}

void store_truth(const GroundTruth& truth, const std::string& path) {
    auto out = open_out(path);
    out << "id,p\n";
    for (int id = 0; id < truth.size(); ++id) {
        out << id << "," << format_prob(truth.probs[static_cast<std::size_t>(id)]) << "\n";
    }
}

GroundTruth load_truth(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty truth file: " + path);
    GroundTruth t;
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) throw std::runtime_error("truth row must be id,p");
        if (std::stoi(fields[0]) != expect) throw std::runtime_error("truth ids must be dense 0..N-1");
        t.probs.push_back(std::stod(fields[1]));
        ++expect;
    }
    t.validate();
    return t;
}

void store_outcomes(const OutcomeVector& o, const std::string& path) {
    auto out = open_out(path);
    out << "id,o\n";
    for (int id = 0; id < o.size(); ++id) {
        out << id << "," << static_cast<int>(o.bits[static_cast<std::size_t>(id)]) << "\n";
    }
}

OutcomeVector load_outcomes(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty outcome file: " + path);
    OutcomeVector o;
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) throw std::runtime_error("outcome row must be id,o");
        if (std::stoi(fields[0]) != expect) throw std::runtime_error("outcome ids must be dense 0..N-1");
        const int bit = std::stoi(fields[1]);
        if (bit != 0 && bit != 1) throw std::runtime_error("outcome must be 0 or 1");
        o.bits.push_back(static_cast<std::uint8_t>(bit));
        ++expect;
    }
    return o;
}

void store_collection(const SubsetCollection& c, const std::string& path) {
    json j;
    j["gamma"] = c.gamma;
    json sets = json::array();
    for (const auto& p : c.predicates) sets.push_back(predicate_to_json_obj(p));
    j["sets"] = sets;
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

SubsetCollection load_collection(const std::string& path) {
    auto in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed collection file " + path + ": " + e.what());
    }
    SubsetCollection c;
    c.gamma = j.at("gamma").get<double>();
    if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw std::runtime_error("gamma must lie in (0,1]");
    for (const auto& s : j.at("sets")) c.predicates.push_back(predicate_from_json_obj(s));
    return c;
}

SubsetCollection load_collection(const std::string& path, const Population& pop) {
    SubsetCollection c = load_collection(path);
    c.validate_density(pop);
    return c;
}

std::string predicate_to_json(const SetPredicate& pred) { return predicate_to_json_obj(pred).dump(); }

SetPredicate predicate_from_json(const std::string& json_text) {
    return predicate_from_json_obj(json::parse(json_text));
}

}  // namespace mcal
