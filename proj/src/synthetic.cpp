#include "mcal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "mcal/random.hpp"

namespace mcal {

using nlohmann::json;

namespace {

std::vector<int> choose_subset(Rng& rng, int n, int k) {
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(k));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

SyntheticInstance generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
    if (config.n < 1) throw std::invalid_argument("population size must be at least 1");
    const auto& cs = config.collection;
    if (cs.conjunction_count < 1 || cs.arity < 1) {
        throw std::invalid_argument("collection spec needs at least one conjunction of arity >= 1");
    }
    if (!(cs.density_min <= cs.density_max && cs.density_min > 0.0 && cs.density_max <= 1.0)) {
        throw std::invalid_argument("density range must satisfy 0 < min <= max <= 1");
    }
    if (cs.density_min < cs.gamma) {
        throw std::invalid_argument("planted densities below the declared gamma floor");
    }

    Rng rng(seed);
    const int n = config.n;
    const int dim = cs.conjunction_count * cs.arity;
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(dim), 0.0));

    SubsetCollection collection;
    collection.gamma = cs.gamma;
    std::vector<std::vector<int>> planted_members;

    for (int j = 0; j < cs.conjunction_count; ++j) {
        const double density = cs.density_min + (cs.density_max - cs.density_min) * rng.next_unit();
        int size = static_cast<int>(std::llround(density * n));
        size = std::max(1, std::min(size, n));
        if (config.truth.kind == "half_qualified" && j == 0 && size % 2 == 1) {
            size += size < n ? 1 : -1;  // the qualified half needs an even split
        }
        const auto member_ids = choose_subset(rng, n, size);

        std::vector<std::pair<int, int>> literals;
        std::vector<int> wants(static_cast<std::size_t>(cs.arity));
        for (int a = 0; a < cs.arity; ++a) {
            const int attr = j * cs.arity + a;
            const int want = rng.bernoulli(0.5) ? 1 : 0;
            wants[static_cast<std::size_t>(a)] = want;
            literals.emplace_back(attr, want);
        }

        std::vector<bool> is_member(static_cast<std::size_t>(n), false);
        for (int id : member_ids) is_member[static_cast<std::size_t>(id)] = true;
        const std::uint64_t patterns = 1ull << cs.arity;
        for (int id = 0; id < n; ++id) {
            if (is_member[static_cast<std::size_t>(id)]) {
                for (int a = 0; a < cs.arity; ++a) {
                    rows[static_cast<std::size_t>(id)][static_cast<std::size_t>(j * cs.arity + a)] =
                        wants[static_cast<std::size_t>(a)];
                }
            } else {
                // uniform over the non-satisfying attribute patterns
                std::uint64_t pattern;
                do {
                    pattern = static_cast<std::uint64_t>(rng.next_below(static_cast<std::int64_t>(patterns)));
                    bool satisfies = true;
                    for (int a = 0; a < cs.arity; ++a) {
                        const int bit = static_cast<int>((pattern >> a) & 1u);
                        if (bit != wants[static_cast<std::size_t>(a)]) satisfies = false;
                    }
                    if (!satisfies) break;
                } while (true);
                for (int a = 0; a < cs.arity; ++a) {
                    rows[static_cast<std::size_t>(id)][static_cast<std::size_t>(j * cs.arity + a)] =
                        static_cast<double>((pattern >> a) & 1u);
                }
            }
        }
        collection.predicates.push_back(SetPredicate::conjunction(std::move(literals)));
        planted_members.push_back(member_ids);
    }

    GroundTruth truth;
    truth.probs.assign(static_cast<std::size_t>(n), config.truth.base);
    const auto& ts = config.truth;
    if (ts.kind == "constant") {
        // already filled with base
    } else if (ts.kind == "per_set") {
        std::vector<double> offsets = ts.offsets;
        if (offsets.empty()) {
            for (int j = 0; j < cs.conjunction_count; ++j) {
                const double mag = ts.offset_min + (ts.offset_max - ts.offset_min) * rng.next_unit();
                offsets.push_back(rng.bernoulli(0.5) ? mag : -mag);
            }
        }
        if (static_cast<int>(offsets.size()) != cs.conjunction_count) {
            throw std::invalid_argument("per_set truth needs one offset per planted set");
        }
        for (int j = 0; j < cs.conjunction_count; ++j) {
            for (int id : planted_members[static_cast<std::size_t>(j)]) {
                truth.probs[static_cast<std::size_t>(id)] += offsets[static_cast<std::size_t>(j)];
            }
        }
        for (auto& p : truth.probs) {
            if (p < 0.0 || p > 1.0) {
                if (!ts.clip) {
                    throw std::invalid_argument(
                        "per_set offsets push probabilities outside [0,1] and clipping is disabled");
                }
                p = p < 0.0 ? 0.0 : 1.0;
            }
        }
    } else if (ts.kind == "half_qualified") {
        const auto& s = planted_members.front();
        std::vector<int> shuffled = s;
        rng.shuffle(shuffled);
        const std::size_t half = shuffled.size() / 2;
        std::vector<int> qualified(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(half));
        std::sort(qualified.begin(), qualified.end());
        for (int id : s) truth.probs[static_cast<std::size_t>(id)] = 0.0;
        for (int id : qualified) truth.probs[static_cast<std::size_t>(id)] = 1.0;
        if (cs.half_subset) {
            collection.predicates.push_back(SetPredicate::explicit_ids(qualified));
        }
    } else {
        throw std::invalid_argument("unknown truth kind: " + ts.kind);
    }

    if (cs.include_all) collection.predicates.push_back(SetPredicate::all());

    std::vector<AttrKind> schema(static_cast<std::size_t>(dim), AttrKind::Boolean);
    SyntheticInstance inst{Population(std::move(schema), std::move(rows)), std::move(truth),
                           std::move(collection)};
    inst.collection.validate_density(inst.population);
    return inst;
}

GeneratorConfig parse_generator_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed generator config: ") + e.what());
    }
    GeneratorConfig cfg;
    cfg.n = j.at("n").get<int>();
    if (j.contains("collection")) {
        const auto& c = j.at("collection");
        cfg.collection.gamma = c.value("gamma", cfg.collection.gamma);
        cfg.collection.conjunction_count = c.value("count", cfg.collection.conjunction_count);
        cfg.collection.arity = c.value("arity", cfg.collection.arity);
        cfg.collection.density_min = c.value("density_min", cfg.collection.density_min);
        cfg.collection.density_max = c.value("density_max", cfg.collection.density_max);
        cfg.collection.include_all = c.value("include_all", cfg.collection.include_all);
        cfg.collection.half_subset = c.value("half_subset", cfg.collection.half_subset);
    }
    if (j.contains("truth")) {
        const auto& t = j.at("truth");
        cfg.truth.kind = t.value("kind", cfg.truth.kind);
        cfg.truth.base = t.value("base", cfg.truth.base);
        if (t.contains("offsets")) cfg.truth.offsets = t.at("offsets").get<std::vector<double>>();
        cfg.truth.offset_min = t.value("offset_min", cfg.truth.offset_min);
        cfg.truth.offset_max = t.value("offset_max", cfg.truth.offset_max);
        cfg.truth.clip = t.value("clip", cfg.truth.clip);
    }
    return cfg;
}

std::string generator_config_to_json(const GeneratorConfig& config) {
    json j;
    j["n"] = config.n;
    j["collection"] = {{"gamma", config.collection.gamma},
                       {"count", config.collection.conjunction_count},
                       {"arity", config.collection.arity},
                       {"density_min", config.collection.density_min},
                       {"density_max", config.collection.density_max},
                       {"include_all", config.collection.include_all},
                       {"half_subset", config.collection.half_subset}};
    json t;
    t["kind"] = config.truth.kind;
    t["base"] = config.truth.base;
    if (!config.truth.offsets.empty()) t["offsets"] = config.truth.offsets;
    t["offset_min"] = config.truth.offset_min;
    t["offset_max"] = config.truth.offset_max;
    t["clip"] = config.truth.clip;
    j["truth"] = t;
    return j.dump(2);
}

}  // namespace mcal
