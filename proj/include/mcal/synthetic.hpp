#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcal/population.hpp"

namespace mcal {

/// Planted-conjunction collection: each set gets its own block of boolean
/// attributes and an exact membership list matched to a target density, so
/// the sets overlap haphazardly while densities stay controlled.
struct CollectionSpec {
    double gamma = 0.1;
    int conjunction_count = 10;
    int arity = 2;
    double density_min = 0.15;
    double density_max = 0.45;
    bool include_all = false;
    bool half_subset = false;  // also emit the qualified half as an explicit set
};

struct TruthSpec {
    // constant: every probability equals `base`
    // per_set:  base plus one signed offset per planted set, clipped on request
    // half_qualified: probability 1 on a random half of set 0, 0 on the rest
    //                 of set 0, `base` outside
    std::string kind = "per_set";
    double base = 0.5;
    std::vector<double> offsets;   // per planted set; empty = draw magnitudes below
    double offset_min = 0.1;
    double offset_max = 0.3;
    bool clip = true;
};

struct GeneratorConfig {
    int n = 1000;
    CollectionSpec collection;
    TruthSpec truth;
};

struct SyntheticInstance {
    Population population;
    GroundTruth truth;
    SubsetCollection collection;
};

/// Deterministic in (config, seed). Throws on inconsistent configs, e.g.
/// offsets leaving [0,1] with clipping disabled or a density floor the
/// planted sets cannot honor.
SyntheticInstance generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

GeneratorConfig parse_generator_config(const std::string& json_text);
std::string generator_config_to_json(const GeneratorConfig& config);

}  // namespace mcal
