#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trec/data.hpp"
#include "trec/features.hpp"

namespace trec {

// Planted-structure corpus: G user groups x G item style groups with elevated
// purchase probability on matching groups, plus per-group seasonal modulation
// of item activity across intervals. Item features come from the same group
// labels, so feature similarity encodes the planted structure.
struct SynthConfig {
    int users = 200;
    int items = 300;
    int intervals = 8;
    int groups = 4;
    double density = 0.005;       // expected fill rate of the tensor
    double affinity_boost = 4.0;  // matching-group purchase multiplier
    double season_amp = 0.6;      // seasonal modulation amplitude, in [0,1)
    int feature_dim = 32;
    double feature_noise = 0.25;
    int64_t interval_seconds = 604800;
    uint64_t seed = 7;
};

struct SynthCorpus {
    std::vector<Interaction> interactions;
    std::vector<int> user_group;  // size users
    std::vector<int> item_group;  // size items
    std::vector<std::string> item_ids;  // all generated raw ids
    FeatureMatrix features;             // column i = features of item_ids[i]
};

SynthCorpus synth_corpus(const SynthConfig& config);

}  // namespace trec
