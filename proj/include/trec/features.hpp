#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trec/data.hpp"
#include "trec/matrix.hpp"

namespace trec {

// Per-item dense side features (the K x Q matrix F). Blocks are opaque:
// the loader never looks inside them.
struct FeatureMatrix {
    int K = 0;
    int Q = 0;
    Matrix data;  // K x Q, column q = feature vector of item q
    std::vector<std::pair<std::string, int>> block_dims;

    const double* item(int q) const { return data.col(q); }
};

enum class FeatureNorm { none, per_dim_standardize, unit_l2_column };

// Binary format: magic "TRECFEA1", u32 K, u32 Q_file, then Q_file records of
// (u16 raw-id length, raw-id bytes, K float32). Extra items are ignored;
// every dataset item must be present. Columns come back in vocab order.
FeatureMatrix load_features(std::istream& in, const Dataset& dataset);
void save_features(std::ostream& out, const FeatureMatrix& features,
                   const std::vector<std::string>& item_ids);

// TSV fallback: raw_id followed by K decimal floats per line.
FeatureMatrix load_features_tsv(std::istream& in, const Dataset& dataset);

FeatureMatrix normalize_features(const FeatureMatrix& features,
                                 FeatureNorm mode);

struct PlantedSpec {
    int groups = 4;
    double noise = 0.25;
};

struct SynthFeatures {
    FeatureMatrix features;
    std::vector<int> group;  // item -> group label; empty when unplanted
};

// Without planting: i.i.d. standard normal entries. With planting: each item
// gets one of G group centroids plus noise, so feature similarity encodes
// group membership.
SynthFeatures synth_features(int num_items, int dim, uint64_t seed);
SynthFeatures synth_features(int num_items, int dim, const PlantedSpec& spec,
                             uint64_t seed);

// Planted features for caller-supplied group labels (labels in [0, groups)).
FeatureMatrix planted_features(const std::vector<int>& item_group, int groups,
                               int dim, double noise, uint64_t seed);

}  // namespace trec
