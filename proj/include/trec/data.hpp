#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trec/common.hpp"

namespace trec {

struct Interaction {
    std::string user;
    std::string item;
    int64_t timestamp = 0;
};

// Weekly (by default) discretization anchored at the Unix epoch so that
// interval indices stay stable when more data is ingested later.
struct TimeGrid {
    int64_t origin = 0;
    int64_t interval_seconds = 604800;
    int num_intervals = 0;

    int index_of(int64_t ts) const {
        int64_t idx = (ts - origin) / interval_seconds;
        if (ts < origin || idx >= num_intervals)
            throw TimestampOutOfGrid("timestamp " + std::to_string(ts) +
                                     " outside grid");
        return static_cast<int>(idx);
    }
};

struct Triple {
    int p = 0;  // user
    int q = 0;  // item
    int r = 0;  // time interval

    bool operator==(const Triple&) const = default;
    bool operator<(const Triple& o) const {
        if (p != o.p) return p < o.p;
        if (q != o.q) return q < o.q;
        return r < o.r;
    }
};

// Indexed positives: the sparse tensor A plus its projections B (user x item)
// and C (time x item), and the per-user / per-interval positive item sets.
struct Dataset {
    int P = 0, Q = 0, R = 0;
    TimeGrid grid;

    std::vector<Triple> triples;  // distinct (p,q,r), sorted

    std::vector<std::vector<int>> user_items;  // Q+_p, sorted item lists
    std::vector<std::vector<int>> time_items;  // Q+_r, sorted item lists

    std::unordered_set<uint64_t> pairs_B;  // keys p*Q+q
    std::unordered_set<uint64_t> pairs_C;  // keys r*Q+q

    std::vector<std::string> user_ids, item_ids;
    std::unordered_map<std::string, int> user_index, item_index;

    uint64_t pair_key(int a, int q) const {
        return static_cast<uint64_t>(a) * static_cast<uint64_t>(Q) +
               static_cast<uint64_t>(q);
    }
    bool user_has_item(int p, int q) const {
        return pairs_B.count(pair_key(p, q)) != 0;
    }
    bool time_has_item(int r, int q) const {
        return pairs_C.count(pair_key(r, q)) != 0;
    }

    // Hash of the vocabularies plus R; embedded in checkpoints so that
    // evaluation can detect a dataset mismatch.
    uint64_t vocab_hash() const;
};

struct HoldoutTriple {
    int p = 0, q = 0, r = 0;
    bool cold = false;  // user or item absent from the train split
};

struct Split {
    Dataset train;
    std::vector<HoldoutTriple> validation;
    std::vector<HoldoutTriple> test;
    uint64_t seed = 0;
    double ratio_train = 0.8, ratio_val = 0.1, ratio_test = 0.1;
};

std::vector<Interaction> parse_interactions(std::istream& in);

// Iteratively drops users/items with fewer than k remaining records until a
// fixed point. k=1 is a no-op; the result may be empty.
std::vector<Interaction> kcore_filter(std::vector<Interaction> interactions,
                                      int k);

TimeGrid build_time_grid(const std::vector<Interaction>& interactions,
                         int64_t interval_seconds);

Dataset build_dataset(const std::vector<Interaction>& interactions,
                      const TimeGrid& grid);

Split split_dataset(const Dataset& full, double ratio_train, double ratio_val,
                    double ratio_test, uint64_t seed);

// On-disk layout: manifest.txt, users.tsv, items.tsv, train.tsv,
// validation.tsv, test.tsv under one directory.
void save_split(const std::string& dir, const Split& split);
Split load_split(const std::string& dir);

}  // namespace trec
