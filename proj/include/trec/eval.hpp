#pragma once

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "trec/data.hpp"
#include "trec/models.hpp"

namespace trec {

struct MetricsReport {
    std::vector<int> cutoffs;
    std::map<int, std::pair<double, double>> by_cutoff;  // n -> (recall, ndcg)
    long users_evaluated = 0;  // (user, interval) pairs
    bool exclude_train = true;
    bool include_cold = false;

    double recall(int n) const { return by_cutoff.at(n).first; }
    double ndcg(int n) const { return by_cutoff.at(n).second; }
};

double recall_at_n(const std::vector<int>& ranked,
                   const std::unordered_set<int>& relevant, int n);

// Binary-gain DCG with log2(i+1) discount, IDCG truncated at
// min(n, |relevant|).
double ndcg_at_n(const std::vector<int>& ranked,
                 const std::unordered_set<int>& relevant, int n);

// Ranks items per holdout (user, interval) pair and macro-averages both
// metrics over pairs. max_pairs > 0 caps the number of evaluated pairs
// (deterministically, in sorted (p, r) order) for sampled evaluation during
// training.
MetricsReport evaluate_model(const Scorer& scorer, const Dataset& train,
                             const std::vector<HoldoutTriple>& holdout,
                             const std::vector<int>& cutoffs,
                             bool exclude_train = true,
                             bool include_cold = false, int max_pairs = 0);

// model \t cutoff \t recall \t ndcg \t users_evaluated
void write_metrics_tsv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>&
                           reports);

// Aligned table with relative improvement over the named reference model.
std::string compare_models(
    const std::vector<std::pair<std::string, MetricsReport>>& reports,
    const std::string& reference);

}  // namespace trec
