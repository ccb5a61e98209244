#include "trec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace trec {

double recall_at_n(const std::vector<int>& ranked,
                   const std::unordered_set<int>& relevant, int n) {
    if (relevant.empty()) throw EmptyRelevant();
    if (n < 1) throw ArgumentError("recall_at_n requires n >= 1");
    size_t depth = std::min<size_t>(static_cast<size_t>(n), ranked.size());
    int hits = 0;
    for (size_t i = 0; i < depth; ++i)
        if (relevant.count(ranked[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_n(const std::vector<int>& ranked,
                 const std::unordered_set<int>& relevant, int n) {
    if (relevant.empty()) throw EmptyRelevant();
    if (n < 1) throw ArgumentError("ndcg_at_n requires n >= 1");
    size_t depth = std::min<size_t>(static_cast<size_t>(n), ranked.size());
    double dcg = 0.0;
    for (size_t i = 0; i < depth; ++i)
        if (relevant.count(ranked[i]))
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    size_t ideal = std::min<size_t>(static_cast<size_t>(n), relevant.size());
    double idcg = 0.0;
    for (size_t i = 0; i < ideal; ++i)
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

MetricsReport evaluate_model(const Scorer& scorer, const Dataset& train,
                             const std::vector<HoldoutTriple>& holdout,
                             const std::vector<int>& cutoffs,
                             bool exclude_train, bool include_cold,
                             int max_pairs) {
    // group holdout positives by (user, interval)
    std::map<std::pair<int, int>, std::unordered_set<int>> by_pair;
    for (const auto& h : holdout) {
        if (h.cold && !include_cold) continue;
        by_pair[{h.p, h.r}].insert(h.q);
    }

    MetricsReport report;
    report.cutoffs = cutoffs;
    report.exclude_train = exclude_train;
    report.include_cold = include_cold;
    for (int n : cutoffs) report.by_cutoff[n] = {0.0, 0.0};
    if (by_pair.empty()) return report;

    int max_cutoff = *std::max_element(cutoffs.begin(), cutoffs.end());
    long evaluated = 0;
    for (const auto& [pr, relevant] : by_pair) {
        if (max_pairs > 0 && evaluated >= max_pairs) break;
        auto ranked =
            top_n(scorer, train, pr.first, pr.second, max_cutoff, exclude_train);
        for (int n : cutoffs) {
            auto& [rec, ndcg] = report.by_cutoff[n];
            rec += recall_at_n(ranked, relevant, n);
            ndcg += ndcg_at_n(ranked, relevant, n);
        }
        ++evaluated;
    }
    for (int n : cutoffs) {
        report.by_cutoff[n].first /= static_cast<double>(evaluated);
        report.by_cutoff[n].second /= static_cast<double>(evaluated);
    }
    report.users_evaluated = evaluated;
    return report;
}

void write_metrics_tsv(
    const std::string& path,
    const std::vector<std::pair<std::string, MetricsReport>>& reports) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "model\tcutoff\trecall\tndcg\tusers_evaluated\n";
    char buf[64];
    for (const auto& [name, report] : reports) {
        for (int n : report.cutoffs) {
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f", report.recall(n),
                          report.ndcg(n));
            out << name << '\t' << n << '\t' << buf << '\t'
                << report.users_evaluated << '\n';
        }
    }
}

std::string compare_models(
    const std::vector<std::pair<std::string, MetricsReport>>& reports,
    const std::string& reference) {
    if (reports.empty()) throw ArgumentError("no reports to compare");
    const MetricsReport* ref = nullptr;
    for (const auto& [name, report] : reports)
        if (name == reference) ref = &report;
    if (ref == nullptr)
        throw ArgumentError("reference model not found: " + reference);
    for (const auto& [name, report] : reports)
        if (report.cutoffs != reports.front().second.cutoffs)
            throw CutoffMismatch("reports do not share cutoffs");

    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %7s %10s %10s %12s %12s\n", "model",
                  "n", "recall", "ndcg", "d_recall", "d_ndcg");
    out << buf;
    auto rel = [](double m, double r) -> std::string {
        if (r == 0.0) return "n/a";
        char b[32];
        std::snprintf(b, sizeof b, "%+.4f", (m - r) / r);
        return b;
    };
    for (const auto& [name, report] : reports) {
        for (int n : report.cutoffs) {
            std::snprintf(buf, sizeof buf, "%-12s %7d %10.6f %10.6f %12s %12s\n",
                          name.c_str(), n, report.recall(n), report.ndcg(n),
                          rel(report.recall(n), ref->recall(n)).c_str(),
                          rel(report.ndcg(n), ref->ndcg(n)).c_str());
            out << buf;
        }
    }
    return out.str();
}

}  // namespace trec
