#include "trec/synth.hpp"

#include <cmath>
#include <cstdio>

namespace trec {

SynthCorpus synth_corpus(const SynthConfig& cfg) {
    if (cfg.users < 1 || cfg.items < 1 || cfg.intervals < 1 || cfg.groups < 1)
        throw ArgumentError("synth corpus sizes must be positive");
    if (cfg.density <= 0.0 || cfg.density >= 1.0)
        throw ArgumentError("synth density must be in (0, 1)");

    const int G = cfg.groups;
    SynthCorpus corpus;
    Rng rng(cfg.seed);

    corpus.user_group.resize(cfg.users);
    for (int& g : corpus.user_group) g = rng.next_int(G);
    corpus.item_group.resize(cfg.items);
    for (int& g : corpus.item_group) g = rng.next_int(G);

    char buf[32];
    corpus.item_ids.reserve(cfg.items);
    for (int i = 0; i < cfg.items; ++i) {
        std::snprintf(buf, sizeof buf, "i%04d", i);
        corpus.item_ids.emplace_back(buf);
    }

    // mean affinity over groups is 1 so the expected positive count stays
    // near users*items*intervals*density
    double boost = std::min(cfg.affinity_boost, static_cast<double>(G));
    double off = G > 1 ? (G - boost) / static_cast<double>(G - 1) : 1.0;
    const double two_pi = 2.0 * 3.14159265358979323846;

    for (int p = 0; p < cfg.users; ++p) {
        std::snprintf(buf, sizeof buf, "u%04d", p);
        std::string user_id = buf;
        for (int q = 0; q < cfg.items; ++q) {
            double affinity =
                corpus.user_group[p] == corpus.item_group[q] ? boost : off;
            double phase = static_cast<double>(corpus.item_group[q]) / G;
            for (int r = 0; r < cfg.intervals; ++r) {
                double season =
                    1.0 + cfg.season_amp *
                              std::cos(two_pi * (static_cast<double>(r) /
                                                     cfg.intervals -
                                                 phase));
                double prob = cfg.density * affinity * season;
                if (rng.next_double() < prob) {
                    int64_t ts =
                        static_cast<int64_t>(r) * cfg.interval_seconds +
                        static_cast<int64_t>(
                            rng.next_double() * (cfg.interval_seconds - 1));
                    corpus.interactions.push_back(
                        {user_id, corpus.item_ids[q], ts});
                }
            }
        }
    }

    corpus.features =
        planted_features(corpus.item_group, G, cfg.feature_dim,
                         cfg.feature_noise, splitmix64(cfg.seed ^ 0xfea7ULL));
    return corpus;
}

}  // namespace trec
