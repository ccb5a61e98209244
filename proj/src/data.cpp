#include "trec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace trec {

uint64_t Dataset::vocab_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& u : user_ids) {
        h = fnv1a64(u, h);
        h = fnv1a64("\x1f", h);
    }
    h = fnv1a64("\x1e", h);
    for (const auto& it : item_ids) {
        h = fnv1a64(it, h);
        h = fnv1a64("\x1f", h);
    }
    h = fnv1a64(std::to_string(R), h);
    return h;
}

std::vector<Interaction> parse_interactions(std::istream& in) {
    std::vector<Interaction> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        size_t tab1 = line.find('\t');
        size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                                : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos ||
            line.find('\t', tab2 + 1) != std::string::npos)
            throw MalformedLine(line_no);
        Interaction rec;
        rec.user = line.substr(0, tab1);
        rec.item = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const char* first = line.data() + tab2 + 1;
        const char* last = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(first, last, rec.timestamp);
        if (ec != std::errc() || ptr != last || rec.timestamp < 0 ||
            rec.user.empty() || rec.item.empty())
            throw MalformedLine(line_no);
        out.push_back(std::move(rec));
    }
    if (out.empty()) throw EmptyInput();
    return out;
}

std::vector<Interaction> kcore_filter(std::vector<Interaction> interactions,
                                      int k) {
    if (k <= 1) return interactions;
    bool changed = true;
    while (changed && !interactions.empty()) {
        changed = false;
        std::unordered_map<std::string, int> user_count, item_count;
        for (const auto& rec : interactions) {
            ++user_count[rec.user];
            ++item_count[rec.item];
        }
        std::vector<Interaction> kept;
        kept.reserve(interactions.size());
        for (auto& rec : interactions) {
            if (user_count[rec.user] >= k && item_count[rec.item] >= k)
                kept.push_back(std::move(rec));
            else
                changed = true;
        }
        interactions = std::move(kept);
    }
    return interactions;
}

TimeGrid build_time_grid(const std::vector<Interaction>& interactions,
                         int64_t interval_seconds) {
    if (interactions.empty()) throw EmptyInput();
    int64_t min_ts = interactions.front().timestamp;
    int64_t max_ts = min_ts;
    for (const auto& rec : interactions) {
        min_ts = std::min(min_ts, rec.timestamp);
        max_ts = std::max(max_ts, rec.timestamp);
    }
    TimeGrid grid;
    grid.interval_seconds = interval_seconds;
    grid.origin = (min_ts / interval_seconds) * interval_seconds;
    grid.num_intervals =
        static_cast<int>((max_ts - grid.origin) / interval_seconds) + 1;
    return grid;
}

namespace {

void index_triples(Dataset& ds) {
    std::sort(ds.triples.begin(), ds.triples.end());
    ds.triples.erase(std::unique(ds.triples.begin(), ds.triples.end()),
                     ds.triples.end());
    ds.user_items.assign(ds.P, {});
    ds.time_items.assign(ds.R, {});
    ds.pairs_B.clear();
    ds.pairs_C.clear();
    for (const auto& t : ds.triples) {
        if (ds.pairs_B.insert(ds.pair_key(t.p, t.q)).second)
            ds.user_items[t.p].push_back(t.q);
        if (ds.pairs_C.insert(ds.pair_key(t.r, t.q)).second)
            ds.time_items[t.r].push_back(t.q);
    }
    for (auto& v : ds.user_items) std::sort(v.begin(), v.end());
    for (auto& v : ds.time_items) std::sort(v.begin(), v.end());
}

}  // namespace

Dataset build_dataset(const std::vector<Interaction>& interactions,
                      const TimeGrid& grid) {
    Dataset ds;
    ds.grid = grid;
    ds.R = grid.num_intervals;
    for (const auto& rec : interactions) {
        auto [uit, unew] =
            ds.user_index.try_emplace(rec.user, static_cast<int>(ds.user_ids.size()));
        if (unew) ds.user_ids.push_back(rec.user);
        auto [iit, inew] =
            ds.item_index.try_emplace(rec.item, static_cast<int>(ds.item_ids.size()));
        if (inew) ds.item_ids.push_back(rec.item);
        ds.triples.push_back(
            {uit->second, iit->second, grid.index_of(rec.timestamp)});
    }
    ds.P = static_cast<int>(ds.user_ids.size());
    ds.Q = static_cast<int>(ds.item_ids.size());
    index_triples(ds);
    return ds;
}

Split split_dataset(const Dataset& full, double ratio_train, double ratio_val,
                    double ratio_test, uint64_t seed) {
    if (ratio_train <= 0.0 || ratio_val < 0.0 || ratio_test < 0.0 ||
        std::abs(ratio_train + ratio_val + ratio_test - 1.0) > 1e-9)
        throw RatioError("split ratios must be positive and sum to 1");

    std::vector<Triple> shuffled = full.triples;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const size_t n = shuffled.size();
    size_t n_train = static_cast<size_t>(std::llround(ratio_train * n));
    size_t n_val = static_cast<size_t>(std::llround(ratio_val * n));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    Split split;
    split.seed = seed;
    split.ratio_train = ratio_train;
    split.ratio_val = ratio_val;
    split.ratio_test = ratio_test;

    split.train = full;
    split.train.triples.assign(shuffled.begin(), shuffled.begin() + n_train);
    index_triples(split.train);

    std::vector<bool> user_in_train(full.P, false), item_in_train(full.Q, false);
    for (const auto& t : split.train.triples) {
        user_in_train[t.p] = true;
        item_in_train[t.q] = true;
    }
    auto holdout = [&](size_t begin, size_t end) {
        std::vector<HoldoutTriple> out;
        out.reserve(end - begin);
        for (size_t i = begin; i < end; ++i) {
            const Triple& t = shuffled[i];
            out.push_back(
                {t.p, t.q, t.r, !user_in_train[t.p] || !item_in_train[t.q]});
        }
        return out;
    };
    split.validation = holdout(n_train, n_train + n_val);
    split.test = holdout(n_train + n_val, n);
    return split;
}

// --- on-disk split ----------------------------------------------------------

namespace {

void write_holdout(const std::string& path,
                   const std::vector<HoldoutTriple>& hs) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const auto& h : hs)
        out << h.p << '\t' << h.q << '\t' << h.r << '\t' << (h.cold ? 1 : 0)
            << '\n';
}

std::vector<HoldoutTriple> read_holdout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::vector<HoldoutTriple> out;
    HoldoutTriple h;
    int cold;
    while (in >> h.p >> h.q >> h.r >> cold) {
        h.cold = cold != 0;
        out.push_back(h);
    }
    return out;
}

void write_vocab(const std::string& path, const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
}

std::vector<std::string> read_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw Error("bad vocab line in " + path);
        ids.push_back(line.substr(tab + 1));
    }
    return ids;
}

}  // namespace

void save_split(const std::string& dir, const Split& split) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const Dataset& ds = split.train;

    char buf[64];
    std::ofstream man(dir + "/manifest.txt");
    if (!man) throw Error("cannot write manifest in " + dir);
    man << "P=" << ds.P << "\nQ=" << ds.Q << "\nR=" << ds.R
        << "\norigin=" << ds.grid.origin
        << "\ninterval_seconds=" << ds.grid.interval_seconds
        << "\ntrain_triples=" << ds.triples.size()
        << "\nvalidation_triples=" << split.validation.size()
        << "\ntest_triples=" << split.test.size() << "\nseed=" << split.seed;
    std::snprintf(buf, sizeof buf, "\nratios=%.6f,%.6f,%.6f", split.ratio_train,
                  split.ratio_val, split.ratio_test);
    man << buf << "\nvocab_hash=" << ds.vocab_hash() << "\n";

    write_vocab(dir + "/users.tsv", ds.user_ids);
    write_vocab(dir + "/items.tsv", ds.item_ids);

    std::ofstream tr(dir + "/train.tsv");
    if (!tr) throw Error("cannot write train.tsv in " + dir);
    for (const auto& t : ds.triples)
        tr << t.p << '\t' << t.q << '\t' << t.r << '\n';

    write_holdout(dir + "/validation.tsv", split.validation);
    write_holdout(dir + "/test.tsv", split.test);
}

Split load_split(const std::string& dir) {
    std::ifstream man(dir + "/manifest.txt");
    if (!man) throw Error("cannot read manifest in " + dir);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(man, line)) {
        size_t eq = line.find('=');
        if (eq != std::string::npos)
            kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    Split split;
    Dataset& ds = split.train;
    ds.P = std::stoi(kv.at("P"));
    ds.Q = std::stoi(kv.at("Q"));
    ds.R = std::stoi(kv.at("R"));
    ds.grid.origin = std::stoll(kv.at("origin"));
    ds.grid.interval_seconds = std::stoll(kv.at("interval_seconds"));
    ds.grid.num_intervals = ds.R;
    split.seed = std::stoull(kv.at("seed"));
    if (auto it = kv.find("ratios"); it != kv.end()) {
        std::sscanf(it->second.c_str(), "%lf,%lf,%lf", &split.ratio_train,
                    &split.ratio_val, &split.ratio_test);
    }

    ds.user_ids = read_vocab(dir + "/users.tsv");
    ds.item_ids = read_vocab(dir + "/items.tsv");
    if (static_cast<int>(ds.user_ids.size()) != ds.P ||
        static_cast<int>(ds.item_ids.size()) != ds.Q)
        throw Error("vocab size does not match manifest in " + dir);
    for (size_t i = 0; i < ds.user_ids.size(); ++i)
        ds.user_index[ds.user_ids[i]] = static_cast<int>(i);
    for (size_t i = 0; i < ds.item_ids.size(); ++i)
        ds.item_index[ds.item_ids[i]] = static_cast<int>(i);

    std::ifstream tr(dir + "/train.tsv");
    if (!tr) throw Error("cannot read train.tsv in " + dir);
    Triple t;
    while (tr >> t.p >> t.q >> t.r) ds.triples.push_back(t);
    index_triples(ds);

    split.validation = read_holdout(dir + "/validation.tsv");
    split.test = read_holdout(dir + "/test.tsv");
    return split;
}

}  // namespace trec
