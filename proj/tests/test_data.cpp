#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "trec/data.hpp"

using namespace trec;

namespace {

Interaction mk(const std::string& u, const std::string& i, int64_t ts) {
    return {u, i, ts};
}

}  // namespace

TEST_CASE("parse_interactions handles well-formed input") {
    std::istringstream in("u1\ti9\t1300000000\n");
    auto recs = parse_interactions(in);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].user == "u1");
    CHECK(recs[0].item == "i9");
    CHECK(recs[0].timestamp == 1300000000);
}

TEST_CASE("parse_interactions skips comments and blank lines") {
    std::istringstream in("# header\n\nu1\ti1\t5\nu2\ti2\t6\n");
    auto recs = parse_interactions(in);
    CHECK(recs.size() == 2);
}

TEST_CASE("parse_interactions rejects empty input") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_interactions(in), EmptyInput);
    std::istringstream only_comments("# nothing\n");
    CHECK_THROWS_AS(parse_interactions(only_comments), EmptyInput);
}

TEST_CASE("parse_interactions reports the offending line") {
    std::istringstream in("u1\ti9\n");
    try {
        parse_interactions(in);
        FAIL("expected MalformedLine");
    } catch (const MalformedLine& e) {
        CHECK(e.line_no == 1);
    }
    std::istringstream later("u1\ti1\t5\nbad line\n");
    try {
        parse_interactions(later);
        FAIL("expected MalformedLine");
    } catch (const MalformedLine& e) {
        CHECK(e.line_no == 2);
    }
}

TEST_CASE("kcore_filter k=1 is a no-op") {
    std::vector<Interaction> recs = {mk("u1", "i1", 0), mk("u2", "i2", 1)};
    auto out = kcore_filter(recs, 1);
    CHECK(out.size() == 2);
}

TEST_CASE("kcore_filter cascades to the empty set") {
    // u2 has 1 record; removing it leaves i1 with 1 record, which removes u1
    std::vector<Interaction> recs = {mk("u1", "i1", 0), mk("u1", "i2", 1),
                                     mk("u2", "i1", 2)};
    CHECK(kcore_filter(recs, 2).empty());
}

TEST_CASE("kcore_filter keeps a complete bipartite block") {
    std::vector<Interaction> recs = {mk("u1", "i1", 0), mk("u1", "i2", 1),
                                     mk("u2", "i1", 2), mk("u2", "i2", 3)};
    CHECK(kcore_filter(recs, 2).size() == 4);
}

TEST_CASE("kcore_filter is idempotent") {
    Rng rng(42);
    std::vector<Interaction> recs;
    for (int i = 0; i < 120; ++i)
        recs.push_back(mk("u" + std::to_string(rng.next_int(15)),
                          "i" + std::to_string(rng.next_int(20)),
                          rng.next_int(1000)));
    auto once = kcore_filter(recs, 3);
    auto twice = kcore_filter(once, 3);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].user == twice[i].user);
        CHECK(once[i].item == twice[i].item);
    }
    // fixed point reached: every survivor has >= 3 records on both sides
    std::map<std::string, int> uc, ic;
    for (const auto& r : once) {
        ++uc[r.user];
        ++ic[r.item];
    }
    for (const auto& [u, c] : uc) CHECK(c >= 3);
    for (const auto& [i, c] : ic) CHECK(c >= 3);
}

TEST_CASE("build_time_grid covers observed timestamps") {
    SUBCASE("single interval") {
        auto g = build_time_grid({mk("u", "i", 0), mk("u", "i", 604799)},
                                 604800);
        CHECK(g.origin == 0);
        CHECK(g.num_intervals == 1);
    }
    SUBCASE("boundary lands in the next interval") {
        auto g =
            build_time_grid({mk("u", "i", 0), mk("u", "i", 604800)}, 604800);
        CHECK(g.num_intervals == 2);
    }
    SUBCASE("origin anchored at an epoch-aligned boundary") {
        auto g = build_time_grid(
            {mk("u", "i", 1209600), mk("u", "i", 1814400)}, 604800);
        CHECK(g.origin == 1209600);
        CHECK(g.num_intervals == 2);
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(build_time_grid({}, 604800), EmptyInput);
    }
}

TEST_CASE("time grid index is monotone in the timestamp") {
    auto g = build_time_grid({mk("u", "i", 100), mk("u", "i", 5000000)}, 604800);
    int prev = 0;
    for (int64_t ts = 100; ts <= 5000000; ts += 37777) {
        int idx = g.index_of(ts);
        CHECK(idx >= prev);
        prev = idx;
    }
    // origin is epoch-aligned, so anything below it is out of the grid
    CHECK(g.origin == 0);
    CHECK_THROWS_AS(g.index_of(-1), TimestampOutOfGrid);
    CHECK_THROWS_AS(g.index_of(g.origin +
                               g.interval_seconds * g.num_intervals),
                    TimestampOutOfGrid);

    auto shifted = build_time_grid({mk("u", "i", 1300000)}, 604800);
    CHECK(shifted.origin == 1209600);
    CHECK_THROWS_AS(shifted.index_of(1209599), TimestampOutOfGrid);
}

TEST_CASE("build_dataset basic counts and projections") {
    SUBCASE("single interaction") {
        auto recs = std::vector<Interaction>{mk("u1", "i1", 10)};
        auto ds = build_dataset(recs, build_time_grid(recs, 604800));
        CHECK(ds.P == 1);
        CHECK(ds.Q == 1);
        CHECK(ds.triples.size() == 1);
        CHECK(ds.pairs_B.size() == 1);
        CHECK(ds.pairs_C.size() == 1);
    }
    SUBCASE("same pair in two weeks collapses in B only") {
        auto recs = std::vector<Interaction>{mk("u1", "i1", 0),
                                             mk("u1", "i1", 604800)};
        auto ds = build_dataset(recs, build_time_grid(recs, 604800));
        CHECK(ds.triples.size() == 2);
        CHECK(ds.pairs_B.size() == 1);
        CHECK(ds.pairs_C.size() == 2);
    }
    SUBCASE("projections enumerated by hand") {
        auto recs = std::vector<Interaction>{mk("u1", "i1", 0), mk("u1", "i2", 1),
                                             mk("u2", "i1", 2)};
        auto ds = build_dataset(recs, build_time_grid(recs, 604800));
        CHECK(ds.pairs_B.size() == 3);
        CHECK(ds.user_items[ds.user_index.at("u1")] ==
              std::vector<int>{ds.item_index.at("i1"), ds.item_index.at("i2")});
    }
    SUBCASE("duplicate triples collapse") {
        auto recs =
            std::vector<Interaction>{mk("u1", "i1", 10), mk("u1", "i1", 20)};
        auto ds = build_dataset(recs, build_time_grid(recs, 604800));
        CHECK(ds.triples.size() == 1);
    }
}

TEST_CASE("dataset projections match brute force") {
    Rng rng(7);
    std::vector<Interaction> recs;
    for (int i = 0; i < 300; ++i)
        recs.push_back(mk("u" + std::to_string(rng.next_int(12)),
                          "i" + std::to_string(rng.next_int(18)),
                          static_cast<int64_t>(rng.next_int(6)) * 604800 +
                              rng.next_int(604800)));
    auto ds = build_dataset(recs, build_time_grid(recs, 604800));

    std::set<std::pair<int, int>> b, c;
    for (const auto& t : ds.triples) {
        b.insert({t.p, t.q});
        c.insert({t.r, t.q});
    }
    CHECK(ds.pairs_B.size() == b.size());
    CHECK(ds.pairs_C.size() == c.size());
    for (const auto& [p, q] : b) CHECK(ds.user_has_item(p, q));
    for (const auto& [r, q] : c) CHECK(ds.time_has_item(r, q));

    // Q+_p / Q+_r are exactly the row sets
    for (int p = 0; p < ds.P; ++p)
        for (int q : ds.user_items[p]) CHECK(b.count({p, q}) == 1);
    size_t row_total = 0;
    for (const auto& row : ds.user_items) row_total += row.size();
    CHECK(row_total == b.size());
}

TEST_CASE("split_dataset ratios and determinism") {
    Rng rng(11);
    std::vector<Interaction> recs;
    while (recs.size() < 200)
        recs.push_back(mk("u" + std::to_string(rng.next_int(20)),
                          "i" + std::to_string(rng.next_int(30)),
                          static_cast<int64_t>(rng.next_int(4)) * 604800));
    auto ds = build_dataset(recs, build_time_grid(recs, 604800));

    SUBCASE("all-train") {
        auto split = split_dataset(ds, 1.0, 0.0, 0.0, 3);
        CHECK(split.train.triples.size() == ds.triples.size());
        CHECK(split.validation.empty());
        CHECK(split.test.empty());
    }
    SUBCASE("bad ratios") {
        CHECK_THROWS_AS(split_dataset(ds, 0.5, 0.1, 0.1, 3), RatioError);
    }
    SUBCASE("exact division") {
        std::vector<Interaction> ten;
        for (int i = 0; i < 10; ++i)
            ten.push_back(mk("u" + std::to_string(i), "i" + std::to_string(i),
                             static_cast<int64_t>(i) * 604800));
        auto small = build_dataset(ten, build_time_grid(ten, 604800));
        auto split = split_dataset(small, 0.8, 0.1, 0.1, 5);
        CHECK(split.train.triples.size() == 8);
        CHECK(split.validation.size() == 1);
        CHECK(split.test.size() == 1);
    }
    SUBCASE("same seed gives the identical split") {
        auto a = split_dataset(ds, 0.8, 0.1, 0.1, 9);
        auto b = split_dataset(ds, 0.8, 0.1, 0.1, 9);
        CHECK(a.train.triples == b.train.triples);
        REQUIRE(a.test.size() == b.test.size());
        for (size_t i = 0; i < a.test.size(); ++i) {
            CHECK(a.test[i].p == b.test[i].p);
            CHECK(a.test[i].q == b.test[i].q);
        }
    }
    SUBCASE("partition property across seeds") {
        for (uint64_t seed = 0; seed < 100; ++seed) {
            auto split = split_dataset(ds, 0.8, 0.1, 0.1, seed);
            std::set<Triple> seen;
            for (const auto& t : split.train.triples) seen.insert(t);
            size_t train_n = seen.size();
            CHECK(train_n == split.train.triples.size());
            for (const auto& h : split.validation)
                CHECK(seen.insert({h.p, h.q, h.r}).second);
            for (const auto& h : split.test)
                CHECK(seen.insert({h.p, h.q, h.r}).second);
            CHECK(seen.size() == ds.triples.size());
        }
    }
}

TEST_CASE("cold-start holdout triples are flagged, not dropped") {
    // u0 dominates; one singleton user must land in a holdout when it is not
    // in train
    std::vector<Interaction> recs;
    for (int i = 0; i < 9; ++i)
        recs.push_back(mk("u0", "i" + std::to_string(i), 0));
    recs.push_back(mk("lonely", "i0", 0));
    auto ds = build_dataset(recs, build_time_grid(recs, 604800));
    bool saw_cold = false;
    for (uint64_t seed = 0; seed < 50 && !saw_cold; ++seed) {
        auto split = split_dataset(ds, 0.8, 0.1, 0.1, seed);
        int lonely = ds.user_index.at("lonely");
        for (const auto& hs : {split.validation, split.test})
            for (const auto& h : hs)
                if (h.p == lonely) {
                    CHECK(h.cold);
                    saw_cold = true;
                }
    }
    CHECK(saw_cold);
}

TEST_CASE("split save/load round-trip") {
    std::vector<Interaction> recs;
    Rng rng(4);
    for (int i = 0; i < 80; ++i)
        recs.push_back(mk("u" + std::to_string(rng.next_int(8)),
                          "i" + std::to_string(rng.next_int(12)),
                          static_cast<int64_t>(rng.next_int(3)) * 604800));
    auto ds = build_dataset(recs, build_time_grid(recs, 604800));
    auto split = split_dataset(ds, 0.8, 0.1, 0.1, 2);

    std::string dir = "test_split_dir";
    save_split(dir, split);
    auto loaded = load_split(dir);
    CHECK(loaded.train.P == split.train.P);
    CHECK(loaded.train.Q == split.train.Q);
    CHECK(loaded.train.R == split.train.R);
    CHECK(loaded.train.triples == split.train.triples);
    CHECK(loaded.train.vocab_hash() == split.train.vocab_hash());
    CHECK(loaded.validation.size() == split.validation.size());
    CHECK(loaded.test.size() == split.test.size());
}
