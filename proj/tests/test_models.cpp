#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "trec/models.hpp"
#include "trec/training.hpp"

using namespace trec;

namespace {

ModelParams make_params(Variant variant, int P, int Q, int R, int K1, int K2,
                        int K) {
    TrainConfig cfg;
    cfg.K1 = K1;
    cfg.K2 = K2;
    cfg.init_scale = 0.0;
    return init_params(variant, cfg, P, Q, R, K, 0);
}

FeatureMatrix make_features(int K, int Q, uint64_t seed) {
    return synth_features(Q, K, seed).features;
}

Dataset tiny_dataset(int P, int Q, int R, int count, uint64_t seed) {
    Rng rng(seed);
    std::vector<Interaction> recs;
    for (int i = 0; i < count; ++i)
        recs.push_back({"u" + std::to_string(rng.next_int(P)),
                        "i" + std::to_string(rng.next_int(Q)),
                        static_cast<int64_t>(rng.next_int(R)) * 604800});
    // force full vocab so dims are predictable
    for (int p = 0; p < P; ++p)
        recs.push_back({"u" + std::to_string(p), "i0", 0});
    for (int q = 0; q < Q; ++q)
        recs.push_back({"u0", "i" + std::to_string(q), 0});
    recs.push_back({"u0", "i0",
                    static_cast<int64_t>(R - 1) * 604800});
    return build_dataset(recs, build_time_grid(recs, 604800));
}

}  // namespace

TEST_CASE("predict_dcf scalar cases") {
    auto m = make_params(Variant::dcf, 1, 1, 1, 1, 1, 0);
    CHECK(predict_dcf(m, 0, 0, 0) == 0.0);
    m.U(0, 0) = 1.0;
    m.V(0, 0) = 2.0;
    m.T(0, 0) = 3.0;
    m.W(0, 0) = 4.0;
    CHECK(predict_dcf(m, 0, 0, 0) == 24.0);
    CHECK_THROWS_AS(predict_dcf(m, 1, 0, 0), IndexOutOfRange);
}

TEST_CASE("predict_dcfa scalar case and reduction to dcf") {
    auto m = make_params(Variant::dcfa, 1, 1, 1, 1, 1, 1);
    FeatureMatrix f;
    f.K = 1;
    f.Q = 1;
    f.data = Matrix(1, 1);
    f.data(0, 0) = 3.0;
    m.M(0, 0) = 2.0;
    m.N(0, 0) = 5.0;
    CHECK(predict_dcfa(m, f, 0, 0, 0) == 90.0);  // (2*3)(5*3)

    // M = N = 0 reduces exactly to dcf on random factors
    auto big = make_params(Variant::dcfa, 5, 6, 4, 3, 2, 4);
    oracle::randomize(big, 17);
    big.M.set_zero();
    big.N.set_zero();
    auto dcf = make_params(Variant::dcf, 5, 6, 4, 3, 2, 0);
    dcf.U = big.U;
    dcf.V = big.V;
    dcf.T = big.T;
    dcf.W = big.W;
    auto bigf = make_features(4, 6, 3);
    for (int p = 0; p < 5; ++p)
        for (int q = 0; q < 6; ++q)
            for (int r = 0; r < 4; ++r)
                CHECK(predict_dcfa(big, bigf, p, q, r) ==
                      predict_dcf(dcf, p, q, r));
}

TEST_CASE("negating T and W leaves dcf unchanged") {
    auto m = make_params(Variant::dcf, 4, 5, 3, 3, 3, 0);
    oracle::randomize(m, 23);
    auto flipped = m;
    for (double& x : flipped.T.data) x = -x;
    for (double& x : flipped.W.data) x = -x;
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 5; ++q)
            for (int r = 0; r < 3; ++r)
                CHECK(predict_dcf(m, p, q, r) ==
                      doctest::Approx(predict_dcf(flipped, p, q, r))
                          .epsilon(1e-15));
}

TEST_CASE("coupled-matrix predictors") {
    auto m = make_params(Variant::dcf, 1, 1, 1, 1, 1, 0);
    CHECK(predict_B(m, nullptr, 0, 0) == 0.0);
    m.U(0, 0) = 2.0;
    m.V(0, 0) = 3.0;
    CHECK(predict_B(m, nullptr, 0, 0) == 6.0);

    auto a = make_params(Variant::dcfa, 4, 5, 3, 3, 2, 4);
    oracle::randomize(a, 31);
    auto f = make_features(4, 5, 8);
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 5; ++q)
            CHECK(predict_B(a, &f, p, q) ==
                  doctest::Approx(oracle::b_hat(a, &f, p, q)).epsilon(1e-12));
    for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 5; ++q)
            CHECK(predict_C(a, &f, r, q) ==
                  doctest::Approx(oracle::c_hat(a, &f, r, q)).epsilon(1e-12));
}

TEST_CASE("baseline predictor hand cases") {
    SUBCASE("cp scalar") {
        auto m = make_params(Variant::cp, 1, 1, 1, 1, 1, 0);
        m.U(0, 0) = 2.0;
        m.V(0, 0) = 3.0;
        m.T(0, 0) = 4.0;
        CHECK(predict_baseline(m, nullptr, 0, 0, 0) == 24.0);
    }
    SUBCASE("pitf with only the user-item pair set") {
        auto m = make_params(Variant::pitf, 1, 1, 1, 1, 1, 0);
        m.U(0, 0) = 1.0;
        m.V(0, 0) = 5.0;
        CHECK(predict_baseline(m, nullptr, 0, 0, 0) == 5.0);
    }
    SUBCASE("tucker 1x1x1") {
        auto m = make_params(Variant::tucker, 1, 1, 1, 1, 1, 1);
        m.core = {2.0};
        m.U(0, 0) = m.V(0, 0) = m.T(0, 0) = 1.0;
        CHECK(predict_baseline(m, nullptr, 0, 0, 0) == 2.0);
    }
    SUBCASE("vbpr without features is refused") {
        auto m = make_params(Variant::vbpr, 2, 2, 1, 2, 2, 3);
        CHECK_THROWS_AS(predict_baseline(m, nullptr, 0, 0, 0),
                        VariantMismatch);
    }
    SUBCASE("rand is deterministic per (seed,p,q,r)") {
        ModelParams m;
        m.variant = Variant::random;
        m.P = 3;
        m.Q = 3;
        m.R = 3;
        m.seed = 42;
        double a = predict_baseline(m, nullptr, 1, 2, 0);
        CHECK(a == predict_baseline(m, nullptr, 1, 2, 0));
        CHECK(a != predict_baseline(m, nullptr, 2, 1, 0));
    }
}

TEST_CASE("every predictor matches the naive oracle on a full grid") {
    const int P = 4, Q = 5, R = 3;
    auto f = make_features(4, Q, 77);

    auto check_grid = [&](const ModelParams& m, auto&& expected) {
        for (int p = 0; p < P; ++p)
            for (int q = 0; q < Q; ++q)
                for (int r = 0; r < R; ++r)
                    CHECK(predict(m, &f, p, q, r) ==
                          doctest::Approx(expected(p, q, r)).epsilon(1e-12));
    };

    auto dcf = make_params(Variant::dcf, P, Q, R, 3, 2, 0);
    oracle::randomize(dcf, 1);
    check_grid(dcf, [&](int p, int q, int r) { return oracle::dcf(dcf, p, q, r); });

    auto dcfa = make_params(Variant::dcfa, P, Q, R, 3, 2, 4);
    oracle::randomize(dcfa, 2);
    check_grid(dcfa,
               [&](int p, int q, int r) { return oracle::dcfa(dcfa, f, p, q, r); });

    auto cp = make_params(Variant::cp, P, Q, R, 3, 3, 0);
    oracle::randomize(cp, 3);
    check_grid(cp, [&](int p, int q, int r) { return oracle::cp(cp, p, q, r); });

    auto pitf = make_params(Variant::pitf, P, Q, R, 3, 3, 0);
    oracle::randomize(pitf, 4);
    check_grid(pitf,
               [&](int p, int q, int r) { return oracle::pitf(pitf, p, q, r); });

    auto tucker = make_params(Variant::tucker, P, Q, R, 2, 3, 2);
    oracle::randomize(tucker, 5);
    check_grid(tucker, [&](int p, int q, int r) {
        return oracle::tucker(tucker, p, q, r);
    });

    auto mf = make_params(Variant::mf, P, Q, R, 3, 3, 0);
    oracle::randomize(mf, 6);
    check_grid(mf,
               [&](int p, int q, int) { return oracle::b_hat(mf, nullptr, p, q); });

    auto vbpr = make_params(Variant::vbpr, P, Q, R, 3, 3, 4);
    oracle::randomize(vbpr, 7);
    check_grid(vbpr,
               [&](int p, int q, int) { return oracle::b_hat(vbpr, &f, p, q); });
}

TEST_CASE("top_n ordering and exclusion") {
    Dataset ds = tiny_dataset(2, 5, 2, 0, 1);
    REQUIRE(ds.Q == 5);
    Scorer by_index = [](int, int q, int) { return static_cast<double>(q); };

    SUBCASE("scores equal to the item index") {
        CHECK(top_n(by_index, ds, 1, 0, 2, false) == std::vector<int>{4, 3});
    }
    SUBCASE("ties break by ascending item index") {
        Scorer flat = [](int, int, int) { return 1.0; };
        CHECK(top_n(flat, ds, 1, 0, 3, false) == std::vector<int>{0, 1, 2});
    }
    SUBCASE("train exclusion skips Q+_p") {
        // u0 purchased every item; u1's train set via the forced edges
        int p1 = ds.user_index.at("u1");
        auto ranked = top_n(by_index, ds, p1, 0, 2, true);
        for (int q : ranked) CHECK_FALSE(ds.user_has_item(p1, q));
    }
    SUBCASE("invariant under strictly increasing transforms") {
        auto m = make_params(Variant::dcf, ds.P, ds.Q, ds.R, 3, 3, 0);
        oracle::randomize(m, 55);
        Scorer raw = make_scorer(m, nullptr);
        Scorer scaled = [&](int p, int q, int r) {
            return 2.0 * raw(p, q, r) + 1.0;
        };
        for (int p = 0; p < ds.P; ++p)
            CHECK(top_n(raw, ds, p, 0, 4, false) ==
                  top_n(scaled, ds, p, 0, 4, false));
    }
    SUBCASE("n beyond the catalog returns everything ordered") {
        CHECK(top_n(by_index, ds, 0, 0, 50, false).size() == 5);
    }
}

TEST_CASE("checkpoint round-trip preserves every variant") {
    const int P = 3, Q = 4, R = 2;
    for (Variant v : {Variant::dcf, Variant::dcfa, Variant::mf, Variant::vbpr,
                      Variant::cp, Variant::pitf, Variant::tucker}) {
        auto m = make_params(v, P, Q, R, 2, 3, 3);
        oracle::randomize(m, static_cast<uint64_t>(v) + 100);
        m.vocab_hash = 0xdeadbeef;
        m.seed = 9;
        std::stringstream buf;
        save_checkpoint(buf, m);
        auto loaded = load_checkpoint(buf);
        CHECK(loaded.variant == m.variant);
        CHECK(loaded.vocab_hash == m.vocab_hash);
        CHECK(loaded.U.data == m.U.data);
        CHECK(loaded.V.data == m.V.data);
        CHECK(loaded.T.data == m.T.data);
        CHECK(loaded.W.data == m.W.data);
        CHECK(loaded.M.data == m.M.data);
        CHECK(loaded.N.data == m.N.data);
        CHECK(loaded.core == m.core);
    }
    // mp and rand carry their own payloads
    Dataset ds = tiny_dataset(3, 4, 2, 5, 2);
    auto mp = fit_mp(ds);
    std::stringstream buf;
    save_checkpoint(buf, mp);
    auto loaded = load_checkpoint(buf);
    CHECK(loaded.popularity == mp.popularity);
    auto rnd = make_rand_params(ds, 77);
    std::stringstream buf2;
    save_checkpoint(buf2, rnd);
    CHECK(load_checkpoint(buf2).seed == 77);
}
