#include "trec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "trec/eval.hpp"

namespace trec {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable ln sigma(x)
double log_sigmoid(double x) {
    if (x < 0.0) return x - std::log1p(std::exp(x));
    return -std::log1p(std::exp(-x));
}

// S1 score (user side) and S2 score (time side) for dcf/dcfa/mf/vbpr.
double score_s1(const ModelParams& m, const FeatureMatrix* F, int p, int q) {
    double s = dot(m.U.col(p), m.V.col(q), m.K1);
    if (!m.M.empty() && m.variant != Variant::pitf)
        s += dot(m.M.col(p), F->item(q), m.K);
    return s;
}

double score_s2(const ModelParams& m, const FeatureMatrix* F, int r, int q) {
    double s = dot(m.T.col(r), m.W.col(q), m.K2);
    if (!m.N.empty() && m.variant != Variant::pitf)
        s += dot(m.N.col(r), F->item(q), m.K);
    return s;
}

bool is_slice(Variant v) { return v == Variant::mf || v == Variant::vbpr; }

double regularization_term(const ModelParams& params,
                           const TrainConfig& config) {
    double reg = 0.0;
    for (const auto& slot : param_slots(params.variant))
        reg += 0.5 * config.lambda_theta[slot.lambda_index] *
               (params.*(slot.member)).frob_sq();
    return reg;
}

void check_pair(const ModelParams& m, const PrefPair& pair) {
    if (pair.p < 0 || pair.p >= m.P || pair.q < 0 || pair.q >= m.Q ||
        pair.qn < 0 || pair.qn >= m.Q ||
        (!is_slice(m.variant) && (pair.r < 0 || pair.r >= m.R)))
        throw IndexOutOfRange("preference pair index out of range");
}

// data term of the objective for one pair
double pair_term(const ModelParams& m, const FeatureMatrix* F,
                 const PrefPair& pr, const TrainConfig& cfg) {
    check_pair(m, pr);
    switch (m.variant) {
        case Variant::dcf:
        case Variant::dcfa: {
            double b_q = score_s1(m, F, pr.p, pr.q);
            double b_qn = score_s1(m, F, pr.p, pr.qn);
            double c_q = score_s2(m, F, pr.r, pr.q);
            double c_qn = score_s2(m, F, pr.r, pr.qn);
            return log_sigmoid(b_q * c_q - b_qn * c_qn) +
                   cfg.lambda1 * log_sigmoid(b_q - b_qn) +
                   cfg.lambda2 * log_sigmoid(c_q - c_qn);
        }
        case Variant::mf:
        case Variant::vbpr:
            return log_sigmoid(score_s1(m, F, pr.p, pr.q) -
                               score_s1(m, F, pr.p, pr.qn));
        case Variant::cp:
        case Variant::pitf:
            return log_sigmoid(predict_baseline(m, F, pr.p, pr.q, pr.r) -
                               predict_baseline(m, F, pr.p, pr.qn, pr.r));
        default:
            throw VariantMismatch("variant has no BPR objective");
    }
}

// analytic ascent gradient of the data term for one pair, accumulated into g
void accumulate_pair_grad(const ModelParams& m, const FeatureMatrix* F,
                          const PrefPair& pr, const TrainConfig& cfg,
                          ParamGrad& g) {
    check_pair(m, pr);
    const int p = pr.p, q = pr.q, qn = pr.qn, r = pr.r;
    switch (m.variant) {
        case Variant::dcf:
        case Variant::dcfa: {
            double b_q = score_s1(m, F, p, q);
            double b_qn = score_s1(m, F, p, qn);
            double c_q = score_s2(m, F, r, q);
            double c_qn = score_s2(m, F, r, qn);

            double wa = sigmoid(-(b_q * c_q - b_qn * c_qn));
            // tensor term, user side
            axpy(wa * c_q, m.V.col(q), g.U.col(p), m.K1);
            axpy(-wa * c_qn, m.V.col(qn), g.U.col(p), m.K1);
            axpy(wa * c_q, m.U.col(p), g.V.col(q), m.K1);
            axpy(-wa * c_qn, m.U.col(p), g.V.col(qn), m.K1);
            // tensor term, time side
            axpy(wa * b_q, m.W.col(q), g.T.col(r), m.K2);
            axpy(-wa * b_qn, m.W.col(qn), g.T.col(r), m.K2);
            axpy(wa * b_q, m.T.col(r), g.W.col(q), m.K2);
            axpy(-wa * b_qn, m.T.col(r), g.W.col(qn), m.K2);
            if (m.variant == Variant::dcfa) {
                axpy(wa * c_q, F->item(q), g.M.col(p), m.K);
                axpy(-wa * c_qn, F->item(qn), g.M.col(p), m.K);
                axpy(wa * b_q, F->item(q), g.N.col(r), m.K);
                axpy(-wa * b_qn, F->item(qn), g.N.col(r), m.K);
            }
            // coupled user-item term
            double wb = cfg.lambda1 * sigmoid(-(b_q - b_qn));
            axpy(wb, m.V.col(q), g.U.col(p), m.K1);
            axpy(-wb, m.V.col(qn), g.U.col(p), m.K1);
            axpy(wb, m.U.col(p), g.V.col(q), m.K1);
            axpy(-wb, m.U.col(p), g.V.col(qn), m.K1);
            // coupled time-item term
            double wc = cfg.lambda2 * sigmoid(-(c_q - c_qn));
            axpy(wc, m.W.col(q), g.T.col(r), m.K2);
            axpy(-wc, m.W.col(qn), g.T.col(r), m.K2);
            axpy(wc, m.T.col(r), g.W.col(q), m.K2);
            axpy(-wc, m.T.col(r), g.W.col(qn), m.K2);
            if (m.variant == Variant::dcfa) {
                axpy(wb, F->item(q), g.M.col(p), m.K);
                axpy(-wb, F->item(qn), g.M.col(p), m.K);
                axpy(wc, F->item(q), g.N.col(r), m.K);
                axpy(-wc, F->item(qn), g.N.col(r), m.K);
            }
            return;
        }
        case Variant::mf:
        case Variant::vbpr: {
            double w = sigmoid(-(score_s1(m, F, p, q) - score_s1(m, F, p, qn)));
            axpy(w, m.V.col(q), g.U.col(p), m.K1);
            axpy(-w, m.V.col(qn), g.U.col(p), m.K1);
            axpy(w, m.U.col(p), g.V.col(q), m.K1);
            axpy(-w, m.U.col(p), g.V.col(qn), m.K1);
            if (m.variant == Variant::vbpr) {
                axpy(w, F->item(q), g.M.col(p), m.K);
                axpy(-w, F->item(qn), g.M.col(p), m.K);
            }
            return;
        }
        case Variant::cp: {
            double w = sigmoid(-(predict_baseline(m, F, p, q, r) -
                                 predict_baseline(m, F, p, qn, r)));
            const double* u = m.U.col(p);
            const double* v = m.V.col(q);
            const double* vn = m.V.col(qn);
            const double* t = m.T.col(r);
            for (int k = 0; k < m.K1; ++k) {
                g.U(k, p) += w * t[k] * (v[k] - vn[k]);
                g.V(k, q) += w * u[k] * t[k];
                g.V(k, qn) -= w * u[k] * t[k];
                g.T(k, r) += w * u[k] * (v[k] - vn[k]);
            }
            return;
        }
        case Variant::pitf: {
            // user-time term cancels in the pairwise difference
            double w = sigmoid(-(predict_baseline(m, F, p, q, r) -
                                 predict_baseline(m, F, p, qn, r)));
            axpy(w, m.V.col(q), g.U.col(p), m.K1);
            axpy(-w, m.V.col(qn), g.U.col(p), m.K1);
            axpy(w, m.U.col(p), g.V.col(q), m.K1);
            axpy(-w, m.U.col(p), g.V.col(qn), m.K1);
            axpy(w, m.N.col(r), g.W.col(q), m.K1);
            axpy(-w, m.N.col(r), g.W.col(qn), m.K1);
            axpy(w, m.W.col(q), g.N.col(r), m.K1);
            axpy(-w, m.W.col(qn), g.N.col(r), m.K1);
            return;
        }
        default:
            throw VariantMismatch("variant has no BPR gradient");
    }
}

// touched-column regularization for one pair (sparse-SGD policy)
void accumulate_pair_reg(const ModelParams& m, const PrefPair& pr,
                         const TrainConfig& cfg, ParamGrad& g) {
    const double* lt = cfg.lambda_theta;
    axpy(-lt[0], m.U.col(pr.p), g.U.col(pr.p), m.U.rows);
    axpy(-lt[1], m.V.col(pr.q), g.V.col(pr.q), m.V.rows);
    axpy(-lt[1], m.V.col(pr.qn), g.V.col(pr.qn), m.V.rows);
    if (!m.T.empty() && !is_slice(m.variant))
        axpy(-lt[2], m.T.col(pr.r), g.T.col(pr.r), m.T.rows);
    if (!m.W.empty() && !is_slice(m.variant)) {
        axpy(-lt[3], m.W.col(pr.q), g.W.col(pr.q), m.W.rows);
        axpy(-lt[3], m.W.col(pr.qn), g.W.col(pr.qn), m.W.rows);
    }
    if (!m.M.empty()) axpy(-lt[4], m.M.col(pr.p), g.M.col(pr.p), m.M.rows);
    if (!m.N.empty() && !is_slice(m.variant))
        axpy(-lt[5], m.N.col(pr.r), g.N.col(pr.r), m.N.rows);
}

// lambda_index doubles as the slot position (0..5 -> U..N)
Matrix& grad_slot(ParamGrad& g, int idx) {
    switch (idx) {
        case 0: return g.U;
        case 1: return g.V;
        case 2: return g.T;
        case 3: return g.W;
        case 4: return g.M;
        default: return g.N;
    }
}

const Matrix& grad_slot(const ParamGrad& g, int idx) {
    return grad_slot(const_cast<ParamGrad&>(g), idx);
}

}  // namespace

ParamGrad ParamGrad::like(const ModelParams& params) {
    ParamGrad g;
    for (const auto& slot : param_slots(params.variant)) {
        const Matrix& src = params.*(slot.member);
        grad_slot(g, slot.lambda_index) = Matrix(src.rows, src.cols);
    }
    return g;
}

void ParamGrad::set_zero() {
    for (Matrix* m : {&U, &V, &T, &W, &M, &N}) m->set_zero();
}

ModelParams init_params(Variant variant, const TrainConfig& config, int P,
                        int Q, int R, int feature_dim, uint64_t vocab_hash) {
    ModelParams params;
    params.variant = variant;
    params.K1 = config.K1;
    params.K2 = config.K2;
    params.K = feature_dim;
    params.P = P;
    params.Q = Q;
    params.R = R;
    params.vocab_hash = vocab_hash;
    params.seed = config.seed;

    if (variant == Variant::cp || variant == Variant::cmtf ||
        variant == Variant::pitf)
        params.K2 = config.K1;  // shared rank
    if (variant == Variant::tucker && params.K == 0) params.K = config.K2;

    struct Dim {
        Matrix ModelParams::* member;
        int rows, cols;
    };
    std::vector<Dim> dims;
    switch (variant) {
        case Variant::dcf:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q},
                    {&ModelParams::T, params.K2, R},
                    {&ModelParams::W, params.K2, Q}};
            break;
        case Variant::dcfa:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q},
                    {&ModelParams::T, params.K2, R},
                    {&ModelParams::W, params.K2, Q},
                    {&ModelParams::M, params.K, P},
                    {&ModelParams::N, params.K, R}};
            break;
        case Variant::mf:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q}};
            break;
        case Variant::vbpr:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q},
                    {&ModelParams::M, params.K, P}};
            break;
        case Variant::cp:
        case Variant::cmtf:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q},
                    {&ModelParams::T, params.K1, R}};
            break;
        case Variant::pitf:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K1, Q},
                    {&ModelParams::T, params.K1, R},
                    {&ModelParams::W, params.K1, Q},
                    {&ModelParams::M, params.K1, P},
                    {&ModelParams::N, params.K1, R}};
            break;
        case Variant::tucker:
            dims = {{&ModelParams::U, params.K1, P},
                    {&ModelParams::V, params.K2, Q},
                    {&ModelParams::T, params.K, R}};
            params.core.assign(
                static_cast<size_t>(params.K1) * params.K2 * params.K, 0.0);
            break;
        case Variant::mp:
        case Variant::random:
            break;
    }

    Rng rng(config.seed);
    double s = config.init_scale;
    for (const auto& d : dims) {
        Matrix& m = params.*(d.member);
        m = Matrix(d.rows, d.cols);
        for (double& x : m.data) x = s == 0.0 ? 0.0 : rng.uniform(-s, s);
    }
    for (double& x : params.core) x = s == 0.0 ? 0.0 : rng.uniform(-s, s);
    return params;
}

std::vector<int> sample_negatives(const Dataset& dataset, int p, int r,
                                  int count, Rng& rng) {
    const auto& pos_p = dataset.user_items.at(p);
    size_t excluded = pos_p.size();
    if (r >= 0) {
        // union size: |Q+_p| + |Q+_r \ Q+_p|
        for (int q : dataset.time_items.at(r))
            if (!dataset.user_has_item(p, q)) ++excluded;
    }
    if (excluded >= static_cast<size_t>(dataset.Q))
        throw NoNegativesAvailable();

    std::vector<int> out;
    out.reserve(count);
    while (static_cast<int>(out.size()) < count) {
        int q = rng.next_int(dataset.Q);
        if (dataset.user_has_item(p, q)) continue;
        if (r >= 0 && dataset.time_has_item(r, q)) continue;
        out.push_back(q);
    }
    return out;
}

double bpr_pair_objective(const ModelParams& params,
                          const FeatureMatrix* features,
                          std::span<const PrefPair> pairs,
                          const TrainConfig& config) {
    double obj = 0.0;
    for (const auto& pr : pairs) obj += pair_term(params, features, pr, config);
    return obj - regularization_term(params, config);
}

ParamGrad bpr_gradient(const ModelParams& params, const FeatureMatrix* features,
                       std::span<const PrefPair> pairs,
                       const TrainConfig& config) {
    ParamGrad g = ParamGrad::like(params);
    for (const auto& pr : pairs)
        accumulate_pair_grad(params, features, pr, config, g);
    for (const auto& slot : param_slots(params.variant)) {
        const Matrix& m = params.*(slot.member);
        Matrix& gm = grad_slot(g, slot.lambda_index);
        double lambda = config.lambda_theta[slot.lambda_index];
        for (size_t i = 0; i < m.data.size(); ++i)
            gm.data[i] -= lambda * m.data[i];
    }
    return g;
}

namespace {

void apply_step(ModelParams& params, ParamGrad& g, double eta) {
    for (const auto& slot : param_slots(params.variant)) {
        Matrix& m = params.*(slot.member);
        const Matrix& gm = grad_slot(g, slot.lambda_index);
        for (size_t i = 0; i < m.data.size(); ++i)
            m.data[i] += eta * gm.data[i];
    }
}

bool params_finite(const ModelParams& params) {
    for (const auto& slot : param_slots(params.variant))
        for (double x : (params.*(slot.member)).data)
            if (!std::isfinite(x)) return false;
    return true;
}

void maybe_evaluate(TraceRow& row, const ModelParams& params,
                    const FeatureMatrix* features, const Dataset& train,
                    const std::vector<HoldoutTriple>* validation,
                    const TrainConfig& cfg, int iter) {
    if (validation == nullptr || cfg.eval_every <= 0) return;
    if (iter % cfg.eval_every != 0 && iter != cfg.iter_max) return;
    auto report = evaluate_model(make_scorer(params, features), train,
                                 *validation, {cfg.eval_cutoff}, true, false,
                                 cfg.eval_max_users);
    row.recall = report.recall(cfg.eval_cutoff);
    row.ndcg = report.ndcg(cfg.eval_cutoff);
}

}  // namespace

std::pair<ModelParams, TrainTrace> train_bpr(
    const Dataset& train, const FeatureMatrix* features, Variant variant,
    const TrainConfig& config, const std::vector<HoldoutTriple>* validation) {
    if (train.triples.empty()) throw EmptyInput();
    if (variant_uses_features(variant) && features == nullptr)
        throw VariantMismatch(std::string(variant_name(variant)) +
                              " requires a feature matrix");

    ModelParams params =
        init_params(variant, config, train.P, train.Q, train.R,
                    features != nullptr ? features->K : 0, train.vocab_hash());
    TrainTrace trace;
    if (config.iter_max <= 0) return {params, trace};

    const bool slice = is_slice(variant);
    Rng rng(splitmix64(config.seed ^ 0x62707274ULL));
    std::vector<Triple> order = train.triples;
    ParamGrad grad = ParamGrad::like(params);
    std::vector<PrefPair> batch_pairs;

    auto started = std::chrono::steady_clock::now();
    double prev_obj = 0.0;
    int stable = 0;
    for (int iter = 1; iter <= config.iter_max; ++iter) {
        rng.shuffle(order);
        double term_sum = 0.0;
        size_t pair_count = 0;
        for (size_t begin = 0; begin < order.size();
             begin += config.batch_size) {
            size_t end =
                std::min(order.size(), begin + config.batch_size);
            batch_pairs.clear();
            for (size_t i = begin; i < end; ++i) {
                const Triple& t = order[i];
                std::vector<int> negs;
                try {
                    negs = sample_negatives(train, t.p, slice ? -1 : t.r,
                                            config.negatives_per_positive,
                                            rng);
                } catch (const NoNegativesAvailable&) {
                    continue;  // saturated user/interval; skip the positive
                }
                for (int qn : negs)
                    batch_pairs.push_back({t.p, t.q, qn, t.r});
            }
            if (batch_pairs.empty()) continue;
            grad.set_zero();
            for (const auto& pr : batch_pairs) {
                term_sum += pair_term(params, features, pr, config);
                accumulate_pair_grad(params, features, pr, config, grad);
                accumulate_pair_reg(params, pr, config, grad);
            }
            apply_step(params, grad,
                       config.eta / static_cast<double>(batch_pairs.size()));
            pair_count += batch_pairs.size();
        }
        if (pair_count == 0) throw NoNegativesAvailable();
        double obj = (term_sum - regularization_term(params, config)) /
                     static_cast<double>(pair_count);
        if (!std::isfinite(obj) || !params_finite(params))
            throw DivergedError("objective diverged at iteration " +
                                std::to_string(iter));

        TraceRow row;
        row.iteration = iter;
        row.objective = obj;
        row.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
        maybe_evaluate(row, params, features, train, validation, config, iter);
        trace.rows.push_back(row);

        if (iter > 1 &&
            std::abs(obj - prev_obj) <
                config.conv_tol * std::max(1.0, std::abs(prev_obj))) {
            if (++stable >= config.conv_patience) break;
        } else {
            stable = 0;
        }
        prev_obj = obj;
    }
    return {params, trace};
}

// --- pointwise MSE (CMTF) ----------------------------------------------------

MseSample dense_mse_sample() {
    MseSample s;
    s.dense = true;
    return s;
}

MseSample sample_mse_zeros(const Dataset& dataset, int per_positive, Rng& rng) {
    MseSample s;
    auto triple_positive = [&](const Triple& t) {
        return std::binary_search(dataset.triples.begin(),
                                  dataset.triples.end(), t);
    };
    // skip any block whose zero set is empty (tiny saturated instances)
    size_t want_a =
        dataset.triples.size() <
                static_cast<size_t>(dataset.P) * dataset.Q * dataset.R
            ? dataset.triples.size() * per_positive
            : 0;
    while (s.zero_a.size() < want_a) {
        Triple t{rng.next_int(dataset.P), rng.next_int(dataset.Q),
                 rng.next_int(dataset.R)};
        if (!triple_positive(t)) s.zero_a.push_back(t);
    }
    size_t want_b =
        dataset.pairs_B.size() < static_cast<size_t>(dataset.P) * dataset.Q
            ? dataset.pairs_B.size() * per_positive
            : 0;
    while (s.zero_b.size() < want_b) {
        int p = rng.next_int(dataset.P), q = rng.next_int(dataset.Q);
        if (!dataset.user_has_item(p, q)) s.zero_b.emplace_back(p, q);
    }
    size_t want_c =
        dataset.pairs_C.size() < static_cast<size_t>(dataset.R) * dataset.Q
            ? dataset.pairs_C.size() * per_positive
            : 0;
    while (s.zero_c.size() < want_c) {
        int r = rng.next_int(dataset.R), q = rng.next_int(dataset.Q);
        if (!dataset.time_has_item(r, q)) s.zero_c.emplace_back(r, q);
    }
    return s;
}

namespace {

constexpr int64_t kDenseLimit = 1000000;

void check_dense_allowed(const Dataset& ds) {
    if (static_cast<int64_t>(ds.P) * ds.Q * ds.R > kDenseLimit)
        throw ArgumentError(
            "dense MSE evaluation is limited to P*Q*R <= 1e6 cells");
}

double cp_score(const ModelParams& m, int p, int q, int r) {
    const double* u = m.U.col(p);
    const double* v = m.V.col(q);
    const double* t = m.T.col(r);
    double s = 0.0;
    for (int k = 0; k < m.K1; ++k) s += u[k] * v[k] * t[k];
    return s;
}

// walks every squared-error entry of the objective, calling
// fa/fb/fc(indices, observed value)
template <class FA, class FB, class FC>
void for_each_mse_entry(const Dataset& ds, const MseSample& sample, FA&& fa,
                        FB&& fb, FC&& fc) {
    if (sample.dense) {
        check_dense_allowed(ds);
        for (int p = 0; p < ds.P; ++p)
            for (int q = 0; q < ds.Q; ++q) {
                bool b_pos = ds.user_has_item(p, q);
                for (int r = 0; r < ds.R; ++r) {
                    bool a_pos =
                        b_pos && std::binary_search(ds.triples.begin(),
                                                    ds.triples.end(),
                                                    Triple{p, q, r});
                    fa(p, q, r, a_pos ? 1.0 : 0.0);
                }
                fb(p, q, b_pos ? 1.0 : 0.0);
            }
        for (int r = 0; r < ds.R; ++r)
            for (int q = 0; q < ds.Q; ++q)
                fc(r, q, ds.time_has_item(r, q) ? 1.0 : 0.0);
    } else {
        for (const auto& t : ds.triples) fa(t.p, t.q, t.r, 1.0);
        for (const auto& t : sample.zero_a) fa(t.p, t.q, t.r, 0.0);
        for (uint64_t key : ds.pairs_B)
            fb(static_cast<int>(key / ds.Q), static_cast<int>(key % ds.Q), 1.0);
        for (const auto& [p, q] : sample.zero_b) fb(p, q, 0.0);
        for (uint64_t key : ds.pairs_C)
            fc(static_cast<int>(key / ds.Q), static_cast<int>(key % ds.Q), 1.0);
        for (const auto& [r, q] : sample.zero_c) fc(r, q, 0.0);
    }
}

}  // namespace

double mse_objective(const ModelParams& params, const Dataset& dataset,
                     const MseSample& sample, const TrainConfig& config) {
    double obj = 0.0;
    for_each_mse_entry(
        dataset, sample,
        [&](int p, int q, int r, double a) {
            double e = a - cp_score(params, p, q, r);
            obj += 0.5 * e * e;
        },
        [&](int p, int q, double b) {
            double e = b - dot(params.U.col(p), params.V.col(q), params.K1);
            obj += 0.5 * config.lambda1 * e * e;
        },
        [&](int r, int q, double c) {
            double e = c - dot(params.T.col(r), params.V.col(q), params.K1);
            obj += 0.5 * config.lambda2 * e * e;
        });
    obj += 0.5 * (config.lambda_theta[0] * params.U.frob_sq() +
                  config.lambda_theta[1] * params.V.frob_sq() +
                  config.lambda_theta[2] * params.T.frob_sq());
    return obj;
}

ParamGrad mse_gradient(const ModelParams& params, const Dataset& dataset,
                       const MseSample& sample, const TrainConfig& config) {
    ParamGrad g = ParamGrad::like(params);
    const int K = params.K1;
    for_each_mse_entry(
        dataset, sample,
        [&](int p, int q, int r, double a) {
            double e = cp_score(params, p, q, r) - a;
            const double* u = params.U.col(p);
            const double* v = params.V.col(q);
            const double* t = params.T.col(r);
            for (int k = 0; k < K; ++k) {
                g.U(k, p) += e * v[k] * t[k];
                g.V(k, q) += e * u[k] * t[k];
                g.T(k, r) += e * u[k] * v[k];
            }
        },
        [&](int p, int q, double b) {
            double e = config.lambda1 *
                       (dot(params.U.col(p), params.V.col(q), K) - b);
            axpy(e, params.V.col(q), g.U.col(p), K);
            axpy(e, params.U.col(p), g.V.col(q), K);
        },
        [&](int r, int q, double c) {
            double e = config.lambda2 *
                       (dot(params.T.col(r), params.V.col(q), K) - c);
            axpy(e, params.V.col(q), g.T.col(r), K);
            axpy(e, params.T.col(r), g.V.col(q), K);
        });
    for (size_t i = 0; i < params.U.data.size(); ++i)
        g.U.data[i] += config.lambda_theta[0] * params.U.data[i];
    for (size_t i = 0; i < params.V.data.size(); ++i)
        g.V.data[i] += config.lambda_theta[1] * params.V.data[i];
    for (size_t i = 0; i < params.T.data.size(); ++i)
        g.T.data[i] += config.lambda_theta[2] * params.T.data[i];
    return g;
}

std::pair<ModelParams, TrainTrace> train_mse_cmtf(
    const Dataset& train, const TrainConfig& config,
    const std::vector<HoldoutTriple>* validation) {
    if (train.triples.empty()) throw EmptyInput();
    ModelParams params = init_params(Variant::cmtf, config, train.P, train.Q,
                                     train.R, 0, train.vocab_hash());
    TrainTrace trace;
    if (config.iter_max <= 0) return {params, trace};

    bool dense =
        static_cast<int64_t>(train.P) * train.Q * train.R <= kDenseLimit;
    Rng rng(splitmix64(config.seed ^ 0x636d7466ULL));
    MseSample sample = dense ? dense_mse_sample() : MseSample{};

    auto started = std::chrono::steady_clock::now();
    double prev_obj = 0.0;
    int stable = 0;
    for (int iter = 1; iter <= config.iter_max; ++iter) {
        if (!dense)
            sample =
                sample_mse_zeros(train, config.mse_zeros_per_positive, rng);
        ParamGrad g = mse_gradient(params, train, sample, config);
        // sums run over every sampled cell; normalize the step so eta is
        // insensitive to instance size
        size_t entries =
            dense ? static_cast<size_t>(train.P) * train.Q * train.R
                  : train.triples.size() + sample.zero_a.size();
        for (const auto& slot : param_slots(params.variant)) {
            Matrix& m = params.*(slot.member);
            const Matrix& gm = grad_slot(g, slot.lambda_index);
            double step = config.eta / static_cast<double>(entries);
            for (size_t i = 0; i < m.data.size(); ++i)
                m.data[i] -= step * gm.data[i];
        }
        double obj = mse_objective(params, train, sample, config) /
                     static_cast<double>(entries);
        if (!std::isfinite(obj) || !params_finite(params))
            throw DivergedError("MSE objective diverged at iteration " +
                                std::to_string(iter));

        TraceRow row;
        row.iteration = iter;
        row.objective = obj;
        row.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
        maybe_evaluate(row, params, nullptr, train, validation, config, iter);
        trace.rows.push_back(row);

        if (iter > 1 &&
            std::abs(obj - prev_obj) <
                config.conv_tol * std::max(1.0, std::abs(prev_obj))) {
            if (++stable >= config.conv_patience) break;
        } else {
            stable = 0;
        }
        prev_obj = obj;
    }
    return {params, trace};
}

// --- non-iterative fits ------------------------------------------------------

ModelParams fit_mp(const Dataset& train) {
    ModelParams params;
    params.variant = Variant::mp;
    params.P = train.P;
    params.Q = train.Q;
    params.R = train.R;
    params.vocab_hash = train.vocab_hash();
    params.popularity.assign(train.Q, 0.0);
    for (const auto& t : train.triples) params.popularity[t.q] += 1.0;
    return params;
}

ModelParams make_rand_params(const Dataset& train, uint64_t seed) {
    ModelParams params;
    params.variant = Variant::random;
    params.P = train.P;
    params.Q = train.Q;
    params.R = train.R;
    params.vocab_hash = train.vocab_hash();
    params.seed = seed;
    return params;
}

// --- finite-difference gradient check ---------------------------------------

GradCheckReport grad_check(
    const std::function<double(const ModelParams&)>& objective,
    const ModelParams& at, const ParamGrad& analytic, double step,
    double tolerance, size_t max_coords, uint64_t seed) {
    if (step <= 0.0) throw ArgumentError("grad_check requires step > 0");
    auto slots = param_slots(at.variant);
    size_t total = 0;
    for (const auto& slot : slots) total += (at.*(slot.member)).data.size();
    double keep_prob =
        total > max_coords ? static_cast<double>(max_coords) / total : 1.0;

    Rng rng(seed);
    ModelParams probe = at;
    GradCheckReport report;
    for (const auto& slot : slots) {
        GradCheckEntry entry;
        entry.matrix = slot.name;
        Matrix& m = probe.*(slot.member);
        const Matrix& an = grad_slot(analytic, slot.lambda_index);
        for (size_t i = 0; i < m.data.size(); ++i) {
            if (keep_prob < 1.0 && rng.next_double() >= keep_prob) continue;
            double saved = m.data[i];
            m.data[i] = saved + step;
            double hi = objective(probe);
            m.data[i] = saved - step;
            double lo = objective(probe);
            m.data[i] = saved;
            double fd = (hi - lo) / (2.0 * step);
            double denom = std::max({std::abs(fd), std::abs(an.data[i]), 1e-8});
            double rel = std::abs(fd - an.data[i]) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            ++entry.coords_checked;
            if (rel > tolerance) ++entry.coords_failed;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        if (entry.coords_failed > 0) report.pass = false;
        report.per_matrix.push_back(std::move(entry));
    }
    return report;
}

void TrainTrace::save_tsv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "iteration\tobjective\trecall\tndcg\tseconds\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%d\t%.6f\t", row.iteration,
                      row.objective);
        out << buf;
        if (row.recall >= 0.0) {
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t", row.recall,
                          row.ndcg);
            out << buf;
        } else {
            out << "-\t-\t";
        }
        std::snprintf(buf, sizeof buf, "%.3f\n", row.seconds);
        out << buf;
    }
}

}  // namespace trec
