#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trec/data.hpp"
#include "trec/features.hpp"
#include "trec/models.hpp"

namespace trec {

struct TrainConfig {
    int K1 = 8;
    int K2 = 8;
    double lambda1 = 0.1;  // coupled user-item term weight
    double lambda2 = 0.1;  // coupled time-item term weight
    // regularization for U, V, T, W, M, N respectively (lambda3..lambda8)
    double lambda_theta[6] = {0.3, 0.3, 0.5, 0.2, 0.5, 0.5};
    double eta = 0.05;
    int batch_size = 32;
    int negatives_per_positive = 5;
    int iter_max = 100;
    double conv_tol = 1e-5;
    int conv_patience = 3;
    uint64_t seed = 1;
    double init_scale = 0.1;
    // validation evaluation during training; 0 disables
    int eval_every = 0;
    int eval_cutoff = 10;
    int eval_max_users = 1000;
    // zero entries sampled per positive in the sparse MSE evaluation
    int mse_zeros_per_positive = 5;
};

struct TraceRow {
    int iteration = 0;
    double objective = 0.0;
    double recall = -1.0;  // -1 when not evaluated
    double ndcg = -1.0;
    double seconds = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    void save_tsv(const std::string& path) const;
};

// One BPR preference pair: positive q, sampled negative qn, for (p, r).
struct PrefPair {
    int p = 0, q = 0, qn = 0, r = 0;
};

// Gradient buffers shaped like a variant's used factor matrices.
struct ParamGrad {
    Matrix U, V, T, W, M, N;
    static ParamGrad like(const ModelParams& params);
    void set_zero();
};

ModelParams init_params(Variant variant, const TrainConfig& config, int P,
                        int Q, int R, int feature_dim, uint64_t vocab_hash);

// `count` items drawn uniformly (with replacement) from the complement of
// Q+_p union Q+_r; pass r < 0 to exclude only Q+_p (user-item models).
std::vector<int> sample_negatives(const Dataset& dataset, int p, int r,
                                  int count, Rng& rng);

// Pairwise ranking objective restricted to the given pairs. For dcf/dcfa each
// pair contributes its tensor term plus lambda1/lambda2-weighted coupled
// terms; mf/vbpr use the user-item term only and cp/pitf the tensor term
// only. The regularization term -sum_i (lambda_i/2)||Theta_i||_F^2 is
// evaluated once over the full parameter set.
double bpr_pair_objective(const ModelParams& params,
                          const FeatureMatrix* features,
                          std::span<const PrefPair> pairs,
                          const TrainConfig& config);

// Exact gradient of bpr_pair_objective (ascent direction), including the
// full-matrix regularization term. The SGD loop applies regularization only
// to touched columns instead; see train_bpr.
ParamGrad bpr_gradient(const ModelParams& params,
                       const FeatureMatrix* features,
                       std::span<const PrefPair> pairs,
                       const TrainConfig& config);

// Mini-batch ascent: per iteration shuffle positives into batches, sample
// negatives_per_positive negatives per record, step Theta += eta * grad.
// Deterministic per config.seed.
std::pair<ModelParams, TrainTrace> train_bpr(
    const Dataset& train, const FeatureMatrix* features, Variant variant,
    const TrainConfig& config,
    const std::vector<HoldoutTriple>* validation = nullptr);

// --- pointwise MSE (CMTF baseline, CP-form tensor) --------------------------

// Entries the squared-error terms are evaluated over: all positives plus
// either every zero cell (dense, small instances only) or a sampled set.
struct MseSample {
    bool dense = false;
    std::vector<Triple> zero_a;
    std::vector<std::pair<int, int>> zero_b;  // (p, q)
    std::vector<std::pair<int, int>> zero_c;  // (r, q)
};

MseSample dense_mse_sample();
MseSample sample_mse_zeros(const Dataset& dataset, int per_positive, Rng& rng);

double mse_objective(const ModelParams& params, const Dataset& dataset,
                     const MseSample& sample, const TrainConfig& config);
ParamGrad mse_gradient(const ModelParams& params, const Dataset& dataset,
                       const MseSample& sample, const TrainConfig& config);

std::pair<ModelParams, TrainTrace> train_mse_cmtf(
    const Dataset& train, const TrainConfig& config,
    const std::vector<HoldoutTriple>* validation = nullptr);

// --- non-iterative fits ------------------------------------------------------

ModelParams fit_mp(const Dataset& train);
ModelParams make_rand_params(const Dataset& train, uint64_t seed);

// --- finite-difference gradient check ---------------------------------------

struct GradCheckEntry {
    std::string matrix;
    double max_rel_err = 0.0;
    size_t coords_checked = 0;
    size_t coords_failed = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_matrix;
    double max_rel_err = 0.0;
    bool pass = true;
};

// Central differences of `objective` against `analytic` on every coordinate
// of the variant's used matrices; coordinates are subsampled above
// max_coords (seeded). Relative error uses an absolute floor of 1e-8.
GradCheckReport grad_check(
    const std::function<double(const ModelParams&)>& objective,
    const ModelParams& at, const ParamGrad& analytic, double step,
    double tolerance, size_t max_coords = 10000, uint64_t seed = 0);

}  // namespace trec
