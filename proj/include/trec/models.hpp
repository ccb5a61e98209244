#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "trec/data.hpp"
#include "trec/features.hpp"
#include "trec/matrix.hpp"

namespace trec {

enum class Variant {
    dcf,
    dcfa,
    mf,
    vbpr,
    cp,
    pitf,
    tucker,
    cmtf,
    mp,
    random
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_uses_features(Variant v);

// One parameter container for every variant. The used subset:
//   dcf:    U (K1xP), V (K1xQ), T (K2xR), W (K2xQ)
//   dcfa:   dcf plus M (KxP), N (KxR)
//   mf:     U, V (K1)
//   vbpr:   U, V, M
//   cp:     U, V, T sharing K1
//   cmtf:   U, V, T sharing K1 (CP-form tensor, coupled via V)
//   pitf:   slot mapping U=U^V, V=V^U, T=T^U, W=V^T, M=U^T, N=T^V (all K1)
//   tucker: U (K1xP), V (K2xQ), T (KxR) plus core (K1*K2*K)
//   mp:     popularity counts, length Q
//   random: seed only
struct ModelParams {
    Variant variant = Variant::dcf;
    int K1 = 0, K2 = 0, K = 0;
    int P = 0, Q = 0, R = 0;
    Matrix U, V, T, W, M, N;
    std::vector<double> core;
    std::vector<double> popularity;
    uint64_t seed = 0;
    uint64_t vocab_hash = 0;
};

// The factor matrices a variant actually uses, in U,V,T,W,M,N order.
// lambda_index selects the matching regularization coefficient (0 -> U ... 5 -> N).
struct ParamSlot {
    const char* name;
    Matrix ModelParams::* member;
    int lambda_index;
};
std::vector<ParamSlot> param_slots(Variant v);

double predict_dcf(const ModelParams& params, int p, int q, int r);
double predict_dcfa(const ModelParams& params, const FeatureMatrix& features,
                    int p, int q, int r);

// B-hat = U^T V (+ M^T F); C-hat = T^T W (+ N^T F). Features enter only for
// variants that carry M / N.
double predict_B(const ModelParams& params, const FeatureMatrix* features,
                 int p, int q);
double predict_C(const ModelParams& params, const FeatureMatrix* features,
                 int r, int q);

double predict_baseline(const ModelParams& params,
                        const FeatureMatrix* features, int p, int q, int r);

// Dispatch over any variant.
double predict(const ModelParams& params, const FeatureMatrix* features, int p,
               int q, int r);

using Scorer = std::function<double(int p, int q, int r)>;
Scorer make_scorer(const ModelParams& params, const FeatureMatrix* features);

// Top-n items for (p, r); ties break by ascending item index. With
// exclude_train, items in the train-side Q+_p are skipped.
std::vector<int> top_n(const Scorer& scorer, const Dataset& train, int p,
                       int r, int n, bool exclude_train);

// Checkpoint: magic "TRECMDL1", variant byte, u32 K1 K2 K P Q R,
// u64 vocab_hash, u64 seed, then the variant's matrices in the order
// U,V,T,W,M,N (row-major float64), then core / popularity when present.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint_file(const std::string& path);

}  // namespace trec
