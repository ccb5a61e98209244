#include "trec/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace trec {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'E', 'C', 'M', 'D', 'L', '1'};

void check_index(int v, int bound, const char* what) {
    if (v < 0 || v >= bound)
        throw IndexOutOfRange(std::string(what) + " index " +
                              std::to_string(v) + " out of range [0, " +
                              std::to_string(bound) + ")");
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::dcf: return "dcf";
        case Variant::dcfa: return "dcfa";
        case Variant::mf: return "mf";
        case Variant::vbpr: return "vbpr";
        case Variant::cp: return "cp";
        case Variant::pitf: return "pitf";
        case Variant::tucker: return "tucker";
        case Variant::cmtf: return "cmtf";
        case Variant::mp: return "mp";
        case Variant::random: return "rand";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v :
         {Variant::dcf, Variant::dcfa, Variant::mf, Variant::vbpr, Variant::cp,
          Variant::pitf, Variant::tucker, Variant::cmtf, Variant::mp,
          Variant::random})
        if (name == variant_name(v)) return v;
    throw ArgumentError("unknown model variant: " + name);
}

bool variant_uses_features(Variant v) {
    return v == Variant::dcfa || v == Variant::vbpr;
}

std::vector<ParamSlot> param_slots(Variant v) {
    constexpr ParamSlot kU{"U", &ModelParams::U, 0};
    constexpr ParamSlot kV{"V", &ModelParams::V, 1};
    constexpr ParamSlot kT{"T", &ModelParams::T, 2};
    constexpr ParamSlot kW{"W", &ModelParams::W, 3};
    constexpr ParamSlot kM{"M", &ModelParams::M, 4};
    constexpr ParamSlot kN{"N", &ModelParams::N, 5};
    switch (v) {
        case Variant::dcf: return {kU, kV, kT, kW};
        case Variant::dcfa: return {kU, kV, kT, kW, kM, kN};
        case Variant::mf: return {kU, kV};
        case Variant::vbpr: return {kU, kV, kM};
        case Variant::cp:
        case Variant::cmtf: return {kU, kV, kT};
        case Variant::pitf: return {kU, kV, kT, kW, kM, kN};
        case Variant::tucker: return {kU, kV, kT};
        case Variant::mp:
        case Variant::random: return {};
    }
    return {};
}

double predict_dcf(const ModelParams& params, int p, int q, int r) {
    check_index(p, params.P, "user");
    check_index(q, params.Q, "item");
    check_index(r, params.R, "interval");
    double s1 = dot(params.U.col(p), params.V.col(q), params.K1);
    double s2 = dot(params.T.col(r), params.W.col(q), params.K2);
    return s1 * s2;
}

double predict_dcfa(const ModelParams& params, const FeatureMatrix& features,
                    int p, int q, int r) {
    check_index(p, params.P, "user");
    check_index(q, params.Q, "item");
    check_index(r, params.R, "interval");
    if (features.K != params.K || features.Q != params.Q)
        throw FeatureDimMismatch("feature matrix does not match model dims");
    double s1 = dot(params.U.col(p), params.V.col(q), params.K1) +
                dot(params.M.col(p), features.item(q), params.K);
    double s2 = dot(params.T.col(r), params.W.col(q), params.K2) +
                dot(params.N.col(r), features.item(q), params.K);
    return s1 * s2;
}

double predict_B(const ModelParams& params, const FeatureMatrix* features,
                 int p, int q) {
    check_index(p, params.P, "user");
    check_index(q, params.Q, "item");
    double s = dot(params.U.col(p), params.V.col(q), params.K1);
    if (!params.M.empty()) {
        if (features == nullptr)
            throw VariantMismatch("feature-preference model needs features");
        s += dot(params.M.col(p), features->item(q), params.K);
    }
    return s;
}

double predict_C(const ModelParams& params, const FeatureMatrix* features,
                 int r, int q) {
    check_index(r, params.R, "interval");
    check_index(q, params.Q, "item");
    double s = dot(params.T.col(r), params.W.col(q), params.K2);
    if (!params.N.empty()) {
        if (features == nullptr)
            throw VariantMismatch("feature-preference model needs features");
        s += dot(params.N.col(r), features->item(q), params.K);
    }
    return s;
}

double predict_baseline(const ModelParams& params,
                        const FeatureMatrix* features, int p, int q, int r) {
    switch (params.variant) {
        case Variant::random: {
            check_index(p, params.P, "user");
            check_index(q, params.Q, "item");
            check_index(r, params.R, "interval");
            uint64_t h = splitmix64(params.seed ^ splitmix64(
                             (static_cast<uint64_t>(p) << 42) ^
                             (static_cast<uint64_t>(q) << 21) ^
                             static_cast<uint64_t>(r)));
            return static_cast<double>(h >> 11) * 0x1.0p-53;
        }
        case Variant::mp:
            check_index(q, params.Q, "item");
            return params.popularity[q];
        case Variant::mf:
            return predict_B(params, nullptr, p, q);
        case Variant::vbpr:
            if (features == nullptr)
                throw VariantMismatch("vbpr requires a feature matrix");
            return predict_B(params, features, p, q);
        case Variant::cp:
        case Variant::cmtf: {
            check_index(p, params.P, "user");
            check_index(q, params.Q, "item");
            check_index(r, params.R, "interval");
            const double* u = params.U.col(p);
            const double* v = params.V.col(q);
            const double* t = params.T.col(r);
            double s = 0.0;
            for (int k = 0; k < params.K1; ++k) s += u[k] * v[k] * t[k];
            return s;
        }
        case Variant::pitf: {
            check_index(p, params.P, "user");
            check_index(q, params.Q, "item");
            check_index(r, params.R, "interval");
            // slots: U=U^V, V=V^U, T=T^U, W=V^T, M=U^T, N=T^V
            return dot(params.U.col(p), params.V.col(q), params.K1) +
                   dot(params.M.col(p), params.T.col(r), params.K1) +
                   dot(params.W.col(q), params.N.col(r), params.K1);
        }
        case Variant::tucker: {
            check_index(p, params.P, "user");
            check_index(q, params.Q, "item");
            check_index(r, params.R, "interval");
            const double* u = params.U.col(p);
            const double* v = params.V.col(q);
            const double* t = params.T.col(r);
            double s = 0.0;
            size_t idx = 0;
            // core laid out with i fastest: core[i + K1*(j + K2*k)]
            for (int k = 0; k < params.K; ++k)
                for (int j = 0; j < params.K2; ++j)
                    for (int i = 0; i < params.K1; ++i, ++idx)
                        s += params.core[idx] * u[i] * v[j] * t[k];
            return s;
        }
        case Variant::dcf:
        case Variant::dcfa:
            break;
    }
    throw VariantMismatch("predict_baseline called with a non-baseline model");
}

double predict(const ModelParams& params, const FeatureMatrix* features, int p,
               int q, int r) {
    switch (params.variant) {
        case Variant::dcf:
            return predict_dcf(params, p, q, r);
        case Variant::dcfa:
            if (features == nullptr)
                throw VariantMismatch("dcfa requires a feature matrix");
            return predict_dcfa(params, *features, p, q, r);
        default:
            return predict_baseline(params, features, p, q, r);
    }
}

Scorer make_scorer(const ModelParams& params, const FeatureMatrix* features) {
    if (variant_uses_features(params.variant) && features == nullptr)
        throw VariantMismatch(std::string(variant_name(params.variant)) +
                              " requires a feature matrix");
    return [&params, features](int p, int q, int r) {
        return predict(params, features, p, q, r);
    };
}

std::vector<int> top_n(const Scorer& scorer, const Dataset& train, int p,
                       int r, int n, bool exclude_train) {
    check_index(p, train.P, "user");
    check_index(r, train.R, "interval");
    if (n < 1) throw ArgumentError("top_n requires n >= 1");
    std::vector<std::pair<double, int>> scored;
    scored.reserve(train.Q);
    for (int q = 0; q < train.Q; ++q) {
        if (exclude_train && train.user_has_item(p, q)) continue;
        scored.emplace_back(scorer(p, q, r), q);
    }
    size_t keep = std::min<size_t>(static_cast<size_t>(n), scored.size());
    // higher score first, then lower item index
    auto cmp = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), cmp);
    std::vector<int> out;
    out.reserve(keep);
    for (size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
    return out;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

template <class T>
void write_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>(
            (static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

void write_f64(std::ostream& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_le<uint64_t>(out, bits);
}

double read_f64(std::istream& in) {
    uint64_t bits = read_le<uint64_t>(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

// row-major on disk, column-major in memory
void write_matrix(std::ostream& out, const Matrix& m) {
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) write_f64(out, m(i, j));
}

Matrix read_matrix(std::istream& in, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = read_f64(in);
    return m;
}

struct MatrixSlot {
    Matrix ModelParams::* member;
    int rows;  // 0 means absent for this variant
    int cols;
};

std::vector<MatrixSlot> matrix_slots(const ModelParams& p) {
    switch (p.variant) {
        case Variant::dcf:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K1, p.Q},
                    {&ModelParams::T, p.K2, p.R},
                    {&ModelParams::W, p.K2, p.Q}};
        case Variant::dcfa:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K1, p.Q},
                    {&ModelParams::T, p.K2, p.R},
                    {&ModelParams::W, p.K2, p.Q},
                    {&ModelParams::M, p.K, p.P},
                    {&ModelParams::N, p.K, p.R}};
        case Variant::mf:
            return {{&ModelParams::U, p.K1, p.P}, {&ModelParams::V, p.K1, p.Q}};
        case Variant::vbpr:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K1, p.Q},
                    {&ModelParams::M, p.K, p.P}};
        case Variant::cp:
        case Variant::cmtf:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K1, p.Q},
                    {&ModelParams::T, p.K1, p.R}};
        case Variant::pitf:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K1, p.Q},
                    {&ModelParams::T, p.K1, p.R},
                    {&ModelParams::W, p.K1, p.Q},
                    {&ModelParams::M, p.K1, p.P},
                    {&ModelParams::N, p.K1, p.R}};
        case Variant::tucker:
            return {{&ModelParams::U, p.K1, p.P},
                    {&ModelParams::V, p.K2, p.Q},
                    {&ModelParams::T, p.K, p.R}};
        case Variant::mp:
        case Variant::random:
            return {};
    }
    return {};
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
    out.write(kMagic, 8);
    write_le<uint8_t>(out, static_cast<uint8_t>(params.variant));
    for (int d : {params.K1, params.K2, params.K, params.P, params.Q, params.R})
        write_le<uint32_t>(out, static_cast<uint32_t>(d));
    write_le<uint64_t>(out, params.vocab_hash);
    write_le<uint64_t>(out, params.seed);
    for (const auto& slot : matrix_slots(params))
        write_matrix(out, params.*(slot.member));
    if (params.variant == Variant::tucker)
        for (double d : params.core) write_f64(out, d);
    if (params.variant == Variant::mp)
        for (double d : params.popularity) write_f64(out, d);
}

ModelParams load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw HeaderMismatch("bad checkpoint magic");
    ModelParams params;
    params.variant = static_cast<Variant>(read_le<uint8_t>(in));
    params.K1 = static_cast<int>(read_le<uint32_t>(in));
    params.K2 = static_cast<int>(read_le<uint32_t>(in));
    params.K = static_cast<int>(read_le<uint32_t>(in));
    params.P = static_cast<int>(read_le<uint32_t>(in));
    params.Q = static_cast<int>(read_le<uint32_t>(in));
    params.R = static_cast<int>(read_le<uint32_t>(in));
    params.vocab_hash = read_le<uint64_t>(in);
    params.seed = read_le<uint64_t>(in);
    for (const auto& slot : matrix_slots(params))
        params.*(slot.member) = read_matrix(in, slot.rows, slot.cols);
    if (params.variant == Variant::tucker) {
        params.core.resize(static_cast<size_t>(params.K1) * params.K2 *
                           params.K);
        for (double& d : params.core) d = read_f64(in);
    }
    if (params.variant == Variant::mp) {
        params.popularity.resize(params.Q);
        for (double& d : params.popularity) d = read_f64(in);
    }
    if (!in) throw HeaderMismatch("truncated checkpoint");
    return params;
}

void save_checkpoint_file(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    save_checkpoint(out, params);
}

ModelParams load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint: " + path);
    return load_checkpoint(in);
}

}  // namespace trec
