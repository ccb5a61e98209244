#include "trec/features.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace trec {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'E', 'C', 'F', 'E', 'A', '1'};

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

void check_columns_complete(const std::vector<bool>& seen,
                            const Dataset& dataset) {
    for (int q = 0; q < dataset.Q; ++q)
        if (!seen[q]) throw MissingItem(dataset.item_ids[q]);
}

}  // namespace

void save_features(std::ostream& out, const FeatureMatrix& features,
                   const std::vector<std::string>& item_ids) {
    out.write(kMagic, 8);
    write_le<uint32_t>(out, static_cast<uint32_t>(features.K));
    write_le<uint32_t>(out, static_cast<uint32_t>(item_ids.size()));
    for (size_t q = 0; q < item_ids.size(); ++q) {
        write_le<uint16_t>(out, static_cast<uint16_t>(item_ids[q].size()));
        out.write(item_ids[q].data(),
                  static_cast<std::streamsize>(item_ids[q].size()));
        const double* col = features.data.col(static_cast<int>(q));
        for (int k = 0; k < features.K; ++k) {
            float f = static_cast<float>(col[k]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_le<uint32_t>(out, bits);
        }
    }
}

FeatureMatrix load_features(std::istream& in, const Dataset& dataset) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw HeaderMismatch("bad feature file magic");
    uint32_t k = read_le<uint32_t>(in);
    uint32_t q_file = read_le<uint32_t>(in);
    if (!in || k == 0) throw HeaderMismatch("bad feature file header");

    FeatureMatrix fm;
    fm.K = static_cast<int>(k);
    fm.Q = dataset.Q;
    fm.data = Matrix(fm.K, fm.Q);
    fm.block_dims = {{"features", fm.K}};

    std::vector<bool> seen(dataset.Q, false);
    std::vector<float> row(k);
    for (uint32_t rec = 0; rec < q_file; ++rec) {
        uint16_t len = read_le<uint16_t>(in);
        std::string id(len, '\0');
        in.read(id.data(), len);
        for (uint32_t i = 0; i < k; ++i) {
            uint32_t bits = read_le<uint32_t>(in);
            std::memcpy(&row[i], &bits, 4);
        }
        if (!in) throw HeaderMismatch("truncated feature file");
        auto it = dataset.item_index.find(id);
        if (it == dataset.item_index.end()) continue;  // not in vocab
        double* col = fm.data.col(it->second);
        for (uint32_t i = 0; i < k; ++i) {
            if (!std::isfinite(row[i]))
                throw NonFiniteEntry("non-finite feature for item " + id);
            col[i] = static_cast<double>(row[i]);
        }
        seen[it->second] = true;
    }
    check_columns_complete(seen, dataset);
    return fm;
}

FeatureMatrix load_features_tsv(std::istream& in, const Dataset& dataset) {
    FeatureMatrix fm;
    fm.Q = dataset.Q;
    std::vector<bool> seen(dataset.Q, false);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string id;
        ls >> id;
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (fm.K == 0) {
            if (vals.empty()) throw HeaderMismatch("feature line without values");
            fm.K = static_cast<int>(vals.size());
            fm.data = Matrix(fm.K, fm.Q);
            fm.block_dims = {{"features", fm.K}};
        }
        if (static_cast<int>(vals.size()) != fm.K)
            throw HeaderMismatch("inconsistent feature dimension for " + id);
        auto it = dataset.item_index.find(id);
        if (it == dataset.item_index.end()) continue;
        for (double x : vals)
            if (!std::isfinite(x))
                throw NonFiniteEntry("non-finite feature for item " + id);
        std::copy(vals.begin(), vals.end(), fm.data.col(it->second));
        seen[it->second] = true;
    }
    if (fm.K == 0) throw EmptyInput();
    check_columns_complete(seen, dataset);
    return fm;
}

FeatureMatrix normalize_features(const FeatureMatrix& features,
                                 FeatureNorm mode) {
    FeatureMatrix out = features;
    if (mode == FeatureNorm::none || out.Q == 0) return out;
    if (mode == FeatureNorm::per_dim_standardize) {
        for (int k = 0; k < out.K; ++k) {
            double mean = 0.0;
            for (int q = 0; q < out.Q; ++q) mean += out.data(k, q);
            mean /= out.Q;
            double var = 0.0;
            for (int q = 0; q < out.Q; ++q) {
                double d = out.data(k, q) - mean;
                var += d * d;
            }
            var /= out.Q;  // population variance
            if (var <= 0.0) {
                for (int q = 0; q < out.Q; ++q) out.data(k, q) = 0.0;
            } else {
                double inv = 1.0 / std::sqrt(var);
                for (int q = 0; q < out.Q; ++q)
                    out.data(k, q) = (out.data(k, q) - mean) * inv;
            }
        }
    } else {  // unit_l2_column
        for (int q = 0; q < out.Q; ++q) {
            double* col = out.data.col(q);
            double norm = std::sqrt(dot(col, col, out.K));
            if (norm > 0.0)
                for (int k = 0; k < out.K; ++k) col[k] /= norm;
        }
    }
    return out;
}

SynthFeatures synth_features(int num_items, int dim, uint64_t seed) {
    Rng rng(seed);
    SynthFeatures out;
    out.features.K = dim;
    out.features.Q = num_items;
    out.features.data = Matrix(dim, num_items);
    out.features.block_dims = {{"synthetic", dim}};
    for (int q = 0; q < num_items; ++q) {
        double* col = out.features.data.col(q);
        for (int k = 0; k < dim; ++k) col[k] = rng.normal();
    }
    return out;
}

FeatureMatrix planted_features(const std::vector<int>& item_group, int groups,
                               int dim, double noise, uint64_t seed) {
    Rng rng(seed);
    Matrix centroids(dim, groups);
    for (int g = 0; g < groups; ++g) {
        double* c = centroids.col(g);
        for (int k = 0; k < dim; ++k) c[k] = rng.normal();
    }
    FeatureMatrix fm;
    fm.K = dim;
    fm.Q = static_cast<int>(item_group.size());
    fm.data = Matrix(dim, fm.Q);
    fm.block_dims = {{"synthetic", dim}};
    for (int q = 0; q < fm.Q; ++q) {
        const double* c = centroids.col(item_group[q]);
        double* col = fm.data.col(q);
        for (int k = 0; k < dim; ++k) col[k] = c[k] + noise * rng.normal();
    }
    return fm;
}

SynthFeatures synth_features(int num_items, int dim, const PlantedSpec& spec,
                             uint64_t seed) {
    Rng rng(seed);
    SynthFeatures out;
    out.group.resize(num_items);
    for (int q = 0; q < num_items; ++q) out.group[q] = rng.next_int(spec.groups);
    out.features = planted_features(out.group, spec.groups, dim, spec.noise,
                                    rng.next_u64());
    return out;
}

}  // namespace trec
