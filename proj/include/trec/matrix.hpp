#pragma once

#include <algorithm>
#include <cassert>
#include <vector>

namespace trec {

// Dense column-major matrix. Factor matrices are stored K x N with one
// column per entity, so column access is the hot path.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) {
        return data[static_cast<size_t>(j) * rows + i];
    }
    double operator()(int i, int j) const {
        return data[static_cast<size_t>(j) * rows + i];
    }

    double* col(int j) { return data.data() + static_cast<size_t>(j) * rows; }
    const double* col(int j) const {
        return data.data() + static_cast<size_t>(j) * rows;
    }

    bool empty() const { return data.empty(); }

    double frob_sq() const {
        double s = 0.0;
        for (double x : data) s += x * x;
        return s;
    }

    void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
};

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace trec
