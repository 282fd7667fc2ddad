#pragma once

// Minimal dense linear algebra: just enough for exact policy evaluation and
// occupancy solves. Row-major square systems, partial pivoting.

#include <cmath>
#include <cstddef>

#include "voisim/common.hpp"

namespace voisim {

struct Mat {
    size_t rows = 0, cols = 0;
    Vec a;  // row-major

    Mat() = default;
    Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(size_t i, size_t j) { return a[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return a[i * cols + j]; }
};

// Solves A x = b by Gaussian elimination with partial pivoting. A and b are
// consumed by value. Throws on (numerically) singular systems.
inline Vec solve_dense(Mat A, Vec b) {
    require(A.rows == A.cols, "solve_dense: matrix must be square");
    require(A.rows == b.size(), "solve_dense: size mismatch");
    const size_t n = A.rows;
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        double best = std::fabs(A(col, col));
        for (size_t r = col + 1; r < n; ++r) {
            double v = std::fabs(A(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        require(best > 0.0, "solve_dense: singular matrix");
        if (piv != col) {
            for (size_t j = col; j < n; ++j) std::swap(A(piv, j), A(col, j));
            std::swap(b[piv], b[col]);
        }
        const double d = A(col, col);
        for (size_t r = col + 1; r < n; ++r) {
            double f = A(r, col) / d;
            if (f == 0.0) continue;
            A(r, col) = 0.0;
            for (size_t j = col + 1; j < n; ++j) A(r, j) -= f * A(col, j);
            b[r] -= f * b[col];
        }
    }
    Vec x(n, 0.0);
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
        x[i] = s / A(i, i);
    }
    return x;
}

}  // namespace voisim
