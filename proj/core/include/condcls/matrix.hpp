#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace condcls {

/// Dense row-major matrix of doubles. The only storage type used by the
/// numerical kernels; kept deliberately minimal.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool square() const { return rows == cols && rows > 0; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Largest absolute entry; 0 for an empty matrix.
    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }

    /// Infinity norm (max absolute row sum).
    double inf_norm() const {
        double best = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += std::abs(at(i, j));
            best = std::max(best, s);
        }
        return best;
    }
};

inline double squared_row_distance(const DenseMatrix& m, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
        const double d = m.at(a, j) - m.at(b, j);
        s += d * d;
    }
    return s;
}

}  // namespace condcls
