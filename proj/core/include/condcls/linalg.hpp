#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "condcls/matrix.hpp"

namespace condcls::linalg {

struct NonSymmetric : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingularDegree : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct KTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Full spectrum of a symmetric matrix. Eigenvalues ascending; column i of
/// `eigenvectors` pairs with eigenvalue i and has unit Euclidean norm.
struct EigenResult {
    std::vector<double> eigenvalues;
    DenseMatrix eigenvectors;
};

struct KMeansResult {
    std::vector<std::size_t> assignments;  // one cluster index per point
    DenseMatrix centroids;                 // k x dim
    double inertia = 0.0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric dense matrix.
/// Throws NonSymmetric if m is not symmetric within 1e-12 relative, and
/// NoConvergence if the off-diagonal mass does not vanish within max_sweeps.
EigenResult symmetric_eig(const DenseMatrix& m, double tol = 1e-12, int max_sweeps = 100);

/// Generalized eigenproblem L x = lambda D x for symmetric L and diagonal
/// nonnegative D, reduced to D^{-1/2} L D^{-1/2} on the nonzero-degree rows.
/// A zero-degree row is its own component and contributes eigenvalue 0 with
/// its standard basis vector. Throws SingularDegree if every degree is zero.
EigenResult generalized_eig(const DenseMatrix& l, const DenseMatrix& d, double tol = 1e-12);

/// Lloyd k-means with greedy max-min (farthest point) seeding. The start
/// point is the seed-th entry of the lexicographic ordering of the rows, so
/// the partition of distinct points does not depend on row order. All ties
/// break toward the lexicographically smaller point, then the lower index.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100);

}  // namespace condcls::linalg
