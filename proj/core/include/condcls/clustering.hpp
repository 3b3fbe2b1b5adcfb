#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "condcls/linalg.hpp"
#include "condcls/matrix.hpp"

namespace condcls::clustering {

struct MissingClass : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadProbability : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroRow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One labeled softmax observation: a probability vector over K classes
/// plus the ground-truth class index.
struct LabeledProbs {
    std::vector<double> probs;
    std::size_t label = 0;
};

/// Per-class average softmax vectors. Row i is the indicator vector of
/// class i; every row is a simplex point.
struct IndicatorMatrix {
    std::size_t num_classes = 0;
    DenseMatrix vectors;  // K x K
};

/// Unweighted symmetric KNN adjacency with zero diagonal.
struct SimilarityGraph {
    std::size_t n = 0;
    DenseMatrix adjacency;  // entries in {0,1}
};

/// Class -> hyper-class map. Cluster labels are assigned by first
/// occurrence in class order, so label 0 is always class 0's cluster.
struct ClusterAssignment {
    std::size_t num_classes = 0;
    std::size_t num_clusters = 0;
    std::vector<std::size_t> membership;  // one cluster index per class
    std::vector<std::size_t> sizes;       // per-cluster class counts
    std::uint64_t seed = 0;
};

IndicatorMatrix compute_indicator_vectors(const std::vector<LabeledProbs>& samples, std::size_t K);

/// Smallest neighbor count k for which the KNN graph is connected.
std::size_t min_connected_k(const IndicatorMatrix& ind);

/// Edge (i,j) = 1 iff j is among i's k nearest rows (Euclidean) or vice
/// versa. Distance ties break toward the lower index.
SimilarityGraph knn_similarity(const IndicatorMatrix& ind, std::size_t k);

/// Degree matrix and unnormalized Laplacian L = D - A.
struct LaplacianPair {
    DenseMatrix degree;
    DenseMatrix laplacian;
};
LaplacianPair laplacian(const SimilarityGraph& g);

/// Number of eigenvalues before the largest consecutive gap, searched over
/// k in [1, k_max]. Ties keep the smallest k.
std::size_t choose_k_eigengap(const std::vector<double>& eigenvalues, std::size_t k_max);

/// Row-normalized matrix of the k generalized eigenvectors with smallest
/// eigenvalues. Throws ZeroRow if a row norm falls below 1e-12.
DenseMatrix spectral_embed(const DenseMatrix& l, const DenseMatrix& d, std::size_t k);

/// Full membership pipeline: minimal-k KNN graph, Laplacian, generalized
/// eigendecomposition, eigengap model selection (unless overridden),
/// spectral embedding, then k-means on the embedded rows.
ClusterAssignment assign_clusters(const IndicatorMatrix& ind,
                                  std::optional<std::size_t> k_override, std::uint64_t seed);

/// Classes of one cluster in ascending global index order.
std::vector<std::size_t> cluster_members(const ClusterAssignment& a, std::size_t cluster);

std::string to_json(const ClusterAssignment& a);
ClusterAssignment assignment_from_json(const std::string& text);

}  // namespace condcls::clustering
