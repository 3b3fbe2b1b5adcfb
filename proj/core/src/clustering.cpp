#include "condcls/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <json.hpp>

namespace condcls::clustering {

namespace {

constexpr std::size_t kDefaultEigengapCap = 16;

void check_simplex(const std::vector<double>& p, std::size_t K) {
    if (p.size() != K) throw BadProbability("probability vector has wrong length");
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0 + 1e-9)
            throw BadProbability("probability entry outside [0,1]");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw BadProbability("probability vector does not sum to 1");
}

bool graph_connected(const DenseMatrix& adjacency) {
    const std::size_t n = adjacency.rows;
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> queue{0};
    seen[0] = true;
    std::size_t visited = 1;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (std::size_t v = 0; v < n; ++v) {
            if (adjacency.at(u, v) != 0.0 && !seen[v]) {
                seen[v] = true;
                ++visited;
                queue.push_back(v);
            }
        }
    }
    return visited == n;
}

}  // namespace

IndicatorMatrix compute_indicator_vectors(const std::vector<LabeledProbs>& samples,
                                          std::size_t K) {
    IndicatorMatrix out;
    out.num_classes = K;
    out.vectors = DenseMatrix(K, K);
    std::vector<std::size_t> counts(K, 0);
    for (const auto& s : samples) {
        if (s.label >= K) throw BadProbability("ground-truth label out of range");
        check_simplex(s.probs, K);
        ++counts[s.label];
        for (std::size_t j = 0; j < K; ++j) out.vectors.at(s.label, j) += s.probs[j];
    }
    for (std::size_t i = 0; i < K; ++i) {
        if (counts[i] == 0)
            throw MissingClass("class " + std::to_string(i) + " has no samples");
        for (std::size_t j = 0; j < K; ++j)
            out.vectors.at(i, j) /= static_cast<double>(counts[i]);
    }
    return out;
}

SimilarityGraph knn_similarity(const IndicatorMatrix& ind, std::size_t k) {
    const std::size_t n = ind.num_classes;
    SimilarityGraph g;
    g.n = n;
    g.adjacency = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::vector<double> d2(n);
        for (std::size_t j : others) d2[j] = squared_row_distance(ind.vectors, i, j);
        std::stable_sort(others.begin(), others.end(),
                         [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
        const std::size_t take = std::min(k, others.size());
        for (std::size_t t = 0; t < take; ++t) {
            g.adjacency.at(i, others[t]) = 1.0;
            g.adjacency.at(others[t], i) = 1.0;  // union symmetrization
        }
    }
    return g;
}

std::size_t min_connected_k(const IndicatorMatrix& ind) {
    const std::size_t n = ind.num_classes;
    for (std::size_t k = 1; k + 1 < n; ++k)
        if (graph_connected(knn_similarity(ind, k).adjacency)) return k;
    return n - 1;  // complete graph under union symmetrization
}

LaplacianPair laplacian(const SimilarityGraph& g) {
    const std::size_t n = g.n;
    LaplacianPair out{DenseMatrix(n, n), DenseMatrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) degree += g.adjacency.at(i, j);
        out.degree.at(i, i) = degree;
        for (std::size_t j = 0; j < n; ++j) out.laplacian.at(i, j) = -g.adjacency.at(i, j);
        out.laplacian.at(i, i) += degree;
    }
    return out;
}

std::size_t choose_k_eigengap(const std::vector<double>& eigenvalues, std::size_t k_max) {
    std::size_t best_k = 1;
    double best_gap = -1.0;
    for (std::size_t k = 1; k <= k_max && k < eigenvalues.size(); ++k) {
        const double gap = eigenvalues[k] - eigenvalues[k - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

DenseMatrix spectral_embed(const DenseMatrix& l, const DenseMatrix& d, std::size_t k) {
    const linalg::EigenResult eig = linalg::generalized_eig(l, d);
    const std::size_t n = l.rows;
    DenseMatrix y(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            y.at(i, j) = eig.eigenvectors.at(i, j);
            norm2 += y.at(i, j) * y.at(i, j);
        }
        const double norm = std::sqrt(norm2);
        if (norm < 1e-12)
            throw ZeroRow("spectral_embed: embedding row " + std::to_string(i) +
                          " has vanishing norm");
        for (std::size_t j = 0; j < k; ++j) y.at(i, j) /= norm;
    }
    return y;
}

ClusterAssignment assign_clusters(const IndicatorMatrix& ind,
                                  std::optional<std::size_t> k_override, std::uint64_t seed) {
    const std::size_t K = ind.num_classes;
    const std::size_t knn_k = min_connected_k(ind);
    const SimilarityGraph graph = knn_similarity(ind, knn_k);
    const LaplacianPair lap = laplacian(graph);

    std::size_t k1;
    if (k_override) {
        k1 = *k_override;
    } else {
        const linalg::EigenResult eig = linalg::generalized_eig(lap.laplacian, lap.degree);
        const std::size_t cap = std::min(K - 1, kDefaultEigengapCap);
        k1 = choose_k_eigengap(eig.eigenvalues, cap);
    }

    const DenseMatrix embedding = spectral_embed(lap.laplacian, lap.degree, k1);
    const linalg::KMeansResult km = linalg::kmeans(embedding, k1, seed);

    // Relabel clusters by first occurrence and drop any empty ones.
    ClusterAssignment out;
    out.num_classes = K;
    out.seed = seed;
    out.membership.assign(K, 0);
    std::vector<std::size_t> relabel(k1, k1);
    std::size_t next = 0;
    for (std::size_t i = 0; i < K; ++i) {
        const std::size_t raw = km.assignments[i];
        if (relabel[raw] == k1) relabel[raw] = next++;
        out.membership[i] = relabel[raw];
    }
    out.num_clusters = next;
    out.sizes.assign(next, 0);
    for (std::size_t i = 0; i < K; ++i) ++out.sizes[out.membership[i]];
    return out;
}

std::vector<std::size_t> cluster_members(const ClusterAssignment& a, std::size_t cluster) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < a.num_classes; ++i)
        if (a.membership[i] == cluster) members.push_back(i);
    return members;
}

std::string to_json(const ClusterAssignment& a) {
    nlohmann::json j;
    j["K"] = a.num_classes;
    j["K1"] = a.num_clusters;
    j["membership"] = a.membership;
    j["sizes"] = a.sizes;
    j["seed"] = a.seed;
    return j.dump(2);
}

ClusterAssignment assignment_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ClusterAssignment a;
    a.num_classes = j.at("K").get<std::size_t>();
    a.num_clusters = j.at("K1").get<std::size_t>();
    a.membership = j.at("membership").get<std::vector<std::size_t>>();
    a.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    a.seed = j.value("seed", std::uint64_t{0});
    if (a.membership.size() != a.num_classes || a.sizes.size() != a.num_clusters)
        throw BadProbability("cluster spec JSON is inconsistent");
    return a;
}

}  // namespace condcls::clustering
