#include "condcls/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace condcls::linalg {

namespace {

void check_symmetric(const DenseMatrix& m, const char* who) {
    if (!m.square()) throw NonSymmetric(std::string(who) + ": matrix is not square");
    if (!m.all_finite()) throw NonSymmetric(std::string(who) + ": matrix has non-finite entries");
    const double scale = std::max(1.0, m.max_abs());
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (std::abs(m.at(i, j) - m.at(j, i)) > 1e-12 * scale)
                throw NonSymmetric(std::string(who) + ": matrix is not symmetric");
}

double off_diagonal_mass(const DenseMatrix& a) {
    double s = 0.0;
    for (std::size_t p = 0; p + 1 < a.rows; ++p)
        for (std::size_t q = p + 1; q < a.cols; ++q) s += std::abs(a.at(p, q));
    return s;
}

/// Fix the sign of each eigenvector column so the entry of largest magnitude
/// is positive. Keeps the decomposition deterministic.
void canonicalize_columns(DenseMatrix& v) {
    for (std::size_t j = 0; j < v.cols; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < v.rows; ++i) {
            const double a = std::abs(v.at(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (v.at(arg, j) < 0.0)
            for (std::size_t i = 0; i < v.rows; ++i) v.at(i, j) = -v.at(i, j);
    }
}

bool lex_less_row(const DenseMatrix& m, std::size_t a, std::size_t b) {
    for (std::size_t j = 0; j < m.cols; ++j) {
        if (m.at(a, j) < m.at(b, j)) return true;
        if (m.at(a, j) > m.at(b, j)) return false;
    }
    return false;
}

}  // namespace

EigenResult symmetric_eig(const DenseMatrix& m, double tol, int max_sweeps) {
    check_symmetric(m, "symmetric_eig");
    const std::size_t n = m.rows;
    DenseMatrix a = m;
    DenseMatrix v = DenseMatrix::identity(n);

    const double scale = std::max(1.0, m.max_abs()) * static_cast<double>(n);
    bool converged = off_diagonal_mass(a) <= tol * scale;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e100) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                const double app = a.at(p, p);
                const double aqq = a.at(q, q);
                a.at(p, p) = app - t * apq;
                a.at(q, q) = aqq + t * apq;
                a.at(p, q) = 0.0;
                a.at(q, p) = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a.at(r, p);
                    const double arq = a.at(r, q);
                    a.at(r, p) = c * arp - s * arq;
                    a.at(p, r) = a.at(r, p);
                    a.at(r, q) = s * arp + c * arq;
                    a.at(q, r) = a.at(r, q);
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vrp = v.at(r, p);
                    const double vrq = v.at(r, q);
                    v.at(r, p) = c * vrp - s * vrq;
                    v.at(r, q) = s * vrp + c * vrq;
                }
            }
        }
        converged = off_diagonal_mass(a) <= tol * scale;
    }
    if (!converged) throw NoConvergence("symmetric_eig: Jacobi sweeps exhausted");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a.at(i, i) < a.at(j, j); });

    EigenResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors.at(i, j) = v.at(i, order[j]);
    }
    canonicalize_columns(out.eigenvectors);
    return out;
}

EigenResult generalized_eig(const DenseMatrix& l, const DenseMatrix& d, double tol) {
    check_symmetric(l, "generalized_eig");
    if (d.rows != l.rows || d.cols != l.cols)
        throw NonSymmetric("generalized_eig: dimension mismatch between L and D");
    const std::size_t n = l.rows;
    const double dscale = std::max(1.0, d.max_abs());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && std::abs(d.at(i, j)) > 1e-12 * dscale)
                throw NonSymmetric("generalized_eig: D is not diagonal");
            if (i == j && d.at(i, j) < -1e-12 * dscale)
                throw NonSymmetric("generalized_eig: D has a negative degree");
        }

    std::vector<std::size_t> nz;
    std::vector<std::size_t> zero;
    for (std::size_t i = 0; i < n; ++i) {
        if (d.at(i, i) > 1e-12 * dscale)
            nz.push_back(i);
        else
            zero.push_back(i);
    }
    if (nz.empty()) throw SingularDegree("generalized_eig: all degrees are zero");

    // Reduce on the nonzero-degree rows: B = D^{-1/2} L D^{-1/2}.
    const std::size_t m = nz.size();
    DenseMatrix b(m, m);
    std::vector<double> inv_sqrt(m);
    for (std::size_t a = 0; a < m; ++a) inv_sqrt[a] = 1.0 / std::sqrt(d.at(nz[a], nz[a]));
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t c = 0; c < m; ++c) b.at(a, c) = l.at(nz[a], nz[c]) * inv_sqrt[a] * inv_sqrt[c];
    // Enforce exact symmetry against rounding in the scaling.
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t c = a + 1; c < m; ++c) {
            const double avg = 0.5 * (b.at(a, c) + b.at(c, a));
            b.at(a, c) = avg;
            b.at(c, a) = avg;
        }
    EigenResult reduced = symmetric_eig(b, tol);

    struct Pair {
        double value;
        std::vector<double> vec;
    };
    std::vector<Pair> pairs;
    pairs.reserve(n);
    for (std::size_t i : zero) {
        Pair p;
        p.value = 0.0;
        p.vec.assign(n, 0.0);
        p.vec[i] = 1.0;
        pairs.push_back(std::move(p));
    }
    for (std::size_t j = 0; j < m; ++j) {
        Pair p;
        p.value = reduced.eigenvalues[j];
        p.vec.assign(n, 0.0);
        double norm2 = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            p.vec[nz[a]] = reduced.eigenvectors.at(a, j) * inv_sqrt[a];
            norm2 += p.vec[nz[a]] * p.vec[nz[a]];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : p.vec) x *= inv;
        pairs.push_back(std::move(p));
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.value < b.value; });

    EigenResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = pairs[j].value;
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors.at(i, j) = pairs[j].vec[i];
    }
    canonicalize_columns(out.eigenvectors);
    return out;
}

namespace {

/// Greedy max-min seeding. The start point is picked by seed out of the
/// lexicographic ordering of the rows, so the chosen centers depend on the
/// point set, not on row order.
std::vector<std::size_t> farthest_point_seeds(const DenseMatrix& points, std::size_t k,
                                              std::uint64_t seed) {
    const std::size_t n = points.rows;
    std::vector<std::size_t> lex(n);
    std::iota(lex.begin(), lex.end(), std::size_t{0});
    std::stable_sort(lex.begin(), lex.end(),
                     [&](std::size_t a, std::size_t b) { return lex_less_row(points, a, b); });

    std::vector<std::size_t> centers;
    centers.push_back(lex[static_cast<std::size_t>(seed % n)]);
    std::vector<double> min_d2(n);
    for (std::size_t i = 0; i < n; ++i) min_d2[i] = squared_row_distance(points, i, centers[0]);
    while (centers.size() < k) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (min_d2[i] > min_d2[best]) {
                best = i;
            } else if (min_d2[i] == min_d2[best] && lex_less_row(points, i, best)) {
                best = i;  // equal max-min distance: lexicographically smaller row wins
            }
        }
        centers.push_back(best);
        for (std::size_t i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], squared_row_distance(points, i, best));
    }
    return centers;
}

double point_centroid_d2(const DenseMatrix& points, std::size_t i, const DenseMatrix& centroids,
                         std::size_t c) {
    double s = 0.0;
    for (std::size_t j = 0; j < points.cols; ++j) {
        const double d = points.at(i, j) - centroids.at(c, j);
        s += d * d;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter) {
    const std::size_t n = points.rows;
    const std::size_t dim = points.cols;
    if (k == 0) throw KTooLarge("kmeans: k must be at least 1");
    if (k > n) throw KTooLarge("kmeans: k exceeds the number of points");
    if (max_iter == 0) throw KTooLarge("kmeans: max_iter must be at least 1");

    const std::vector<std::size_t> seeds = farthest_point_seeds(points, k, seed);
    DenseMatrix centroids(k, dim);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < dim; ++j) centroids.at(c, j) = points.at(seeds[c], j);

    std::vector<std::size_t> assign(n, 0);
    std::vector<std::size_t> prev(n, k);  // k = sentinel, differs from any cluster
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d2 = point_centroid_d2(points, i, centroids, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double d2 = point_centroid_d2(points, i, centroids, c);
                if (d2 < best_d2) {  // ties keep the lowest cluster index
                    best_d2 = d2;
                    best = c;
                }
            }
            assign[i] = best;
        }
        if (assign == prev) break;
        prev = assign;

        std::vector<std::size_t> counts(k, 0);
        DenseMatrix next(k, dim);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) next.at(assign[i], j) += points.at(i, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j)
                    next.at(c, j) /= static_cast<double>(counts[c]);

        // Empty-cluster repair: re-seed at the point farthest from its centroid.
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = n;
            double far_d2 = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d2 = point_centroid_d2(points, i, next, assign[i]);
                if (d2 > far_d2 || (d2 == far_d2 && far < n && lex_less_row(points, i, far))) {
                    far_d2 = d2;
                    far = i;
                }
            }
            if (far < n) {
                taken[far] = true;
                for (std::size_t j = 0; j < dim; ++j) next.at(c, j) = points.at(far, j);
            }
        }
        centroids = next;
    }

    KMeansResult out;
    out.assignments = assign;
    out.centroids = centroids;
    out.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        out.inertia += point_centroid_d2(points, i, centroids, assign[i]);
    return out;
}

}  // namespace condcls::linalg
