#pragma once

// Two-way clustering of embedding vectors: agglomerative (Ward linkage,
// nearest-neighbor-chain) and k-means with restarts, plus purity/agreement
// scoring and the cooperate/defect labeling rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqlab/rng.hpp"

namespace sqlab {

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UnresolvedLabeling : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ClusterMethod { agglomerative, kmeans };
enum class ClusterRole { unlabeled, cooperate, defect };

struct ClusterModel {
    ClusterMethod method = ClusterMethod::agglomerative;
    std::vector<int> assignments;               // cluster id (0/1) per input vector
    std::array<ClusterRole, 2> roles = {ClusterRole::unlabeled, ClusterRole::unlabeled};

    int cluster_of_role(ClusterRole role) const {
        for (int c = 0; c < 2; ++c)
            if (roles[c] == role) return c;
        throw UnresolvedLabeling("cluster model has no cluster with the requested role");
    }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

inline void check_cluster_input(const std::vector<std::vector<double>>& vectors) {
    if (vectors.size() < 2)
        throw DegenerateInput("cluster_embeddings: need at least 2 vectors");
    const std::vector<double>& first = vectors.front();
    bool any_distinct = false;
    for (const auto& v : vectors) {
        if (v.size() != first.size())
            throw std::invalid_argument("cluster_embeddings: inconsistent dimensions");
        if (v != first) any_distinct = true;
    }
    if (!any_distinct)
        throw DegenerateInput("cluster_embeddings: all vectors identical");
}

// Ward-linkage agglomerative clustering via the nearest-neighbor chain,
// cut at two clusters. O(n^2) time and memory.
inline std::vector<int> agglomerative_two_way(const std::vector<std::vector<double>>& vectors) {
    const int n = static_cast<int>(vectors.size());
    std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
    auto d = [&dist, n](int i, int j) -> double& {
        return dist[static_cast<std::size_t>(i) * n + j];
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            d(i, j) = d(j, i) = detail::squared_distance(vectors[i], vectors[j]);

    std::vector<bool> active(n, true);
    std::vector<int> size(n, 1);
    struct Merge {
        int rep_a, rep_b;
        double height;
    };
    std::vector<Merge> merges;
    merges.reserve(n - 1);

    std::vector<int> chain;
    chain.reserve(n);
    int remaining = n;
    int scan_from = 0;
    while (remaining > 1) {
        if (chain.empty()) {
            while (!active[scan_from]) ++scan_from;
            chain.push_back(scan_from);
        }
        const int a = chain.back();
        int nearest = -1;
        double best = std::numeric_limits<double>::infinity();
        const int prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
        for (int j = 0; j < n; ++j) {
            if (!active[j] || j == a) continue;
            const double dj = d(a, j);
            // Prefer the chain predecessor on ties so reciprocal pairs close.
            if (dj < best || (dj == best && j == prev)) {
                best = dj;
                nearest = j;
            }
        }
        if (nearest == prev) {
            // Reciprocal nearest neighbors: merge a into prev's slot.
            chain.pop_back();
            chain.pop_back();
            const int b = nearest;
            merges.push_back({a, b, best});
            const double nab = size[a] + size[b];
            for (int k = 0; k < n; ++k) {
                if (!active[k] || k == a || k == b) continue;
                const double dk = ((size[a] + size[k]) * d(a, k) + (size[b] + size[k]) * d(b, k) -
                                   size[k] * d(a, b)) /
                                  (nab + size[k]);
                d(b, k) = d(k, b) = dk;
            }
            size[b] += size[a];
            active[a] = false;
            --remaining;
        } else {
            chain.push_back(nearest);
        }
    }

    // Sorting the merge list by height turns the chain order into the
    // dendrogram order; everything below the last (highest) merge forms the
    // two clusters.
    std::stable_sort(merges.begin(), merges.end(),
                     [](const Merge& x, const Merge& y) { return x.height < y.height; });
    detail::UnionFind uf(n);
    for (std::size_t m = 0; m + 1 < merges.size(); ++m)
        uf.unite(merges[m].rep_a, merges[m].rep_b);

    std::vector<int> assignment(n);
    const int root0 = uf.find(0);
    for (int i = 0; i < n; ++i) assignment[i] = uf.find(i) == root0 ? 0 : 1;
    return assignment;
}

// Lloyd's algorithm, k = 2, best inertia over `restarts` seeded restarts.
inline std::vector<int> kmeans_two_way(const std::vector<std::vector<double>>& vectors,
                                       Rng& rng, int restarts = 10) {
    const int n = static_cast<int>(vectors.size());
    const std::size_t dim = vectors.front().size();
    std::vector<int> best_assignment(n, 0);
    double best_inertia = std::numeric_limits<double>::infinity();

    for (int r = 0; r < restarts; ++r) {
        int i0 = static_cast<int>(rng.index_below(n));
        int i1 = i0;
        for (int tries = 0; tries < 1000 && vectors[i1] == vectors[i0]; ++tries)
            i1 = static_cast<int>(rng.index_below(n));
        if (vectors[i1] == vectors[i0]) continue;

        std::array<std::vector<double>, 2> centers = {vectors[i0], vectors[i1]};
        std::vector<int> assignment(n, -1);
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                const double d0 = detail::squared_distance(vectors[i], centers[0]);
                const double d1 = detail::squared_distance(vectors[i], centers[1]);
                const int c = d1 < d0 ? 1 : 0;
                if (c != assignment[i]) {
                    assignment[i] = c;
                    changed = true;
                }
            }
            if (!changed) break;
            for (int c = 0; c < 2; ++c) {
                std::fill(centers[c].begin(), centers[c].end(), 0.0);
                int count = 0;
                for (int i = 0; i < n; ++i) {
                    if (assignment[i] != c) continue;
                    ++count;
                    for (std::size_t k = 0; k < dim; ++k) centers[c][k] += vectors[i][k];
                }
                if (count > 0)
                    for (std::size_t k = 0; k < dim; ++k) centers[c][k] /= count;
            }
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i)
            inertia += detail::squared_distance(vectors[i], centers[assignment[i]]);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assignment = assignment;
        }
    }
    return best_assignment;
}

inline ClusterModel cluster_embeddings(const std::vector<std::vector<double>>& vectors,
                                       ClusterMethod method, Rng& rng) {
    check_cluster_input(vectors);
    ClusterModel model;
    model.method = method;
    model.assignments = method == ClusterMethod::agglomerative
                            ? agglomerative_two_way(vectors)
                            : kmeans_two_way(vectors, rng);
    return model;
}

// Fraction of points whose cluster's majority ground-truth label matches
// their own.
inline double cluster_purity(std::span<const int> assignments, std::span<const int> truth) {
    if (assignments.size() != truth.size() || assignments.empty())
        throw std::invalid_argument("cluster_purity: size mismatch");
    long counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < assignments.size(); ++i) counts[assignments[i]][truth[i]]++;
    const long hit = std::max(counts[0][0], counts[0][1]) + std::max(counts[1][0], counts[1][1]);
    return static_cast<double>(hit) / static_cast<double>(assignments.size());
}

// Fraction of points on which two 2-way assignments agree, maximized over
// the cluster-id permutation.
inline double assignment_agreement(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("assignment_agreement: size mismatch");
    long same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    const long flipped = static_cast<long>(a.size()) - same;
    return static_cast<double>(std::max(same, flipped)) / static_cast<double>(a.size());
}

// First two principal directions of the (centered) embedding cloud, by power
// iteration with deflation. Used for the 2-D projection dump.
inline std::array<std::vector<double>, 2> principal_plane(
    const std::vector<std::vector<double>>& vectors) {
    if (vectors.empty()) throw std::invalid_argument("principal_plane: empty input");
    const std::size_t n = vectors.size(), dim = vectors.front().size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& v : vectors)
        for (std::size_t k = 0; k < dim; ++k) mean[k] += v[k] / static_cast<double>(n);

    auto cov_apply = [&](const std::vector<double>& x, const std::vector<double>* deflate,
                         double lambda) {
        std::vector<double> y(dim, 0.0);
        for (const auto& v : vectors) {
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += (v[k] - mean[k]) * x[k];
            for (std::size_t k = 0; k < dim; ++k) y[k] += (v[k] - mean[k]) * dot / n;
        }
        if (deflate) {
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += (*deflate)[k] * x[k];
            for (std::size_t k = 0; k < dim; ++k) y[k] -= lambda * (*deflate)[k] * dot;
        }
        return y;
    };
    auto power = [&](const std::vector<double>* deflate, double lambda) {
        std::vector<double> x(dim, 0.0);
        for (std::size_t k = 0; k < dim; ++k) x[k] = 1.0 / std::sqrt(static_cast<double>(dim) + k);
        double norm = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            std::vector<double> y = cov_apply(x, deflate, lambda);
            norm = std::sqrt(detail::squared_distance(y, std::vector<double>(dim, 0.0)));
            if (norm < 1e-12) break;
            for (std::size_t k = 0; k < dim; ++k) y[k] /= norm;
            x = std::move(y);
        }
        return std::make_pair(x, norm);
    };
    auto [v1, l1] = power(nullptr, 0.0);
    auto [v2, l2] = power(&v1, l1);
    (void)l2;
    return {v1, v2};
}

inline std::array<double, 2> project2(const std::array<std::vector<double>, 2>& plane,
                                      std::span<const double> v) {
    std::array<double, 2> out{0.0, 0.0};
    for (std::size_t k = 0; k < v.size(); ++k) {
        out[0] += plane[0][k] * v[k];
        out[1] += plane[1][k] * v[k];
    }
    return out;
}

}  // namespace sqlab
