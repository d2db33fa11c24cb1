#include "dk/cluster.hpp"

#include "dk/error.hpp"
#include "dk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dk::cluster {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 step over the combined value
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double sqdist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// k-means++: first centroid uniform, then D^2-weighted draws.
Mat seed_centroids(const Mat& points, int k, std::mt19937_64& rng) {
    const std::size_t n = points.rows, d = points.cols;
    Mat cent(static_cast<std::size_t>(k), d);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t chosen = first(rng);
    std::copy_n(points.row(chosen), d, cent.row(0));

    std::vector<double> best_d2(n);
    for (std::size_t i = 0; i < n; ++i) best_d2[i] = sqdist(points.row(i), cent.row(0), d);

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : best_d2) total += v;
        std::size_t next = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> pick(0.0, total);
            double r = pick(rng);
            next = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= best_d2[i];
                if (r <= 0.0) {
                    next = i;
                    break;
                }
            }
        } else {
            // all remaining points coincide with a chosen centroid
            std::uniform_int_distribution<std::size_t> any(0, n - 1);
            next = any(rng);
        }
        std::copy_n(points.row(next), d, cent.row(static_cast<std::size_t>(c)));
        for (std::size_t i = 0; i < n; ++i)
            best_d2[i] = std::min(best_d2[i],
                                  sqdist(points.row(i), cent.row(static_cast<std::size_t>(c)), d));
    }
    return cent;
}

} // namespace

ClusterResult lloyd_from(const Mat& points, const Mat& initial_centroids, int max_iter) {
    const std::size_t n = points.rows, d = points.cols;
    const int k = static_cast<int>(initial_centroids.rows);
    if (n < static_cast<std::size_t>(k))
        throw Error("kmeans: fewer points (" + std::to_string(n) + ") than clusters (" +
                    std::to_string(k) + ")");

    ClusterResult res;
    res.centroids = initial_centroids;
    res.assignments.assign(n, -1);
    res.estimated_k = k;

    std::vector<int> assign(n, -1);
    std::vector<double> dist2(n, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);

    for (int iter = 0; iter < max_iter; ++iter) {
        kernels::nearest_centroid(points.data.data(), static_cast<int>(n), static_cast<int>(d),
                                  res.centroids.data.data(), k, assign.data(), dist2.data());

        // Empty-cluster repair: give each empty cluster the point farthest
        // from its centroid, never emptying a donor cluster.
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[i])];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] != 0) continue;
            std::size_t worst = n;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(assign[i])] < 2) continue;
                if (dist2[i] > worst_d) {
                    worst_d = dist2[i];
                    worst = i;
                }
            }
            if (worst == n) continue; // nothing stealable
            --counts[static_cast<std::size_t>(assign[worst])];
            assign[worst] = c;
            ++counts[static_cast<std::size_t>(c)];
            dist2[worst] = 0.0;
        }

        for (int c = 0; c < k; ++c)
            std::fill_n(res.centroids.row(static_cast<std::size_t>(c)), d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* cr = res.centroids.row(static_cast<std::size_t>(assign[i]));
            const double* pr = points.row(i);
            for (std::size_t j = 0; j < d; ++j) cr[j] += pr[j];
        }
        for (int c = 0; c < k; ++c) {
            const auto cnt = counts[static_cast<std::size_t>(c)];
            if (cnt == 0) continue;
            double* cr = res.centroids.row(static_cast<std::size_t>(c));
            for (std::size_t j = 0; j < d; ++j) cr[j] /= static_cast<double>(cnt);
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += sqdist(points.row(i),
                              res.centroids.row(static_cast<std::size_t>(assign[i])), d);
        res.inertia_history.push_back(inertia);
        res.inertia = inertia;

        if (assign == res.assignments) break; // assignment fixpoint
        res.assignments = assign;
    }
    return res;
}

ClusterResult kmeans(const Mat& points, int k, std::uint64_t seed, int max_iter) {
    if (k < 1) throw Error("kmeans: k must be at least 1");
    if (points.rows < static_cast<std::size_t>(k))
        throw Error("kmeans: fewer points (" + std::to_string(points.rows) + ") than clusters (" +
                    std::to_string(k) + ")");
    std::mt19937_64 rng(seed);
    const Mat cent = seed_centroids(points, k, rng);
    return lloyd_from(points, cent, max_iter);
}

double bic_score(const Mat& points, const Mat& centroids, const std::vector<int>& assignments) {
    const std::size_t n = points.rows;
    const auto d = static_cast<double>(points.cols);
    const int k = static_cast<int>(centroids.rows);
    if (n <= static_cast<std::size_t>(k)) return -std::numeric_limits<double>::infinity();

    double sse = 0.0;
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
        sse += sqdist(points.row(i), centroids.row(static_cast<std::size_t>(assignments[i])),
                      points.cols);
        ++counts[static_cast<std::size_t>(assignments[i])];
    }
    const double nd = static_cast<double>(n);
    double variance = sse / (d * (nd - static_cast<double>(k)));
    variance = std::max(variance, 1e-30);

    double ll = -nd * d / 2.0 * std::log(2.0 * M_PI * variance) -
                d * (nd - static_cast<double>(k)) / 2.0 - nd * std::log(nd);
    for (int c = 0; c < k; ++c) {
        const auto cnt = static_cast<double>(counts[static_cast<std::size_t>(c)]);
        if (cnt > 0.0) ll += cnt * std::log(cnt);
    }
    // free parameters: k centroids of dimension d, k mixing weights, one shared variance
    const double params = static_cast<double>(k) * d + static_cast<double>(k) + 1.0;
    return ll - params / 2.0 * std::log(nd);
}

ClusterResult xmeans(const Mat& points, int k_min, int k_max, std::uint64_t seed) {
    if (k_min < 2) throw Error("xmeans: k_min must be at least 2 (forced split)");
    if (k_max < k_min) throw Error("xmeans: k_max must be >= k_min");
    if (points.rows < static_cast<std::size_t>(k_max))
        throw Error("xmeans: fewer points (" + std::to_string(points.rows) +
                    ") than k_max (" + std::to_string(k_max) + ")");

    ClusterResult current = kmeans(points, k_min, seed);
    const std::size_t d = points.cols;

    for (int round = 0;; ++round) {
        const int k = static_cast<int>(current.centroids.rows);
        if (k >= k_max) break;

        // Children centroids from accepted splits, parents kept otherwise.
        Mat next_centroids(0, d);
        std::vector<double> next_data;
        int next_k = 0;
        bool any_split = false;

        for (int c = 0; c < k; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < points.rows; ++i)
                if (current.assignments[i] == c) members.push_back(i);

            bool split = false;
            Mat child_centroids(0, d);
            if (members.size() >= 4 && next_k + (k - c) < k_max) {
                Mat sub(members.size(), d);
                for (std::size_t i = 0; i < members.size(); ++i)
                    std::copy_n(points.row(members[i]), d, sub.row(i));

                Mat parent_centroid(1, d);
                std::copy_n(current.centroids.row(static_cast<std::size_t>(c)), d,
                            parent_centroid.row(0));
                const double parent_bic =
                    bic_score(sub, parent_centroid, std::vector<int>(members.size(), 0));

                ClusterResult child = kmeans(sub, 2, mix_seed(seed,
                                                              static_cast<std::uint64_t>(round) * 1000 +
                                                                  static_cast<std::uint64_t>(c)));
                const double child_bic = bic_score(sub, child.centroids, child.assignments);
                if (child_bic > parent_bic) {
                    split = true;
                    child_centroids = child.centroids;
                }
            }

            if (split) {
                any_split = true;
                next_data.insert(next_data.end(), child_centroids.data.begin(),
                                 child_centroids.data.end());
                next_k += 2;
            } else {
                const double* cr = current.centroids.row(static_cast<std::size_t>(c));
                next_data.insert(next_data.end(), cr, cr + d);
                next_k += 1;
            }
        }

        if (!any_split) break;
        Mat centroids(static_cast<std::size_t>(next_k), d, std::move(next_data));
        current = lloyd_from(points, centroids);
    }

    // Final refinement at the estimated k, warm-started from the surviving
    // centroids so inertia cannot regress.
    ClusterResult refined = lloyd_from(points, current.centroids);
    refined.estimated_k = static_cast<int>(refined.centroids.rows);
    return refined;
}

} // namespace dk::cluster
