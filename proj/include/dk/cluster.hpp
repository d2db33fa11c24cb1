#pragma once

// k-means with known k (k-means++ seeding, Lloyd iterations, empty-cluster
// repair) and x-means speaker-count estimation with a forced minimum of two
// clusters and BIC-scored binary splits.

#include "dk/mat.hpp"

#include <cstdint>
#include <vector>

namespace dk::cluster {

struct ClusterResult {
    std::vector<int> assignments;        // label per input row, in [0, k)
    Mat centroids;                       // k x D
    double inertia = 0.0;                // sum of squared distances to assigned centroids
    std::vector<double> inertia_history; // one value per Lloyd iteration, non-increasing
    int estimated_k = 0;
};

ClusterResult kmeans(const Mat& points, int k, std::uint64_t seed, int max_iter = 100);

// Lloyd iterations from explicitly given starting centroids (no re-seeding).
ClusterResult lloyd_from(const Mat& points, const Mat& initial_centroids, int max_iter = 100);

// Starts at k_min centroids (k_min >= 2), repeatedly accepts BIC-improving
// two-way splits up to k_max, then refines the surviving centroids with
// Lloyd iterations over the full data.
ClusterResult xmeans(const Mat& points, int k_min, int k_max, std::uint64_t seed);

// Spherical-Gaussian BIC of a clustering (shared variance); higher is better.
double bic_score(const Mat& points, const Mat& centroids, const std::vector<int>& assignments);

} // namespace dk::cluster
