#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetdiff/trimesh.hpp"

namespace tetdiff {

// Set of equally sized point clouds compared by the distribution metrics.
struct ShapeSet {
    std::vector<PointCloud> clouds;
    std::vector<std::string> ids;

    int size() const { return static_cast<int>(clouds.size()); }
};

enum class CloudDistance { CD, EMD };
enum class EmdMode { Exact, Approximate };

// Two-sided mean of squared nearest-neighbor distances.
double chamfer(const PointCloud& a, const PointCloud& b);

struct EmdResult {
    double cost = 0.0;          // mean Euclidean matching cost
    double certified_gap = 0.0; // upper bound on (cost - optimal) / optimal
};

// Optimal bijective matching between equal-size clouds. Exact mode solves
// the assignment problem (n <= 512); approximate mode runs an auction with
// epsilon scaling until the certified gap is at most 1%.
EmdResult emd_detail(const PointCloud& a, const PointCloud& b, EmdMode mode);
double emd(const PointCloud& a, const PointCloud& b, EmdMode mode = EmdMode::Approximate);

// Exact assignment solver (shortest augmenting paths with potentials);
// cost(i, j) for an n x n problem, returns the optimal total cost.
double solve_assignment(int n, const std::vector<double>& cost_matrix, std::vector<int>* match = nullptr);

double mmd(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist);
double coverage(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist);
double one_nna(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist);

// Voxel-occupancy Jensen-Shannon divergence over [-1,1]^3, natural log.
// Out-of-range points are clipped; the count lands in *clipped_out.
double jsd(const ShapeSet& gen, const ShapeSet& ref, int voxel_res = 28, int* clipped_out = nullptr);

std::pair<int, double> nearest_neighbor(const PointCloud& query, const ShapeSet& dataset,
                                        CloudDistance dist);

struct MetricsReport {
    double mmd_cd = 0.0, mmd_emd = 0.0;
    double cov_cd = 0.0, cov_emd = 0.0;
    double nna_cd = 0.0, nna_emd = 0.0;
    double jsd_value = 0.0;
    int gen_size = 0, ref_size = 0;
    int cloud_points = 0, emd_points = 0;
    std::uint64_t seed = 0;
};

struct MetricsOptions {
    bool with_emd = true;
    int emd_subsample = 512; // clouds are subsampled to this size for EMD metrics
    int jsd_resolution = 28;
    std::uint64_t seed = 0;
};

MetricsReport evaluate_sets(const ShapeSet& gen, const ShapeSet& ref, const MetricsOptions& opts = {});

std::string format_metrics_table(const MetricsReport& r);
void save_metrics_records(const MetricsReport& r, const std::string& path);

} // namespace tetdiff
