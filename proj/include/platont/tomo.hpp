#pragma once

#include <string>
#include <vector>

#include "platont/linalg.hpp"
#include "platont/netmodel.hpp"

namespace platont {

// Per-path congestion thresholds mu + k*sigma calibrated on a noise-free split.
struct ThresholdPolicy {
    std::vector<double> mu;
    std::vector<double> sigma;
    double k = 2.0;
};

ThresholdPolicy calibrate_thresholds(const Mat& clean_path_delays, double k = 2.0);

std::vector<int> flag_congested_paths(const std::vector<double>& path_delays,
                                      const ThresholdPolicy& policy);

struct DiagnosisResult {
    std::vector<int> predicted_links;
    std::vector<double> scores;      // congested-path coverage per link
    std::vector<int> congested_paths;
};

// Greedy weighted set cover over the congested paths: repeatedly pick the
// link covering the most unexplained congested paths (ties to the smaller
// id); links on no congested path are never selected.
DiagnosisResult diagnose_congested_links(const std::vector<double>& path_delays,
                                         const RoutingMatrix& routing,
                                         const ThresholdPolicy& policy);

// Minimizes ||y - R x||^2 + ridge ||x - prior||^2 via the normal equations
// (SPD Cholesky). With nonneg, projected-gradient refinement runs until the
// KKT fixed-point residual drops below 1e-8.
std::vector<double> solve_linear_inverse(const Mat& r, const std::vector<double>& y, double ridge,
                                         bool nonneg, const std::vector<double>* prior = nullptr);

struct OdEstimate {
    std::vector<double> flows;
    double residual = 0.0; // ||y - R x_hat||_2
};

// Gravity-prior ridge estimate of OD flows from link loads; the prior is
// rescaled so its implied total load matches the measurements.
OdEstimate estimate_od(const std::vector<double>& link_loads, const Mat& od_routing,
                       const std::vector<double>& gravity_prior, double ridge = 0.01);

// loads_l = clamp(capacity_l - min over covering paths of bottleneck bw);
// links covered by no path report zero load.
std::vector<double> derive_link_loads(const std::vector<double>& path_bw, const Mat& routing,
                                      const std::vector<double>& capacities);

// Rooted logical topology over the monitored leaves in canonical form:
// node 0..L-1 = leaves (by leaf_ids order), node L = probing root, then
// internal nodes in depth-first order with children sorted by minimal leaf.
struct InferredTopology {
    std::vector<int> leaf_ids;
    int root_node = 0;  // canonical index of the probing root (= leaf count)
    Mat adjacency;      // symmetric binary over all canonical nodes
    std::vector<std::string> labels;
};

// Recursive neighbor joining on shared-path delay covariances: repeatedly
// merge the cluster set attaining the maximal pairwise covariance (within a
// relative tolerance, so equal-covariance siblings merge multiway), update
// covariances to the merged cluster by averaging, attach the final clusters
// to the probing root. Recovery is exact on the identifiable logical tree.
InferredTopology infer_topology_rnj(const Mat& covariance, const std::vector<int>& leaf_ids,
                                    double merge_tol_rel = 1e-9);

// Ground-truth side of the comparison: the tree rooted at `root`, pruned to
// subtrees holding monitored leaves, with pass-through internal nodes
// contracted, in the same canonical form.
InferredTopology canonical_logical_tree(const Network& net, int root,
                                        const std::vector<int>& leaf_ids);

// Fraction of differing off-diagonal adjacency entries; matrices of unequal
// size are zero-padded to the larger one.
double hamming_distance(const InferredTopology& a, const InferredTopology& b);
double frobenius_distance(const InferredTopology& a, const InferredTopology& b);

struct ClassificationScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fpr = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Division conventions: precision is 1 when nothing was predicted and the
// truth is empty, 0 when the truth is nonempty; recall is 1 for empty truth;
// F1 is 0 when P+R = 0; FPR divides by the negative count. Never NaN.
ClassificationScores classification_metrics(const std::vector<int>& predicted,
                                            const std::vector<int>& truth, int universe);
ClassificationScores accumulate_scores(const std::vector<long>& tp_fp_fn_tn);

struct GapStats {
    double mean = 0.0;
    double stddev = 0.0;
};

// Entry-wise absolute deviation statistics against a reference vector.
GapStats error_gap(const std::vector<double>& value, const std::vector<double>& reference);

} // namespace platont
