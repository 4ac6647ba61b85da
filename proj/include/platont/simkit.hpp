#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platont/linalg.hpp"
#include "platont/netmodel.hpp"

namespace platont {

struct SimParams {
    int latent_dim = 4;                 // q
    double congestion_threshold = 0.7;  // theta_c
    double ar_coeff = 0.9;
    double ar_noise = 0.1;

    double stationary_var() const { return ar_noise * ar_noise / (1.0 - ar_coeff * ar_coeff); }
};

// Per-link generative parameters: utilization is sigmoid(loading . z + bias).
struct LinkModel {
    std::vector<double> loading; // unit norm, length q
    double bias = 0.0;
    double base_delay_ms = 1.0;
    double capacity_mbps = 100.0;
};

struct LinkState {
    double delay_ms = 0.0;
    double loss_rate = 0.0;
    double avail_bw_mbps = 0.0;
    bool congested = false;
};

struct StateStep {
    std::vector<double> z;           // latent congestion factors at t
    std::vector<double> utilization; // per link
    std::vector<LinkState> links;
};

std::vector<LinkModel> build_link_models(const Network& net, const SimParams& sim,
                                         std::uint64_t seed);

// z_{t+1} = ar_coeff * z_t + ar_noise * eta_t with standard Gaussian eta;
// z_0 drawn from the stationary law. Step t consumes its own child stream of
// `seed` so fan-out across steps reproduces the sequential run exactly.
std::vector<StateStep> simulate_states_from_models(const std::vector<LinkModel>& models,
                                                   const SimParams& sim, int horizon,
                                                   std::uint64_t seed);
std::vector<StateStep> simulate_states(const Network& net, const SimParams& sim, int horizon,
                                       std::uint64_t seed);

struct PathMeasurement {
    double delay_ms = 0.0;
    double loss_rate = 0.0;
    double bottleneck_bw_mbps = 0.0;
};

// delay adds, loss composes as 1 - prod(1 - l_j), bandwidth bottlenecks.
PathMeasurement aggregate_path(const std::vector<LinkState>& links, const std::vector<int>& path);

enum class Indicator { Delay, Loss, Bandwidth };
enum class NoiseKind { Channel, Random };

const char* indicator_name(Indicator ind);
const char* noise_kind_name(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& s);

// Channel noise is multiplicative x*(1 + level*g); random noise is additive
// x + level*std_col(x)*g. Results are clamped to the indicator's domain.
Mat inject_noise(const Mat& clean, Indicator ind, double level, NoiseKind kind,
                 std::uint64_t seed);

struct OdScenario {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> masses;          // per node, LogNormal(0, 0.5)
    std::vector<double> base_flows;      // per pair, Mbps, gravity-scaled
    Mat od_routing;                      // |L| x |pairs| incidence
    std::vector<double> base_link_loads; // od_routing * base_flows
    double total_demand_mbps = 0.0;
};

OdScenario generate_od_scenario(const Network& net, const PathSet& od_paths, std::uint64_t seed,
                                double total_demand_mbps = 0.0);

struct TomographyDataset {
    Network net;
    PathSet paths;
    RoutingMatrix routing;
    SimParams sim;
    std::vector<LinkModel> link_models;
    OdScenario od;

    double clean_fraction = 0.2;
    double noise_level = 0.1;
    NoiseKind noise_kind = NoiseKind::Channel;
    std::uint64_t seed = 0;

    // time-indexed matrices, one row per sample
    Mat noisy_delay, noisy_loss, noisy_bw;    // N x |P|
    Mat clean_delay, clean_loss, clean_bw;    // N x |P| (ground truth, all rows)
    std::vector<std::uint8_t> clean_mask;     // training may use clean rows only where set
    Mat link_delay, link_loss, link_bw, link_util; // N x |L|
    Mat congested;                            // N x |L|, 0/1
    std::vector<double> od_scale;             // per sample

    int sample_count() const { return noisy_delay.rows; }
    int path_count() const { return noisy_delay.cols; }
    const Mat& noisy(Indicator ind) const;
    const Mat& clean(Indicator ind) const;
    int clean_label_count() const;
};

TomographyDataset build_dataset(const Network& net, const PathSet& paths, int horizon,
                                double clean_fraction, double noise_level, NoiseKind kind,
                                std::uint64_t seed, const SimParams& sim = {});

void save_dataset(const TomographyDataset& ds, const std::string& path);
TomographyDataset load_dataset(const std::string& path);

// Exact stationary variance of a link's delay under the generative law,
// by Gauss-Hermite quadrature over the Gaussian latent projection.
double stationary_delay_variance(const LinkModel& model, const SimParams& sim);

// Covariance matrix of root-to-leaf path delays under the independent-link
// idealization: entry (i,j) accumulates the delay variances of the links the
// two root paths share. This is the noise-free input for topology recovery.
Mat rootpath_delay_covariance(const Network& net, const std::vector<LinkModel>& models,
                              const SimParams& sim, int root, const std::vector<int>& leaves);

} // namespace platont
