#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "platont/baselines.hpp"
#include "platont/neural.hpp"
#include "platont/simkit.hpp"
#include "platont/tomo.hpp"
#include "platont/trainer.hpp"

namespace platont {

enum class Pipeline { Clean, Raw, Pca, Cca, Platont };

Pipeline parse_pipeline(const std::string& name);
const char* pipeline_name(Pipeline p);

struct DenoisedViews {
    Mat delay, loss, bw;
    const Mat& of(Indicator ind) const;
};

// Produces the indicator views a downstream task consumes: ground truth
// (clean), the raw noisy measurements, PCA/CCA-denoised baselines (fit
// per scenario on standardized features), or the trained model's
// reconstructions.
DenoisedViews run_pipeline(const TomographyDataset& ds, Pipeline p,
                           const PlatontModel* model = nullptr);

// First quarter of the horizon calibrates thresholds, the rest is evaluated.
struct EvalWindows {
    int calib_end = 0;
    int eval_begin = 0;
    int eval_end = 0;
};
EvalWindows default_windows(int samples);

ThresholdPolicy calibrate_from_dataset(const TomographyDataset& ds, const EvalWindows& w);

struct LinkEval {
    ClassificationScores scores; // counts pooled over evaluated slots
};
LinkEval eval_link_task(const TomographyDataset& ds, const DenoisedViews& views,
                        const ThresholdPolicy& policy, const EvalWindows& w);

struct OdEval {
    std::vector<double> slot_mean; // per-slot mean error gap vs the reference
    std::vector<double> slot_std;
    double aggregate_mean = 0.0;
    double quantile50 = 0.0;
    double quantile80 = 0.0;
};
OdEval eval_od_task(const TomographyDataset& ds, const DenoisedViews& candidate,
                    const DenoisedViews& reference, const EvalWindows& w, int max_slots = 300);

struct TopoEval {
    std::vector<double> hamming;
    std::vector<double> frobenius;
    double mean_hamming = 0.0;
    double mean_frobenius = 0.0;
    bool applicable = false;
};
// Empirical delay covariances over disjoint windows of `window` samples feed
// recursive neighbor joining; distances are against the canonical logical
// tree rooted at the probing leaf.
TopoEval eval_topo_task(const TomographyDataset& ds, const DenoisedViews& views,
                        const EvalWindows& w, int window = 64);

double mse_to_clean(const TomographyDataset& ds, const DenoisedViews& views, Indicator ind,
                    const EvalWindows& w);

nlohmann::ordered_json evaluate_cell(const TomographyDataset& ds, Pipeline p,
                                     const PlatontModel* model, const DenoisedViews& reference,
                                     const std::string& task = "all");

struct RunConfig {
    struct Topo {
        std::string kind = "tree"; // tree | file
        int nodes = 19;
        std::string path;
        std::string name;
    };
    std::vector<Topo> topologies;
    std::vector<double> noise_levels{0.05, 0.1, 0.2};
    std::vector<std::string> noise_kinds{"channel", "random"};
    std::vector<std::string> pipelines{"clean", "raw", "pca", "cca", "platont"};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int horizon = 512;
    double clean_fraction = 0.2;
    TrainConfig train;
    std::string out_dir = "runs";
};

RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

// One cell per (topology, seed, noise level, noise kind, pipeline); a failed
// stage marks its cell and the remaining cells still run. The bundle carries
// a manifest (config hash, seeds, version) that pins the run for exact
// reproduction.
nlohmann::ordered_json run_experiment_matrix(const RunConfig& cfg);

// Markdown tables with relative degradation against the clean baseline;
// missing cells are flagged, never fabricated.
std::string render_report(const nlohmann::ordered_json& bundle);

// Numerical theory checks behind the `theory` subcommand.
nlohmann::ordered_json run_theorem1_sweep(long trials, std::uint64_t seed);
nlohmann::ordered_json run_proposition1_sweep(long trials, std::uint64_t seed);

std::uint64_t fnv1a(const std::string& s);

} // namespace platont
