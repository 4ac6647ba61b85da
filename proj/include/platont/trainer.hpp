#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platont/neural.hpp"
#include "platont/objectives.hpp"
#include "platont/simkit.hpp"
#include "platont/theorylab.hpp"

namespace platont {

struct TrainConfig {
    int batch_size = 64;
    int epochs = 100;
    double base_lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    int restart_period = 10; // first cosine cycle, epochs
    int restart_mult = 2;
    double grad_clip_max_norm = 1.0;
    std::uint64_t seed = 0;
    std::string task = "none"; // none | link | od | topo (topo has no surrogate)
    RecMode rec_mode = RecMode::HuberNormalized;
    LossWeights weights{1.0, 2.0, 0.0, 0.7, 1.0}; // task term off unless enabled
    int latent_dim = 32;
    std::vector<int> hidden = {128, 64};
    double dropout = 0.1;
    bool attention = true;
};

TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

// Cosine annealing with warm restarts: cycles of restart_period,
// restart_period*mult, ... and lr = base/2 * (1 + cos(pi * t / T)) inside a
// cycle. Accepts fractional epochs.
double lr_schedule(double epoch, const TrainConfig& cfg);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. NaN gradients raise NumericError.
void clip_global_norm(std::vector<double>& flat_grads, double max_norm);

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

// Bias-corrected adaptive-moment update with decoupled weight decay.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
                double lr, const TrainConfig& cfg);

struct TrainLogRow {
    long step = 0;
    double align = 0.0, rec = 0.0, task = 0.0, total = 0.0, lr = 0.0;
};

struct TrainResult {
    PlatontModel model; // best-total-loss checkpoint
    double best_total = 0.0;
    int best_epoch = -1;
    std::vector<TrainLogRow> log;
    std::vector<double> epoch_total; // mean total per epoch
    std::vector<GradientBundle> probes;
    bool aborted_nan = false;
    bool task_disabled_warning = false; // non-differentiable task forced lambda3 = 0
};

// Full training loop: seeded shuffling, four phases per batch (encode +
// alignment, decode + reconstruction, optional task surrogate, update), warm
// restarts, global-norm clipping, best-loss checkpointing. Divergence aborts
// with the last finite checkpoint retained.
TrainResult train(const TomographyDataset& ds, const TrainConfig& cfg);

// Per-loss-term encoder gradients (align, rec, task surrogate) on one batch,
// stacked as columns with the configured loss weights. Feeds the empirical
// Proposition 1 probe.
GradientBundle collect_gradient_bundle(const PlatontModel& model, const TomographyDataset& ds,
                                       const TrainConfig& cfg, int batch_start, int batch_size);

std::string train_log_csv(const std::vector<TrainLogRow>& rows);

} // namespace platont
