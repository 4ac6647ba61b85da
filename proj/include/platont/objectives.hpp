#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "platont/linalg.hpp"

namespace platont {

struct LossWeights {
    double lambda1 = 1.0; // alignment
    double lambda2 = 2.0; // reconstruction
    double lambda3 = 1.0; // task (0 disables)
    double tau = 0.7;
    double huber_delta = 1.0;
};

struct LossReport {
    double align = 0.0;
    double rec = 0.0;
    double task = 0.0;
    double total = 0.0;
    std::array<double, 3> sigma_k{1.0, 1.0, 1.0};
    bool sigma_floored = false;
};

struct AlignmentResult {
    double value = 0.0;
    std::vector<Mat> grads; // one per channel, same shape as its latents
};

// InfoNCE-style alignment over ordered channel pairs (i != j):
//   L = -(1/N) sum_{i!=j} sum_n log( exp(s_nn/tau) / ((1/N) sum_m exp(s_nm/tau)) )
// with s the cosine similarity; log-sum-exp computed max-shifted. The 1/N
// kept inside the log means perfectly aligned batches score exactly 0.
AlignmentResult alignment_loss(const std::vector<const Mat*>& latents, double tau);

enum class RecMode { HuberNormalized, PlainMse };

struct RecChannel {
    const Mat* recon = nullptr;      // reconstructions, N x d
    const Mat* noisy = nullptr;      // noisy measurements, N x d
    const Mat* clean = nullptr;      // clean targets (rows valid where mask set)
    const std::vector<std::uint8_t>* clean_mask = nullptr;
};

struct RecResult {
    double value = 0.0;
    std::vector<Mat> grads; // w.r.t. reconstructions
    std::vector<double> sigma;
    bool sigma_floored = false;
};

// Clean-labeled rows penalize (recon - clean), unlabeled rows (recon - noisy).
// HuberNormalized divides each indicator's mean Huber value by
// max(sigma_k, 1e-6), sigma_k = batch std of the clean targets, then averages
// over indicators. PlainMse sums per-indicator subset means of squared norms.
RecResult reconstruction_loss(const std::vector<RecChannel>& channels, double huber_delta,
                              RecMode mode);

struct TaskResult {
    double value = 0.0;
    Mat grad; // w.r.t. the raw-scale reconstructed indicator fed to the surrogate
};

// Differentiable link surrogate: ridge solve x_hat = (R^T R + ridge I)^-1 R^T y
// per sample, squared error against link labels; gradients flow through the
// closed-form solution.
TaskResult link_task_loss(const Mat& recon_path_delay, const Mat& link_delay_labels,
                          const Mat& routing, double ridge = 0.01);

// OD surrogate: per-link load = capacity - min over covering paths of the
// reconstructed bandwidth (argmin fixed from the forward pass), then the same
// ridge solve against OD flow labels.
TaskResult od_task_loss(const Mat& recon_path_bw, const std::vector<double>& capacities,
                        const Mat& routing, const Mat& od_routing, const Mat& od_labels,
                        double ridge = 0.01);

// Weighted sum per the training objective; throws NumericError naming the
// offending component on NaN.
LossReport total_loss(double align, double rec, double task, const LossWeights& w);

} // namespace platont
