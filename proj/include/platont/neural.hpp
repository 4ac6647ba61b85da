#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "platont/linalg.hpp"

namespace platont {

struct Dense {
    Mat w;                 // in x out
    std::vector<double> b; // out
};

// Feed-forward stack: ReLU on hidden layers, identity output, inverted
// dropout on hidden activations in train mode.
struct Mlp {
    std::vector<Dense> layers;
    double dropout = 0.1;

    int in_dim() const { return layers.front().w.rows; }
    int out_dim() const { return layers.back().w.cols; }
    std::size_t param_count() const;

    // Glorot-uniform init, deterministic per seed. dims = {in, h1, ..., out}.
    static Mlp build(const std::vector<int>& dims, double dropout, std::uint64_t seed);
};

struct MlpCache {
    bool valid = false;
    bool train = false;
    Mat input;
    std::vector<Mat> pre;  // pre-activations per layer
    std::vector<Mat> act;  // layer outputs after relu (+ dropout)
    std::vector<Mat> mask; // dropout masks, hidden layers only
};

// Forward pass; in train mode dropout masks come from `mask_seed`, so equal
// seeds replay equal masks. Eval mode is deterministic.
Mat mlp_forward(const Mlp& mlp, const Mat& x, bool train, std::uint64_t mask_seed,
                MlpCache* cache = nullptr);

// Reverse-mode pass; adds parameter gradients into `grads` (same shapes as
// `mlp`) and returns the gradient with respect to the input batch.
Mat mlp_backward(const Mlp& mlp, const MlpCache& cache, const Mat& upstream, Mlp& grads);

// Encoder/decoder are the same stack with different dims; named entry points
// keep call sites honest about which direction they run.
Mat encode(const Mlp& enc, const Mat& x, bool train, std::uint64_t mask_seed,
           MlpCache* cache = nullptr);
Mat decode(const Mlp& dec, const Mat& z_agg, bool train, std::uint64_t mask_seed,
           MlpCache* cache = nullptr);

// Maps the concatenated latents (3d) to 3 logits; softmax temperature 1.
struct Attention {
    Mat w;
    std::vector<double> b;
    static Attention build(int latent_dim, std::uint64_t seed);
    std::size_t param_count() const { return w.a.size() + b.size(); }
};

struct AttentionCache {
    bool valid = false;
    Mat concat;  // N x 3d
    Mat weights; // N x 3, rows on the probability simplex
};

struct Aggregated {
    Mat z_agg;   // N x d, convex combination of the three latents
    Mat weights; // N x 3
};

Aggregated aggregate_latents(const Attention& att, const Mat& z0, const Mat& z1, const Mat& z2,
                             AttentionCache* cache = nullptr);

// Backward through the convex combination and the softmax; adds latent
// gradients into d_z and attention gradients into `grads`.
void aggregate_backward(const Attention& att, const AttentionCache& cache,
                        const std::array<const Mat*, 3>& zs, const Mat& d_zagg,
                        std::array<Mat, 3>& d_z, Attention& grads);

// Per-feature affine standardization fitted on the training split; stands in
// for the batch-norm layer (recorded as a deviation flag in checkpoints).
struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale; // max(std, 1e-8)

    static Scaler fit(const Mat& x);
    Mat apply(const Mat& x) const;
    Mat invert(const Mat& x) const;
};

struct ModelConfig {
    int input_dim = 0; // d_i, shared by the three path-level indicators
    std::vector<int> hidden = {128, 64};
    int latent_dim = 32;
    double dropout = 0.1;
    bool attention = true; // false restores per-channel decoding
};

// The full three-channel model: encoders phi_i, decoders psi_i, per-decoder
// attention, input scalers.
struct PlatontModel {
    ModelConfig cfg;
    std::array<Mlp, 3> enc;
    std::array<Mlp, 3> dec;
    std::array<Attention, 3> att;
    std::array<Scaler, 3> scaler;

    static PlatontModel build(const ModelConfig& cfg, std::uint64_t seed);
    std::size_t param_count() const;
    std::vector<double> to_flat() const;
    void from_flat(const std::vector<double>& flat);
};

// Gradient holder mirroring the model's parameter shapes.
struct ModelGrads {
    std::array<Mlp, 3> enc;
    std::array<Mlp, 3> dec;
    std::array<Attention, 3> att;

    static ModelGrads zeros_like(const PlatontModel& m);
    std::vector<double> to_flat() const; // scaler slots excluded (not trained)
};

struct ModelForward {
    std::array<Mat, 3> z;       // latents per channel
    std::array<Mat, 3> z_agg;   // per-decoder aggregated latent
    std::array<Mat, 3> att_w;   // attention weights per decoder
    std::array<Mat, 3> recon;   // standardized reconstructions
    std::array<MlpCache, 3> enc_cache;
    std::array<MlpCache, 3> dec_cache;
    std::array<AttentionCache, 3> att_cache;
};

ModelForward model_forward(const PlatontModel& m, const std::array<Mat, 3>& x_std, bool train,
                           std::uint64_t mask_seed);

// d_recon: gradients w.r.t. the standardized reconstructions; d_z_extra:
// extra latent gradients (alignment loss). Returns parameter gradients.
ModelGrads model_backward(const PlatontModel& m, const ModelForward& fwd,
                          const std::array<Mat, 3>& d_recon,
                          const std::array<Mat, 3>& d_z_extra);

// Checkpoint byte layout (little endian):
//   bytes 0..7   magic "PLNTCKPT"
//   bytes 8..15  u64 header length H
//   H bytes      UTF-8 JSON header (dims, config, deviation flags, count)
//   8 bytes      u64 parameter count P
//   P * 8 bytes  IEEE-754 doubles: encoders, decoders, attentions (model
//                flat order), then scaler mean/scale per channel
void save_checkpoint(const PlatontModel& m, const std::string& path);
PlatontModel load_checkpoint(const std::string& path);

} // namespace platont
