#include "platont/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "platont/errors.hpp"
#include "platont/rng.hpp"

namespace platont {

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open train config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("train config parse failure: " + std::string(e.what()));
    }
    TrainConfig cfg;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.base_lr = j.value("base_lr", cfg.base_lr);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.restart_period = j.value("restart_period", cfg.restart_period);
    cfg.restart_mult = j.value("restart_mult", cfg.restart_mult);
    cfg.grad_clip_max_norm = j.value("grad_clip_max_norm", cfg.grad_clip_max_norm);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.task = j.value("task", cfg.task);
    const std::string rec = j.value("rec_mode", std::string("huber-normalized"));
    if (rec == "huber-normalized")
        cfg.rec_mode = RecMode::HuberNormalized;
    else if (rec == "plain-mse")
        cfg.rec_mode = RecMode::PlainMse;
    else
        throw FormatError("train config: unknown rec_mode " + rec);
    cfg.weights.lambda1 = j.value("lambda1", cfg.weights.lambda1);
    cfg.weights.lambda2 = j.value("lambda2", cfg.weights.lambda2);
    cfg.weights.lambda3 = j.value("lambda3", cfg.weights.lambda3);
    cfg.weights.tau = j.value("tau", cfg.weights.tau);
    cfg.weights.huber_delta = j.value("huber_delta", cfg.weights.huber_delta);
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
    cfg.dropout = j.value("dropout", cfg.dropout);
    cfg.attention = j.value("attention", cfg.attention);
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["base_lr"] = cfg.base_lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["weight_decay"] = cfg.weight_decay;
    j["restart_period"] = cfg.restart_period;
    j["restart_mult"] = cfg.restart_mult;
    j["grad_clip_max_norm"] = cfg.grad_clip_max_norm;
    j["seed"] = cfg.seed;
    j["task"] = cfg.task;
    j["rec_mode"] = cfg.rec_mode == RecMode::HuberNormalized ? "huber-normalized" : "plain-mse";
    j["lambda1"] = cfg.weights.lambda1;
    j["lambda2"] = cfg.weights.lambda2;
    j["lambda3"] = cfg.weights.lambda3;
    j["tau"] = cfg.weights.tau;
    j["huber_delta"] = cfg.weights.huber_delta;
    j["latent_dim"] = cfg.latent_dim;
    j["hidden"] = cfg.hidden;
    j["dropout"] = cfg.dropout;
    j["attention"] = cfg.attention;
    return j.dump(2) + "\n";
}

double lr_schedule(double epoch, const TrainConfig& cfg) {
    if (epoch < 0.0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
    double t = epoch;
    double period = cfg.restart_period;
    while (t >= period) {
        t -= period;
        period *= cfg.restart_mult;
    }
    return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * t / period));
}

void clip_global_norm(std::vector<double>& flat_grads, double max_norm) {
    double sq = 0.0;
    for (double g : flat_grads) {
        if (std::isnan(g)) throw NumericError("clip_global_norm: NaN gradient");
        sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (double& g : flat_grads) g *= s;
    }
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
                double lr, const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeError("adamw_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ShapeError("adamw_step: state size mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * params[i]);
    }
}

namespace {

Mat slice_rows(const Mat& m, const std::vector<int>& idx, int start, int count) {
    Mat out(count, m.cols);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < m.cols; ++j) out(i, j) = m(idx[start + i], j);
    return out;
}

struct BatchViews {
    std::array<Mat, 3> x_std;      // standardized noisy inputs
    std::array<Mat, 3> noisy_std;  // standardized noisy targets
    std::array<Mat, 3> clean_std;  // standardized clean targets (valid where mask)
    std::vector<std::uint8_t> mask;
    Mat link_delay;     // raw labels for the link surrogate
    Mat od_labels;      // raw labels for the od surrogate
};

BatchViews make_batch(const TomographyDataset& ds, const PlatontModel& model,
                      const std::vector<int>& idx, int start, int count, bool want_od) {
    BatchViews b;
    const std::array<Indicator, 3> inds{Indicator::Delay, Indicator::Loss, Indicator::Bandwidth};
    for (int c = 0; c < 3; ++c) {
        const Mat noisy = slice_rows(ds.noisy(inds[c]), idx, start, count);
        const Mat clean = slice_rows(ds.clean(inds[c]), idx, start, count);
        b.x_std[c] = model.scaler[c].apply(noisy);
        b.noisy_std[c] = b.x_std[c];
        b.clean_std[c] = model.scaler[c].apply(clean);
    }
    b.mask.resize(count);
    for (int i = 0; i < count; ++i) b.mask[i] = ds.clean_mask[idx[start + i]];
    b.link_delay = slice_rows(ds.link_delay, idx, start, count);
    if (want_od) {
        b.od_labels = Mat(count, static_cast<int>(ds.od.base_flows.size()));
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < b.od_labels.cols; ++j)
                b.od_labels(i, j) = ds.od.base_flows[j] * ds.od_scale[idx[start + i]];
    }
    return b;
}

struct BatchLosses {
    LossReport report;
    ModelGrads grads;
};

// One forward/backward over a batch; task_kind: 0 none, 1 link, 2 od.
BatchLosses batch_pass(const PlatontModel& model, const TomographyDataset& ds,
                       const BatchViews& b, const TrainConfig& cfg, int task_kind, bool train,
                       std::uint64_t mask_seed) {
    ModelForward fwd = model_forward(model, b.x_std, train, mask_seed);

    AlignmentResult align =
        alignment_loss({&fwd.z[0], &fwd.z[1], &fwd.z[2]}, cfg.weights.tau);

    std::vector<RecChannel> rec_ch(3);
    for (int c = 0; c < 3; ++c)
        rec_ch[c] = {&fwd.recon[c], &b.noisy_std[c], &b.clean_std[c], &b.mask};
    RecResult rec = reconstruction_loss(rec_ch, cfg.weights.huber_delta, cfg.rec_mode);

    TaskResult task;
    std::array<Mat, 3> d_recon;
    for (int c = 0; c < 3; ++c) {
        d_recon[c] = rec.grads[c];
        for (double& v : d_recon[c].a) v *= cfg.weights.lambda2;
    }
    if (task_kind == 1) {
        const Mat recon_raw = model.scaler[0].invert(fwd.recon[0]);
        task = link_task_loss(recon_raw, b.link_delay, ds.routing.entries);
        // chain through the unstandardization: d(std) = d(raw) * scale
        for (int i = 0; i < task.grad.rows; ++i)
            for (int j = 0; j < task.grad.cols; ++j)
                d_recon[0](i, j) += cfg.weights.lambda3 * task.grad(i, j) * model.scaler[0].scale[j];
    } else if (task_kind == 2) {
        const Mat recon_raw = model.scaler[2].invert(fwd.recon[2]);
        std::vector<double> caps(ds.net.links.size());
        for (std::size_t l = 0; l < caps.size(); ++l) caps[l] = ds.net.links[l].capacity_mbps;
        task = od_task_loss(recon_raw, caps, ds.routing.entries, ds.od.od_routing, b.od_labels);
        for (int i = 0; i < task.grad.rows; ++i)
            for (int j = 0; j < task.grad.cols; ++j)
                d_recon[2](i, j) += cfg.weights.lambda3 * task.grad(i, j) * model.scaler[2].scale[j];
    }

    std::array<Mat, 3> d_z_extra;
    for (int c = 0; c < 3; ++c) {
        d_z_extra[c] = align.grads[c];
        for (double& v : d_z_extra[c].a) v *= cfg.weights.lambda1;
    }

    BatchLosses out;
    out.report = total_loss(align.value, rec.value, task.value, cfg.weights);
    out.report.sigma_k = {rec.sigma[0], rec.sigma[1], rec.sigma[2]};
    out.report.sigma_floored = rec.sigma_floored;
    out.grads = model_backward(model, fwd, d_recon, d_z_extra);
    return out;
}

std::vector<double> encoder_grads_flat(const ModelGrads& g) {
    std::vector<double> flat;
    for (int c = 0; c < 3; ++c)
        for (const Dense& l : g.enc[c].layers) {
            flat.insert(flat.end(), l.w.a.begin(), l.w.a.end());
            flat.insert(flat.end(), l.b.begin(), l.b.end());
        }
    return flat;
}

} // namespace

GradientBundle collect_gradient_bundle(const PlatontModel& model, const TomographyDataset& ds,
                                       const TrainConfig& cfg, int batch_start, int batch_size) {
    std::vector<int> idx(ds.sample_count());
    std::iota(idx.begin(), idx.end(), 0);
    const bool od = cfg.task == "od";
    BatchViews b = make_batch(ds, model, idx, batch_start, batch_size, true);

    ModelForward fwd = model_forward(model, b.x_std, false, 0);
    const std::array<Mat, 3> zero_recon{Mat(batch_size, model.cfg.input_dim),
                                        Mat(batch_size, model.cfg.input_dim),
                                        Mat(batch_size, model.cfg.input_dim)};
    const std::array<Mat, 3> zero_z{Mat(batch_size, model.cfg.latent_dim),
                                    Mat(batch_size, model.cfg.latent_dim),
                                    Mat(batch_size, model.cfg.latent_dim)};

    // alignment term
    AlignmentResult align = alignment_loss({&fwd.z[0], &fwd.z[1], &fwd.z[2]}, cfg.weights.tau);
    ModelGrads g_align = model_backward(model, fwd, zero_recon,
                                        {align.grads[0], align.grads[1], align.grads[2]});

    // reconstruction term
    std::vector<RecChannel> rec_ch(3);
    for (int c = 0; c < 3; ++c)
        rec_ch[c] = {&fwd.recon[c], &b.noisy_std[c], &b.clean_std[c], &b.mask};
    RecResult rec = reconstruction_loss(rec_ch, cfg.weights.huber_delta, cfg.rec_mode);
    ModelGrads g_rec =
        model_backward(model, fwd, {rec.grads[0], rec.grads[1], rec.grads[2]}, zero_z);

    // task surrogate term (always the differentiable ridge form for the probe)
    std::array<Mat, 3> d_recon_task = zero_recon;
    if (od) {
        const Mat recon_raw = model.scaler[2].invert(fwd.recon[2]);
        std::vector<double> caps(ds.net.links.size());
        for (std::size_t l = 0; l < caps.size(); ++l) caps[l] = ds.net.links[l].capacity_mbps;
        TaskResult task =
            od_task_loss(recon_raw, caps, ds.routing.entries, ds.od.od_routing, b.od_labels);
        for (int i = 0; i < task.grad.rows; ++i)
            for (int j = 0; j < task.grad.cols; ++j)
                d_recon_task[2](i, j) = task.grad(i, j) * model.scaler[2].scale[j];
    } else {
        const Mat recon_raw = model.scaler[0].invert(fwd.recon[0]);
        TaskResult task = link_task_loss(recon_raw, b.link_delay, ds.routing.entries);
        for (int i = 0; i < task.grad.rows; ++i)
            for (int j = 0; j < task.grad.cols; ++j)
                d_recon_task[0](i, j) = task.grad(i, j) * model.scaler[0].scale[j];
    }
    ModelGrads g_task = model_backward(model, fwd, d_recon_task, zero_z);

    const std::vector<double> f_align = encoder_grads_flat(g_align);
    const std::vector<double> f_rec = encoder_grads_flat(g_rec);
    const std::vector<double> f_task = encoder_grads_flat(g_task);

    GradientBundle bundle;
    bundle.gradients = Mat(static_cast<int>(f_align.size()), 3);
    for (std::size_t i = 0; i < f_align.size(); ++i) {
        bundle.gradients(static_cast<int>(i), 0) = f_align[i];
        bundle.gradients(static_cast<int>(i), 1) = f_rec[i];
        bundle.gradients(static_cast<int>(i), 2) = f_task[i];
    }
    bundle.lambda = {cfg.weights.lambda1, cfg.weights.lambda2, cfg.weights.lambda3};
    return bundle;
}

TrainResult train(const TomographyDataset& ds, const TrainConfig& cfg) {
    const int n = ds.sample_count();
    if (n < cfg.batch_size)
        throw std::invalid_argument("train: dataset smaller than batch size");

    TrainConfig run_cfg = cfg;
    TrainResult res;
    if (run_cfg.weights.lambda3 > 0.0 && run_cfg.task == "topo") {
        // no differentiable surrogate; gradients cannot reach the decoders
        res.task_disabled_warning = true;
        run_cfg.weights.lambda3 = 0.0;
    }
    const int task_kind = run_cfg.weights.lambda3 > 0.0
                              ? (run_cfg.task == "od" ? 2 : (run_cfg.task == "link" ? 1 : 0))
                              : 0;

    ModelConfig mc;
    mc.input_dim = ds.path_count();
    mc.hidden = run_cfg.hidden;
    mc.latent_dim = run_cfg.latent_dim;
    mc.dropout = run_cfg.dropout;
    mc.attention = run_cfg.attention;
    PlatontModel model = PlatontModel::build(mc, stream_seed(run_cfg.seed, 0xA0DE1));
    model.scaler[0] = Scaler::fit(ds.noisy_delay);
    model.scaler[1] = Scaler::fit(ds.noisy_loss);
    model.scaler[2] = Scaler::fit(ds.noisy_bw);

    std::vector<double> params = model.to_flat();
    AdamState adam;
    const int steps_per_epoch = n / run_cfg.batch_size;

    res.model = model;
    res.best_total = std::numeric_limits<double>::infinity();

    const std::vector<int> probe_epochs = {0, run_cfg.epochs / 2, run_cfg.epochs - 1};
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    long step = 0;
    for (int epoch = 0; epoch < run_cfg.epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(run_cfg.seed, 0xE0000 + static_cast<std::uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
            std::swap(idx[i], idx[j]);
        }
        double epoch_sum = 0.0;
        for (int bi = 0; bi < steps_per_epoch; ++bi, ++step) {
            BatchViews batch = make_batch(ds, model, idx, bi * run_cfg.batch_size,
                                          run_cfg.batch_size, task_kind == 2);
            const double lr =
                lr_schedule(epoch + static_cast<double>(bi) / steps_per_epoch, run_cfg);
            try {
                BatchLosses bl =
                    batch_pass(model, ds, batch, run_cfg, task_kind, true,
                               stream_seed(run_cfg.seed, 0xF000000 + static_cast<std::uint64_t>(step)));
                std::vector<double> flat = bl.grads.to_flat();
                clip_global_norm(flat, run_cfg.grad_clip_max_norm);
                adamw_step(params, flat, adam, lr, run_cfg);
                model.from_flat(params);
                res.log.push_back({step, bl.report.align, bl.report.rec, bl.report.task,
                                   bl.report.total, lr});
                epoch_sum += bl.report.total;
            } catch (const NumericError&) {
                res.aborted_nan = true;
                return res; // last finite checkpoint already held in res.model
            }
        }
        const double epoch_mean = epoch_sum / steps_per_epoch;
        res.epoch_total.push_back(epoch_mean);
        if (epoch_mean < res.best_total) {
            res.best_total = epoch_mean;
            res.best_epoch = epoch;
            res.model = model;
        }
        if (std::find(probe_epochs.begin(), probe_epochs.end(), epoch) != probe_epochs.end()) {
            const int pb = std::min(run_cfg.batch_size, n);
            res.probes.push_back(collect_gradient_bundle(model, ds, run_cfg, 0, pb));
        }
    }
    return res;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
    std::string out = "step,L_align,L_rec,L_task,L_total,lr\n";
    char buf[192];
    for (const TrainLogRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%.12e,%.12e,%.12e,%.12e,%.12e\n", r.step, r.align,
                      r.rec, r.task, r.total, r.lr);
        out += buf;
    }
    return out;
}

} // namespace platont
