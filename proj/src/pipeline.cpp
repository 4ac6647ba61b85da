#include "platont/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "platont/errors.hpp"
#include "platont/rng.hpp"

namespace platont {

Pipeline parse_pipeline(const std::string& name) {
    if (name == "clean") return Pipeline::Clean;
    if (name == "raw") return Pipeline::Raw;
    if (name == "pca") return Pipeline::Pca;
    if (name == "cca") return Pipeline::Cca;
    if (name == "platont") return Pipeline::Platont;
    throw std::invalid_argument("unknown pipeline: " + name);
}

const char* pipeline_name(Pipeline p) {
    switch (p) {
        case Pipeline::Clean: return "clean";
        case Pipeline::Raw: return "raw";
        case Pipeline::Pca: return "pca";
        case Pipeline::Cca: return "cca";
        case Pipeline::Platont: return "platont";
    }
    return "?";
}

const Mat& DenoisedViews::of(Indicator ind) const {
    switch (ind) {
        case Indicator::Delay: return delay;
        case Indicator::Loss: return loss;
        case Indicator::Bandwidth: return bw;
    }
    return delay;
}

namespace {

constexpr int kBaselineDim = 32; // latent capacity shared with the model

DenoisedViews pca_views(const TomographyDataset& ds) {
    // standardize per feature so the loss channel is not drowned out, fit on
    // the concatenation, split back and undo the scaling
    const std::array<const Mat*, 3> noisy{&ds.noisy_delay, &ds.noisy_loss, &ds.noisy_bw};
    std::array<Scaler, 3> scalers;
    const int n = ds.sample_count(), p = ds.path_count();
    Mat concat(n, 3 * p);
    for (int c = 0; c < 3; ++c) {
        scalers[c] = Scaler::fit(*noisy[c]);
        const Mat std_block = scalers[c].apply(*noisy[c]);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) concat(i, c * p + j) = std_block(i, j);
    }
    const int k = std::min({kBaselineDim, 3 * p, n - 1});
    auto [model, recon] = pca_fit_denoise(concat, k);
    DenoisedViews out;
    std::array<Mat*, 3> views{&out.delay, &out.loss, &out.bw};
    for (int c = 0; c < 3; ++c) {
        Mat block(n, p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) block(i, j) = recon(i, c * p + j);
        *views[c] = scalers[c].invert(block);
    }
    return out;
}

DenoisedViews cca_views(const TomographyDataset& ds) {
    // pairwise two-view CCA: (delay, loss) and (delay, bandwidth); the shared
    // delay view averages its two reconstructions
    const int n = ds.sample_count(), p = ds.path_count();
    std::array<Scaler, 3> scalers{Scaler::fit(ds.noisy_delay), Scaler::fit(ds.noisy_loss),
                                  Scaler::fit(ds.noisy_bw)};
    const Mat delay_std = scalers[0].apply(ds.noisy_delay);
    const Mat loss_std = scalers[1].apply(ds.noisy_loss);
    const Mat bw_std = scalers[2].apply(ds.noisy_bw);
    const int k = std::min(kBaselineDim, p);

    CcaModel m1 = cca_fit(delay_std, loss_std, k);
    auto [delay1, loss_rec] = cca_denoise(m1, delay_std, loss_std);
    CcaModel m2 = cca_fit(delay_std, bw_std, k);
    auto [delay2, bw_rec] = cca_denoise(m2, delay_std, bw_std);

    Mat delay_avg(n, p);
    for (std::size_t i = 0; i < delay_avg.a.size(); ++i)
        delay_avg.a[i] = 0.5 * (delay1.a[i] + delay2.a[i]);

    DenoisedViews out;
    out.delay = scalers[0].invert(delay_avg);
    out.loss = scalers[1].invert(loss_rec);
    out.bw = scalers[2].invert(bw_rec);
    return out;
}

DenoisedViews platont_views(const TomographyDataset& ds, const PlatontModel& model) {
    std::array<Mat, 3> x_std{model.scaler[0].apply(ds.noisy_delay),
                             model.scaler[1].apply(ds.noisy_loss),
                             model.scaler[2].apply(ds.noisy_bw)};
    ModelForward fwd = model_forward(model, x_std, false, 0);
    DenoisedViews out;
    out.delay = model.scaler[0].invert(fwd.recon[0]);
    out.loss = model.scaler[1].invert(fwd.recon[1]);
    out.bw = model.scaler[2].invert(fwd.recon[2]);
    return out;
}

} // namespace

DenoisedViews run_pipeline(const TomographyDataset& ds, Pipeline p, const PlatontModel* model) {
    switch (p) {
        case Pipeline::Clean: return {ds.clean_delay, ds.clean_loss, ds.clean_bw};
        case Pipeline::Raw: return {ds.noisy_delay, ds.noisy_loss, ds.noisy_bw};
        case Pipeline::Pca: return pca_views(ds);
        case Pipeline::Cca: return cca_views(ds);
        case Pipeline::Platont:
            if (!model) throw StateError("platont pipeline needs a trained checkpoint");
            return platont_views(ds, *model);
    }
    throw std::invalid_argument("run_pipeline: bad pipeline");
}

EvalWindows default_windows(int samples) {
    EvalWindows w;
    w.calib_end = std::max(2, samples / 4);
    w.eval_begin = w.calib_end;
    w.eval_end = samples;
    return w;
}

ThresholdPolicy calibrate_from_dataset(const TomographyDataset& ds, const EvalWindows& w) {
    Mat calib(w.calib_end, ds.path_count());
    for (int i = 0; i < w.calib_end; ++i)
        for (int j = 0; j < ds.path_count(); ++j) calib(i, j) = ds.clean_delay(i, j);
    return calibrate_thresholds(calib);
}

LinkEval eval_link_task(const TomographyDataset& ds, const DenoisedViews& views,
                        const ThresholdPolicy& policy, const EvalWindows& w) {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    const int n_links = static_cast<int>(ds.net.links.size());
    std::vector<double> delays(ds.path_count());
    for (int t = w.eval_begin; t < w.eval_end; ++t) {
        for (int j = 0; j < ds.path_count(); ++j) delays[j] = views.delay(t, j);
        DiagnosisResult diag = diagnose_congested_links(delays, ds.routing, policy);
        std::vector<int> truth;
        for (int l = 0; l < n_links; ++l)
            if (ds.congested(t, l) != 0.0) truth.push_back(l);
        ClassificationScores s = classification_metrics(diag.predicted_links, truth, n_links);
        tp += s.tp;
        fp += s.fp;
        fn += s.fn;
        tn += s.tn;
    }
    LinkEval out;
    out.scores = accumulate_scores({tp, fp, fn, tn});
    return out;
}

OdEval eval_od_task(const TomographyDataset& ds, const DenoisedViews& candidate,
                    const DenoisedViews& reference, const EvalWindows& w, int max_slots) {
    OdEval out;
    std::vector<double> caps(ds.net.links.size());
    for (std::size_t l = 0; l < caps.size(); ++l) caps[l] = ds.net.links[l].capacity_mbps;
    const int slots = std::min(max_slots, w.eval_end - w.eval_begin);
    std::vector<double> bw_row(ds.path_count());
    for (int s = 0; s < slots; ++s) {
        const int t = w.eval_begin + s;
        for (int j = 0; j < ds.path_count(); ++j) bw_row[j] = candidate.bw(t, j);
        const std::vector<double> cand_loads =
            derive_link_loads(bw_row, ds.routing.entries, caps);
        for (int j = 0; j < ds.path_count(); ++j) bw_row[j] = reference.bw(t, j);
        const std::vector<double> ref_loads = derive_link_loads(bw_row, ds.routing.entries, caps);
        const OdEstimate cand = estimate_od(cand_loads, ds.od.od_routing, ds.od.base_flows);
        const OdEstimate ref = estimate_od(ref_loads, ds.od.od_routing, ds.od.base_flows);
        const GapStats gap = error_gap(cand.flows, ref.flows);
        out.slot_mean.push_back(gap.mean);
        out.slot_std.push_back(gap.stddev);
    }
    if (!out.slot_mean.empty()) {
        double sum = 0.0;
        for (double v : out.slot_mean) sum += v;
        out.aggregate_mean = sum / static_cast<double>(out.slot_mean.size());
        std::vector<double> sorted = out.slot_mean;
        std::sort(sorted.begin(), sorted.end());
        const auto quantile = [&](double q) {
            const double pos = q * (sorted.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
            return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
        };
        out.quantile50 = quantile(0.5);
        out.quantile80 = quantile(0.8);
    }
    return out;
}

TopoEval eval_topo_task(const TomographyDataset& ds, const DenoisedViews& views,
                        const EvalWindows& w, int window) {
    TopoEval out;
    if (!ds.net.is_tree()) return out;
    const std::vector<int> lv = ds.net.leaves();
    if (lv.size() < 3) return out;
    const int root = lv[0];
    std::vector<int> monitored(lv.begin() + 1, lv.end());

    // columns of the root-anchored probing paths
    std::vector<int> cols;
    for (int leaf : monitored) {
        int found = -1;
        for (std::size_t p = 0; p < ds.routing.path_index.size(); ++p) {
            const auto [a, b] = ds.routing.path_index[p];
            if ((a == root && b == leaf) || (a == leaf && b == root)) {
                found = static_cast<int>(p);
                break;
            }
        }
        if (found < 0) return out; // probing scheme lacks root paths
        cols.push_back(found);
    }
    const InferredTopology truth = canonical_logical_tree(ds.net, root, monitored);

    const int m = static_cast<int>(monitored.size());
    for (int begin = w.eval_begin; begin + window <= w.eval_end; begin += window) {
        Mat cov(m, m);
        std::vector<double> mean(m, 0.0);
        for (int t = begin; t < begin + window; ++t)
            for (int i = 0; i < m; ++i) mean[i] += views.delay(t, cols[i]);
        for (double& v : mean) v /= window;
        for (int t = begin; t < begin + window; ++t)
            for (int i = 0; i < m; ++i) {
                const double di = views.delay(t, cols[i]) - mean[i];
                for (int j = i; j < m; ++j) {
                    const double dj = views.delay(t, cols[j]) - mean[j];
                    cov(i, j) += di * dj;
                }
            }
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                cov(i, j) /= window;
                cov(j, i) = cov(i, j);
            }
        const InferredTopology inferred = infer_topology_rnj(cov, monitored);
        out.hamming.push_back(hamming_distance(inferred, truth));
        out.frobenius.push_back(frobenius_distance(inferred, truth));
    }
    if (!out.hamming.empty()) {
        out.applicable = true;
        double sh = 0.0, sf = 0.0;
        for (std::size_t i = 0; i < out.hamming.size(); ++i) {
            sh += out.hamming[i];
            sf += out.frobenius[i];
        }
        out.mean_hamming = sh / static_cast<double>(out.hamming.size());
        out.mean_frobenius = sf / static_cast<double>(out.frobenius.size());
    }
    return out;
}

double mse_to_clean(const TomographyDataset& ds, const DenoisedViews& views, Indicator ind,
                    const EvalWindows& w) {
    const Mat& clean = ds.clean(ind);
    const Mat& v = views.of(ind);
    double s = 0.0;
    long n = 0;
    for (int t = w.eval_begin; t < w.eval_end; ++t)
        for (int j = 0; j < clean.cols; ++j) {
            const double d = v(t, j) - clean(t, j);
            s += d * d;
            ++n;
        }
    return n > 0 ? s / static_cast<double>(n) : 0.0;
}

nlohmann::ordered_json evaluate_cell(const TomographyDataset& ds, Pipeline p,
                                     const PlatontModel* model, const DenoisedViews& reference,
                                     const std::string& task) {
    const EvalWindows w = default_windows(ds.sample_count());
    const DenoisedViews views = run_pipeline(ds, p, model);
    nlohmann::ordered_json out;
    out["pipeline"] = pipeline_name(p);
    const bool all = task == "all";
    out["denoise_mse"] = {{"delay", mse_to_clean(ds, views, Indicator::Delay, w)},
                          {"loss", mse_to_clean(ds, views, Indicator::Loss, w)},
                          {"bandwidth", mse_to_clean(ds, views, Indicator::Bandwidth, w)}};
    if (all || task == "link") {
        const ThresholdPolicy policy = calibrate_from_dataset(ds, w);
        const LinkEval link = eval_link_task(ds, views, policy, w);
        out["link"] = {{"precision", link.scores.precision}, {"recall", link.scores.recall},
                       {"f1", link.scores.f1},               {"fpr", link.scores.fpr},
                       {"tp", link.scores.tp},               {"fp", link.scores.fp},
                       {"fn", link.scores.fn},               {"tn", link.scores.tn}};
    }
    if (all || task == "od") {
        const OdEval od = eval_od_task(ds, views, reference, w);
        out["od"] = {{"aggregate_mean_gap", od.aggregate_mean},
                     {"q50", od.quantile50},
                     {"q80", od.quantile80},
                     {"slot_mean_gap", od.slot_mean}};
    }
    if (all || task == "topo") {
        const TopoEval topo = eval_topo_task(ds, views, w);
        if (topo.applicable)
            out["topo"] = {{"mean_hamming", topo.mean_hamming},
                           {"mean_frobenius", topo.mean_frobenius},
                           {"windows", topo.hamming.size()}};
        else
            out["topo"] = nullptr;
    }
    return out;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open run config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("run config parse failure: " + std::string(e.what()));
    }
    RunConfig cfg;
    if (j.contains("topologies")) {
        cfg.topologies.clear();
        for (const auto& tj : j.at("topologies")) {
            RunConfig::Topo t;
            t.kind = tj.value("kind", std::string("tree"));
            t.nodes = tj.value("nodes", 19);
            t.path = tj.value("path", std::string());
            t.name = tj.value("name", std::string());
            if (t.name.empty())
                t.name = t.kind == "tree" ? "tree" + std::to_string(t.nodes) : t.path;
            cfg.topologies.push_back(std::move(t));
        }
    }
    if (j.contains("noise_levels")) cfg.noise_levels = j.at("noise_levels").get<std::vector<double>>();
    for (double lv : cfg.noise_levels)
        if (!(lv > 0.0)) throw FormatError("run config: noise levels must be positive");
    if (j.contains("noise_kinds"))
        cfg.noise_kinds = j.at("noise_kinds").get<std::vector<std::string>>();
    if (j.contains("pipelines")) cfg.pipelines = j.at("pipelines").get<std::vector<std::string>>();
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.clean_fraction = j.value("clean_fraction", cfg.clean_fraction);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("train")) {
        // reuse the trainer parser through a temp file-free path
        const nlohmann::json& tj = j.at("train");
        TrainConfig& t = cfg.train;
        t.batch_size = tj.value("batch_size", t.batch_size);
        t.epochs = tj.value("epochs", t.epochs);
        t.base_lr = tj.value("base_lr", t.base_lr);
        t.weight_decay = tj.value("weight_decay", t.weight_decay);
        t.grad_clip_max_norm = tj.value("grad_clip_max_norm", t.grad_clip_max_norm);
        t.weights.lambda1 = tj.value("lambda1", t.weights.lambda1);
        t.weights.lambda2 = tj.value("lambda2", t.weights.lambda2);
        t.weights.lambda3 = tj.value("lambda3", t.weights.lambda3);
        t.weights.tau = tj.value("tau", t.weights.tau);
        t.task = tj.value("task", t.task);
        t.latent_dim = tj.value("latent_dim", t.latent_dim);
        if (tj.contains("hidden")) t.hidden = tj.at("hidden").get<std::vector<int>>();
        t.dropout = tj.value("dropout", t.dropout);
        t.attention = tj.value("attention", t.attention);
        t.epochs = tj.value("epochs", t.epochs);
    }
    if (cfg.topologies.empty()) {
        cfg.topologies.push_back({"tree", 19, "", "tree19"});
        cfg.topologies.push_back({"tree", 30, "", "tree30"});
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["topologies"] = nlohmann::ordered_json::array();
    for (const auto& t : cfg.topologies)
        j["topologies"].push_back(
            {{"kind", t.kind}, {"nodes", t.nodes}, {"path", t.path}, {"name", t.name}});
    j["noise_levels"] = cfg.noise_levels;
    j["noise_kinds"] = cfg.noise_kinds;
    j["pipelines"] = cfg.pipelines;
    j["seeds"] = cfg.seeds;
    j["horizon"] = cfg.horizon;
    j["clean_fraction"] = cfg.clean_fraction;
    j["out_dir"] = cfg.out_dir;
    j["train"] = nlohmann::ordered_json::parse(train_config_to_json(cfg.train));
    return j.dump(2) + "\n";
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

nlohmann::ordered_json run_experiment_matrix(const RunConfig& cfg) {
    nlohmann::ordered_json bundle;
    nlohmann::ordered_json manifest;
    manifest["version"] = "1.0.0";
    manifest["config_hash"] = fnv1a(run_config_to_json(cfg));
    manifest["seeds"] = cfg.seeds;
    manifest["noise_grid"] = cfg.noise_levels;
    manifest["noise_kinds"] = cfg.noise_kinds;

    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    long requested = 0, completed = 0;
    for (const auto& topo : cfg.topologies) {
        for (std::uint64_t seed : cfg.seeds) {
            Network net;
            PathSet paths;
            try {
                net = topo.kind == "tree" ? generate_random_tree(topo.nodes, seed)
                                          : load_topology(topo.path);
                paths = enumerate_paths(net, default_probing_pairs(net, seed));
            } catch (const std::exception& e) {
                for (double level : cfg.noise_levels)
                    for (const auto& kind : cfg.noise_kinds)
                        for (const auto& pl : cfg.pipelines) {
                            (void)level;
                            (void)kind;
                            (void)pl;
                            ++requested;
                        }
                cells.push_back({{"topology", topo.name},
                                 {"seed", seed},
                                 {"status", "error"},
                                 {"message", e.what()}});
                continue;
            }
            for (double level : cfg.noise_levels) {
                for (const auto& kind_name : cfg.noise_kinds) {
                    const NoiseKind kind = parse_noise_kind(kind_name);
                    const std::uint64_t cell_seed = stream_seed(
                        seed, fnv1a(topo.name + "/" + std::to_string(level) + "/" + kind_name));
                    TomographyDataset ds;
                    PlatontModel trained;
                    bool have_model = false;
                    std::string stage_error;
                    try {
                        ds = build_dataset(net, paths, cfg.horizon, cfg.clean_fraction, level,
                                           kind, cell_seed);
                        if (std::find(cfg.pipelines.begin(), cfg.pipelines.end(), "platont") !=
                            cfg.pipelines.end()) {
                            TrainConfig tc = cfg.train;
                            tc.seed = stream_seed(cell_seed, 0x7EA1);
                            TrainResult tr = train(ds, tc);
                            trained = tr.model;
                            have_model = true;
                        }
                    } catch (const std::exception& e) {
                        stage_error = e.what();
                    }
                    DenoisedViews reference;
                    if (stage_error.empty())
                        reference = run_pipeline(ds, Pipeline::Clean, nullptr);
                    for (const auto& pl_name : cfg.pipelines) {
                        ++requested;
                        nlohmann::ordered_json cell;
                        cell["topology"] = topo.name;
                        cell["nodes"] = net.node_count;
                        cell["seed"] = seed;
                        cell["noise_level"] = level;
                        cell["noise_kind"] = kind_name;
                        cell["pipeline"] = pl_name;
                        if (!stage_error.empty()) {
                            cell["status"] = "error";
                            cell["message"] = stage_error;
                            cells.push_back(std::move(cell));
                            continue;
                        }
                        try {
                            const Pipeline pl = parse_pipeline(pl_name);
                            nlohmann::ordered_json metrics = evaluate_cell(
                                ds, pl, have_model ? &trained : nullptr, reference);
                            cell["status"] = "ok";
                            cell["metrics"] = std::move(metrics);
                            ++completed;
                        } catch (const std::exception& e) {
                            cell["status"] = "error";
                            cell["message"] = e.what();
                        }
                        cells.push_back(std::move(cell));
                    }
                }
            }
        }
    }
    manifest["cells_requested"] = requested;
    manifest["cells_completed"] = completed;
    bundle["manifest"] = std::move(manifest);
    bundle["cells"] = std::move(cells);
    return bundle;
}

namespace {

struct Agg {
    double precision = 0.0, recall = 0.0, f1 = 0.0, fpr = 0.0;
    double mse_delay = 0.0, mse_loss = 0.0, mse_bw = 0.0;
    double od_gap = 0.0;
    double topo_hamming = 0.0, topo_frobenius = 0.0;
    int n = 0, n_topo = 0;
};

std::string pct(double value, double clean, bool increase) {
    if (clean == 0.0) return "n/a";
    char buf[48];
    const double p = increase ? (value - clean) / clean * 100.0 : (clean - value) / clean * 100.0;
    std::snprintf(buf, sizeof(buf), "%.2f%%", p);
    return buf;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

} // namespace

std::string render_report(const nlohmann::ordered_json& bundle) {
    std::string md = "# PlatoNT experiment report\n\n";
    if (!bundle.contains("manifest") || !bundle.contains("cells") || bundle["cells"].empty()) {
        md += "_No cells in bundle._\n";
        return md;
    }
    const auto& manifest = bundle["manifest"];
    md += "Config hash: " + std::to_string(manifest.value("config_hash", 0ULL)) + "\n\n";
    md += "Noise grid:";
    for (const auto& lv : manifest["noise_grid"]) md += " " + lv.dump();
    md += " (kinds:";
    for (const auto& kd : manifest["noise_kinds"]) md += " " + kd.get<std::string>();
    md += ")\n\n";

    // aggregate over (noise level, kind, seed) per (topology, pipeline)
    std::vector<std::string> topos, pipelines;
    std::map<std::pair<std::string, std::string>, Agg> agg;
    long errors = 0;
    for (const auto& cell : bundle["cells"]) {
        if (cell.value("status", std::string()) != "ok") {
            ++errors;
            continue;
        }
        const std::string topo = cell["topology"];
        const std::string pl = cell["pipeline"];
        if (std::find(topos.begin(), topos.end(), topo) == topos.end()) topos.push_back(topo);
        if (std::find(pipelines.begin(), pipelines.end(), pl) == pipelines.end())
            pipelines.push_back(pl);
        Agg& a = agg[{topo, pl}];
        const auto& m = cell["metrics"];
        if (m.contains("link")) {
            a.precision += m["link"]["precision"].get<double>();
            a.recall += m["link"]["recall"].get<double>();
            a.f1 += m["link"]["f1"].get<double>();
            a.fpr += m["link"]["fpr"].get<double>();
        }
        a.mse_delay += m["denoise_mse"]["delay"].get<double>();
        a.mse_loss += m["denoise_mse"]["loss"].get<double>();
        a.mse_bw += m["denoise_mse"]["bandwidth"].get<double>();
        if (m.contains("od")) a.od_gap += m["od"]["aggregate_mean_gap"].get<double>();
        if (m.contains("topo") && !m["topo"].is_null()) {
            a.topo_hamming += m["topo"]["mean_hamming"].get<double>();
            a.topo_frobenius += m["topo"]["mean_frobenius"].get<double>();
            ++a.n_topo;
        }
        ++a.n;
    }
    for (auto& [key, a] : agg) {
        if (a.n > 0) {
            a.precision /= a.n;
            a.recall /= a.n;
            a.f1 /= a.n;
            a.fpr /= a.n;
            a.mse_delay /= a.n;
            a.mse_loss /= a.n;
            a.mse_bw /= a.n;
            a.od_gap /= a.n;
        }
        if (a.n_topo > 0) {
            a.topo_hamming /= a.n_topo;
            a.topo_frobenius /= a.n_topo;
        }
    }
    if (errors > 0) md += "**" + std::to_string(errors) + " cell(s) failed; see results.json.**\n\n";

    md += "## Congested-link diagnosis (averaged over the noise grid)\n\n";
    md += "| Topology | Pipeline | Precision | Recall | F1 | FPR | dP | dR | dF1 | dFPR |\n";
    md += "|---|---|---|---|---|---|---|---|---|---|\n";
    std::map<std::string, Agg> totals;
    std::map<std::string, int> totals_n;
    for (const auto& topo : topos) {
        const auto clean_it = agg.find({topo, "clean"});
        const Agg* clean = clean_it == agg.end() ? nullptr : &clean_it->second;
        for (const auto& pl : pipelines) {
            const auto it = agg.find({topo, pl});
            if (it == agg.end()) {
                md += "| " + topo + " | " + pl + " | _missing_ | | | | | | | |\n";
                continue;
            }
            const Agg& a = it->second;
            md += "| " + topo + " | " + pl + " | " + fmt(a.precision) + " | " + fmt(a.recall) +
                  " | " + fmt(a.f1) + " | " + fmt(a.fpr) + " | ";
            if (clean && pl != "clean") {
                md += pct(a.precision, clean->precision, false) + " | " +
                      pct(a.recall, clean->recall, false) + " | " + pct(a.f1, clean->f1, false) +
                      " | " + pct(a.fpr, clean->fpr, true) + " |\n";
            } else {
                md += "- | - | - | - |\n";
            }
            Agg& tot = totals[pl];
            tot.precision += a.precision;
            tot.recall += a.recall;
            tot.f1 += a.f1;
            tot.fpr += a.fpr;
            tot.mse_delay += a.mse_delay;
            tot.mse_loss += a.mse_loss;
            tot.mse_bw += a.mse_bw;
            tot.od_gap += a.od_gap;
            ++totals_n[pl];
        }
    }
    for (const auto& pl : pipelines) {
        if (totals_n[pl] == 0) continue;
        const int n = totals_n[pl];
        const Agg& t = totals[pl];
        md += "| _all_ | " + pl + " | " + fmt(t.precision / n) + " | " + fmt(t.recall / n) +
              " | " + fmt(t.f1 / n) + " | " + fmt(t.fpr / n) + " | - | - | - | - |\n";
    }

    md += "\n## Denoising MSE to clean indicators\n\n";
    md += "| Topology | Pipeline | delay | loss | bandwidth |\n|---|---|---|---|---|\n";
    for (const auto& topo : topos)
        for (const auto& pl : pipelines) {
            const auto it = agg.find({topo, pl});
            if (it == agg.end()) continue;
            md += "| " + topo + " | " + pl + " | " + fmt(it->second.mse_delay) + " | " +
                  fmt(it->second.mse_loss) + " | " + fmt(it->second.mse_bw) + " |\n";
        }

    md += "\n## OD estimation mean error gap (vs noise-free pipeline)\n\n";
    md += "| Topology | Pipeline | mean gap (Mbps) |\n|---|---|---|\n";
    for (const auto& topo : topos)
        for (const auto& pl : pipelines) {
            const auto it = agg.find({topo, pl});
            if (it == agg.end()) continue;
            md += "| " + topo + " | " + pl + " | " + fmt(it->second.od_gap) + " |\n";
        }

    md += "\n## Topology inference\n\n";
    md += "| Topology | Pipeline | Hamming | Frobenius |\n|---|---|---|---|\n";
    for (const auto& topo : topos)
        for (const auto& pl : pipelines) {
            const auto it = agg.find({topo, pl});
            if (it == agg.end() || it->second.n_topo == 0) continue;
            md += "| " + topo + " | " + pl + " | " + fmt(it->second.topo_hamming) + " | " +
                  fmt(it->second.topo_frobenius) + " |\n";
        }
    return md;
}

nlohmann::ordered_json run_theorem1_sweep(long trials, std::uint64_t seed) {
    nlohmann::ordered_json out;
    long shift_violations = 0, part2_trials = 0, part2_violations = 0;
    double worst_shift_slack = std::numeric_limits<double>::infinity();
    double worst_part2_slack = std::numeric_limits<double>::infinity();
    for (long t = 0; t < trials; ++t) {
        Rng rng(stream_seed(seed, 0x7410 + static_cast<std::uint64_t>(t)));
        const int family = static_cast<int>(rng.uniform_int(0, 2));
        PmiMatrix pm;
        if (family == 0) {
            const int n = static_cast<int>(rng.uniform_int(2, 64));
            pm.k = Mat(n, n);
            for (int i = 0; i < n; ++i) {
                pm.k(i, i) = rng.uniform(-3.0, 3.0);
                for (int j = i + 1; j < n; ++j) {
                    const double v = rng.uniform(-3.0, 3.0);
                    pm.k(i, j) = v;
                    pm.k(j, i) = v;
                }
            }
            double lo = 0.0, hi = 0.0;
            bool first = true;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) {
                        lo = first ? pm.k(i, j) : std::min(lo, pm.k(i, j));
                        hi = first ? pm.k(i, j) : std::max(hi, pm.k(i, j));
                        first = false;
                    }
            pm.rho_min = std::exp(std::min(lo, 0.0));
            pm.eps = hi - std::min(lo, 0.0);
        } else if (family == 1) {
            const int n = static_cast<int>(rng.uniform_int(2, 32));
            Mat counts(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    const double c = static_cast<double>(rng.uniform_int(0, 50));
                    counts(i, j) = c;
                    counts(j, i) = c;
                }
            counts(0, 0) += 1.0; // keep totals positive
            pm = pmi_from_counts(counts);
        } else {
            const int n = static_cast<int>(rng.uniform_int(2, 64));
            const double rho = rng.uniform(0.05, 1.0);
            const double max_eps = 2.0 * n * std::abs(std::log(rho)) + 0.5;
            const double eps = rng.uniform(0.0, max_eps);
            pm = build_a1a2_instance(n, rho, eps, rng.next_u64());
        }
        const Theorem1Report rep = theorem1_shift(pm);
        worst_shift_slack = std::min(worst_shift_slack, rep.min_eig_shifted);
        if (rep.min_eig_shifted < -1e-8) ++shift_violations;
        if (rep.part2_precondition) {
            ++part2_trials;
            worst_part2_slack = std::min(worst_part2_slack, rep.min_eig);
            if (rep.min_eig < -1e-8) ++part2_violations;
        }
    }
    out["trials"] = trials;
    out["shift_violations"] = shift_violations;
    out["worst_shift_slack"] = worst_shift_slack;
    out["part2_trials"] = part2_trials;
    out["part2_violations"] = part2_violations;
    out["worst_part2_slack"] =
        part2_trials > 0 ? nlohmann::ordered_json(worst_part2_slack) : nlohmann::ordered_json();
    return out;
}

nlohmann::ordered_json run_proposition1_sweep(long trials, std::uint64_t seed) {
    nlohmann::ordered_json out;
    long violations = 0;
    double worst_margin = std::numeric_limits<double>::infinity();
    for (long t = 0; t < trials; ++t) {
        Rng rng(stream_seed(seed, 0x9201 + static_cast<std::uint64_t>(t)));
        const int p = static_cast<int>(rng.uniform_int(8, 64));
        const int m = static_cast<int>(rng.uniform_int(2, 6));
        const int r0 = static_cast<int>(rng.uniform_int(1, std::min(m, 4)));
        // planted rank-r0 structure plus a small residual
        Mat basis(p, r0);
        for (double& v : basis.a) v = rng.gaussian();
        GradientBundle bundle;
        bundle.gradients = Mat(p, m);
        for (int c = 0; c < m; ++c) {
            std::vector<double> coef(r0);
            for (double& v : coef) v = rng.gaussian();
            for (int i = 0; i < p; ++i) {
                double s = 0.0;
                for (int j = 0; j < r0; ++j) s += basis(i, j) * coef[j];
                bundle.gradients(i, c) = s + 0.01 * rng.gaussian();
            }
        }
        bundle.lambda.resize(m);
        for (double& v : bundle.lambda) v = rng.uniform(-2.0, 2.0);
        const Prop1Report rep = proposition1_check(bundle);
        worst_margin = std::min(worst_margin, rep.rhs - rep.lhs);
        if (!rep.holds) ++violations;
    }
    out["trials"] = trials;
    out["violations"] = violations;
    out["worst_margin"] = worst_margin;
    return out;
}

} // namespace platont
