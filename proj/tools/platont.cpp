#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "platont/pipeline.hpp"

namespace {

using namespace platont;

std::uint64_t seed_or_env(std::uint64_t seed) {
    if (const char* env = std::getenv("PLATONT_SEED")) return std::strtoull(env, nullptr, 10);
    return seed;
}

void write_file(const std::string& path, const std::string& content) {
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << content;
}

int cmd_gen_topo(int nodes, std::uint64_t seed, const std::string& out) {
    const Network net = generate_random_tree(nodes, seed_or_env(seed));
    save_topology(net, out);
    std::cout << "wrote " << out << " (" << net.node_count << " nodes, " << net.links.size()
              << " links)\n";
    return 0;
}

int cmd_simulate(const std::string& topo, int horizon, double level, const std::string& kind,
                 double clean_frac, std::uint64_t seed, const std::string& out) {
    const Network net = load_topology(topo);
    const std::uint64_t s = seed_or_env(seed);
    const PathSet paths = enumerate_paths(net, default_probing_pairs(net, s));
    const TomographyDataset ds =
        build_dataset(net, paths, horizon, clean_frac, level, parse_noise_kind(kind), s);
    save_dataset(ds, out);
    std::cout << "wrote " << out << " (" << ds.sample_count() << " samples, "
              << ds.path_count() << " paths, " << ds.clean_label_count() << " clean-labeled)\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& config, const std::string& out,
              const std::string& log) {
    const TomographyDataset ds = load_dataset(data);
    TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
    cfg.seed = seed_or_env(cfg.seed);
    const TrainResult res = train(ds, cfg);
    save_checkpoint(res.model, out);
    if (!log.empty()) write_file(log, train_log_csv(res.log));
    if (res.task_disabled_warning)
        std::cerr << "warning: task has no differentiable surrogate; lambda3 forced to 0\n";
    if (res.aborted_nan)
        std::cerr << "warning: training diverged; last finite checkpoint retained\n";
    std::cout << "wrote " << out << " (best epoch " << res.best_epoch << ", total "
              << res.best_total << ")\n";
    return res.aborted_nan ? 1 : 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt, const std::string& task,
             const std::string& pipeline, const std::string& out) {
    const TomographyDataset ds = load_dataset(data);
    const Pipeline pl = parse_pipeline(pipeline);
    PlatontModel model;
    const bool need_model = pl == Pipeline::Platont;
    if (need_model) {
        if (ckpt.empty()) throw std::invalid_argument("platont pipeline requires --ckpt");
        model = load_checkpoint(ckpt);
    }
    const DenoisedViews reference = run_pipeline(ds, Pipeline::Clean);
    nlohmann::ordered_json result =
        evaluate_cell(ds, pl, need_model ? &model : nullptr, reference, task);
    nlohmann::ordered_json doc;
    doc["data"] = data;
    doc["task"] = task;
    doc["result"] = std::move(result);
    write_file(out, doc.dump(2) + "\n");
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_theory(const std::string& check, long trials, std::uint64_t seed,
               const std::string& report) {
    const std::uint64_t s = seed_or_env(seed);
    nlohmann::ordered_json doc;
    bool ok = true;
    if (check == "thm1" || check == "all") {
        doc["theorem1"] = run_theorem1_sweep(trials, s);
        ok = ok && doc["theorem1"]["shift_violations"].get<long>() == 0 &&
             doc["theorem1"]["part2_violations"].get<long>() == 0;
    }
    if (check == "prop1" || check == "all") {
        doc["proposition1"] = run_proposition1_sweep(trials, s);
        ok = ok && doc["proposition1"]["violations"].get<long>() == 0;
    }
    write_file(report, doc.dump(2) + "\n");
    std::cout << (ok ? "theory checks passed\n" : "theory checks FAILED\n");
    return ok ? 0 : 1;
}

int cmd_matrix(const std::string& config) {
    RunConfig cfg = load_run_config(config);
    if (const char* env = std::getenv("PLATONT_SEED"))
        cfg.seeds = {std::strtoull(env, nullptr, 10)};
    const nlohmann::ordered_json bundle = run_experiment_matrix(cfg);
    const std::string out_json =
        (std::filesystem::path(cfg.out_dir) / "results.json").string();
    const std::string out_md = (std::filesystem::path(cfg.out_dir) / "report.md").string();
    write_file(out_json, bundle.dump(2) + "\n");
    write_file(out_md, render_report(bundle));
    const auto& m = bundle["manifest"];
    std::cout << "completed " << m["cells_completed"] << "/" << m["cells_requested"]
              << " cells -> " << out_json << "\n";
    return m["cells_completed"] == m["cells_requested"] ? 0 : 1;
}

int cmd_report(const std::string& results, const std::string& out) {
    std::ifstream in(results);
    if (!in) throw FormatError("cannot open " + results);
    nlohmann::ordered_json bundle;
    in >> bundle;
    write_file(out, render_report(bundle));
    std::cout << "wrote " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PlatoNT network tomography workbench"};
    app.require_subcommand(1);

    // gen-topo
    auto* gen = app.add_subcommand("gen-topo", "generate a random tree topology");
    int nodes = 19;
    std::uint64_t seed = 1;
    std::string out = "topo.json";
    gen->add_option("--nodes", nodes, "node count (>= 2)");
    gen->add_option("--seed", seed, "rng seed");
    gen->add_option("--out", out, "output topology JSON")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate states and build a dataset");
    std::string topo, sim_out = "dataset.json", kind = "channel";
    int horizon = 512;
    double level = 0.1, clean_frac = 0.2;
    sim->add_option("--topo", topo, "topology JSON")->required();
    sim->add_option("--horizon", horizon, "number of time steps");
    sim->add_option("--noise-level", level, "noise level")
        ->check(CLI::IsMember({0.05, 0.1, 0.2}));
    sim->add_option("--noise-kind", kind, "channel | random")
        ->check(CLI::IsMember({"channel", "random"}));
    sim->add_option("--clean-frac", clean_frac, "clean-labeled fraction");
    sim->add_option("--seed", seed, "rng seed");
    sim->add_option("--out", sim_out, "output dataset JSON")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the model on a dataset");
    std::string data, config, ckpt = "model.ckpt", log;
    tr->add_option("--data", data, "dataset JSON")->required();
    tr->add_option("--config", config, "train config JSON (defaults when omitted)");
    tr->add_option("--out", ckpt, "output checkpoint")->required();
    tr->add_option("--log", log, "training log CSV");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a pipeline on a dataset");
    std::string ev_data, ev_ckpt, ev_task = "all", ev_pipeline = "platont",
                ev_out = "results.json";
    ev->add_option("--data", ev_data, "dataset JSON")->required();
    ev->add_option("--ckpt", ev_ckpt, "checkpoint (platont pipeline)");
    ev->add_option("--task", ev_task, "link | od | topo | all")
        ->check(CLI::IsMember({"link", "od", "topo", "all"}));
    ev->add_option("--pipeline", ev_pipeline, "clean | raw | pca | cca | platont")
        ->check(CLI::IsMember({"clean", "raw", "pca", "cca", "platont"}));
    ev->add_option("--out", ev_out, "output JSON")->required();

    // theory
    auto* th = app.add_subcommand("theory", "run the numerical theory checks");
    std::string th_check = "all", th_report = "theory.json";
    long th_trials = 10000;
    th->add_option("--check", th_check, "thm1 | prop1 | all")
        ->check(CLI::IsMember({"thm1", "prop1", "all"}));
    th->add_option("--trials", th_trials, "trials per sweep");
    th->add_option("--seed", seed, "rng seed");
    th->add_option("--report", th_report, "report JSON")->required();

    // matrix
    auto* mx = app.add_subcommand("matrix", "run the full experiment matrix");
    std::string mx_config;
    mx->add_option("--config", mx_config, "run config JSON")->required();

    // report
    auto* rp = app.add_subcommand("report", "render a markdown report from results.json");
    std::string rp_results, rp_out = "report.md";
    rp->add_option("--results", rp_results, "results.json from matrix")->required();
    rp->add_option("--out", rp_out, "output markdown")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_topo(nodes, seed, out);
        if (sim->parsed())
            return cmd_simulate(topo, horizon, level, kind, clean_frac, seed, sim_out);
        if (tr->parsed()) return cmd_train(data, config, ckpt, log);
        if (ev->parsed()) return cmd_eval(ev_data, ev_ckpt, ev_task, ev_pipeline, ev_out);
        if (th->parsed()) return cmd_theory(th_check, th_trials, seed, th_report);
        if (mx->parsed()) return cmd_matrix(mx_config);
        if (rp->parsed()) return cmd_report(rp_results, rp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
