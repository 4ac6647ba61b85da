#include "platont/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "platont/errors.hpp"
#include "platont/rng.hpp"
#include "platont/theorylab.hpp"

namespace platont {

namespace {

// child-stream tags inside a dataset seed
constexpr std::uint64_t kTagModels = 1;
constexpr std::uint64_t kTagInit = 2;
constexpr std::uint64_t kTagCleanMask = 3;
constexpr std::uint64_t kTagOd = 4;
constexpr std::uint64_t kTagNoiseBase = 16;
constexpr std::uint64_t kTagStepBase = 1024;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LinkState link_state_from_util(const LinkModel& m, double u, double theta_c) {
    LinkState s;
    s.delay_ms = m.base_delay_ms * (1.0 + 4.0 * u * u);
    s.loss_rate = 0.001 + 0.3 * std::max(0.0, u - theta_c) / (1.0 - theta_c);
    s.avail_bw_mbps = m.capacity_mbps * (1.0 - u);
    s.congested = u > theta_c;
    return s;
}

} // namespace

std::vector<LinkModel> build_link_models(const Network& net, const SimParams& sim,
                                         std::uint64_t seed) {
    if (sim.latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
    Rng rng(stream_seed(seed, kTagModels));
    std::vector<LinkModel> models(net.links.size());
    for (std::size_t l = 0; l < net.links.size(); ++l) {
        LinkModel& m = models[l];
        m.loading.resize(sim.latent_dim);
        double norm = 0.0;
        do {
            for (double& w : m.loading) w = rng.gaussian();
            norm = norm2(m.loading);
        } while (norm < 1e-12);
        for (double& w : m.loading) w /= norm;
        m.bias = rng.gaussian();
        m.base_delay_ms = rng.uniform(1.0, 10.0);
        m.capacity_mbps = net.links[l].capacity_mbps;
    }
    return models;
}

std::vector<StateStep> simulate_states_from_models(const std::vector<LinkModel>& models,
                                                   const SimParams& sim, int horizon,
                                                   std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    const int q = sim.latent_dim;
    std::vector<StateStep> out(horizon);

    std::vector<double> z(q);
    {
        Rng init(stream_seed(seed, kTagInit));
        const double sd = std::sqrt(sim.stationary_var());
        for (double& v : z) v = sd * init.gaussian();
    }
    for (int t = 0; t < horizon; ++t) {
        if (t > 0) {
            Rng step(stream_seed(seed, kTagStepBase + static_cast<std::uint64_t>(t)));
            for (double& v : z) v = sim.ar_coeff * v + sim.ar_noise * step.gaussian();
        }
        StateStep& s = out[t];
        s.z = z;
        s.utilization.resize(models.size());
        s.links.resize(models.size());
        for (std::size_t l = 0; l < models.size(); ++l) {
            const LinkModel& m = models[l];
            double x = m.bias;
            for (int k = 0; k < q; ++k) x += m.loading[k] * z[k];
            const double u = sigmoid(x);
            s.utilization[l] = u;
            s.links[l] = link_state_from_util(m, u, sim.congestion_threshold);
        }
    }
    return out;
}

std::vector<StateStep> simulate_states(const Network& net, const SimParams& sim, int horizon,
                                       std::uint64_t seed) {
    return simulate_states_from_models(build_link_models(net, sim, seed), sim, horizon, seed);
}

PathMeasurement aggregate_path(const std::vector<LinkState>& links, const std::vector<int>& path) {
    if (path.empty()) throw std::invalid_argument("aggregate_path: empty path");
    PathMeasurement m;
    double pass = 1.0;
    double bn = std::numeric_limits<double>::infinity();
    for (int lid : path) {
        if (lid < 0 || lid >= static_cast<int>(links.size()))
            throw std::invalid_argument("aggregate_path: link id out of range");
        m.delay_ms += links[lid].delay_ms;
        pass *= 1.0 - links[lid].loss_rate;
        bn = std::min(bn, links[lid].avail_bw_mbps);
    }
    m.loss_rate = 1.0 - pass;
    m.bottleneck_bw_mbps = bn;
    return m;
}

const char* indicator_name(Indicator ind) {
    switch (ind) {
        case Indicator::Delay: return "delay";
        case Indicator::Loss: return "loss";
        case Indicator::Bandwidth: return "bandwidth";
    }
    return "?";
}

const char* noise_kind_name(NoiseKind kind) {
    return kind == NoiseKind::Channel ? "channel" : "random";
}

NoiseKind parse_noise_kind(const std::string& s) {
    if (s == "channel") return NoiseKind::Channel;
    if (s == "random") return NoiseKind::Random;
    throw std::invalid_argument("unknown noise kind: " + s);
}

Mat inject_noise(const Mat& clean, Indicator ind, double level, NoiseKind kind,
                 std::uint64_t seed) {
    if (!(level > 0.0)) throw std::invalid_argument("inject_noise: level must be > 0");
    Rng rng(stream_seed(seed, kTagNoiseBase));
    Mat out = clean;
    if (kind == NoiseKind::Channel) {
        for (double& v : out.a) v *= 1.0 + level * rng.gaussian();
    } else {
        // per-column std over the batch
        std::vector<double> sd(clean.cols, 0.0);
        for (int j = 0; j < clean.cols; ++j) {
            double mean = 0.0;
            for (int i = 0; i < clean.rows; ++i) mean += clean(i, j);
            mean /= clean.rows;
            double var = 0.0;
            for (int i = 0; i < clean.rows; ++i) {
                const double d = clean(i, j) - mean;
                var += d * d;
            }
            sd[j] = std::sqrt(var / clean.rows);
        }
        for (int i = 0; i < clean.rows; ++i)
            for (int j = 0; j < clean.cols; ++j) out(i, j) += level * sd[j] * rng.gaussian();
    }
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) {
            double& v = out(i, j);
            if (ind == Indicator::Loss)
                v = std::clamp(v, 0.0, 1.0);
            else
                v = std::max(v, 0.0);
        }
    return out;
}

OdScenario generate_od_scenario(const Network& net, const PathSet& od_paths, std::uint64_t seed,
                                double total_demand_mbps) {
    od_paths.validate(net);
    OdScenario sc;
    const int n_pairs = static_cast<int>(od_paths.paths.size());
    if (total_demand_mbps <= 0.0) total_demand_mbps = 5.0 * n_pairs;
    sc.total_demand_mbps = total_demand_mbps;

    Rng rng(stream_seed(seed, kTagOd));
    sc.masses.resize(net.node_count);
    for (double& m : sc.masses) m = rng.lognormal(0.0, 0.5);

    sc.base_flows.resize(n_pairs);
    double total = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        const Path& path = od_paths.paths[p];
        sc.pairs.push_back({path.src, path.dst});
        sc.base_flows[p] = sc.masses[path.src] * sc.masses[path.dst];
        total += sc.base_flows[p];
    }
    for (double& f : sc.base_flows) f *= total_demand_mbps / total;

    sc.od_routing = Mat(static_cast<int>(net.links.size()), n_pairs);
    for (int p = 0; p < n_pairs; ++p)
        for (int lid : od_paths.paths[p].link_ids) sc.od_routing(lid, p) = 1.0;
    sc.base_link_loads = matvec(sc.od_routing, sc.base_flows);
    return sc;
}

const Mat& TomographyDataset::noisy(Indicator ind) const {
    switch (ind) {
        case Indicator::Delay: return noisy_delay;
        case Indicator::Loss: return noisy_loss;
        case Indicator::Bandwidth: return noisy_bw;
    }
    return noisy_delay;
}

const Mat& TomographyDataset::clean(Indicator ind) const {
    switch (ind) {
        case Indicator::Delay: return clean_delay;
        case Indicator::Loss: return clean_loss;
        case Indicator::Bandwidth: return clean_bw;
    }
    return clean_delay;
}

int TomographyDataset::clean_label_count() const {
    int n = 0;
    for (auto m : clean_mask) n += m ? 1 : 0;
    return n;
}

TomographyDataset build_dataset(const Network& net, const PathSet& paths, int horizon,
                                double clean_fraction, double noise_level, NoiseKind kind,
                                std::uint64_t seed, const SimParams& sim) {
    if (horizon < 2) throw std::invalid_argument("build_dataset: horizon must be >= 2");
    if (clean_fraction < 0.0 || clean_fraction > 1.0)
        throw std::invalid_argument("build_dataset: clean_fraction outside [0,1]");
    TomographyDataset ds;
    ds.net = net;
    ds.paths = paths;
    ds.routing = build_routing_matrix(net, paths);
    ds.sim = sim;
    ds.clean_fraction = clean_fraction;
    ds.noise_level = noise_level;
    ds.noise_kind = kind;
    ds.seed = seed;

    ds.link_models = build_link_models(net, sim, seed);
    auto states = simulate_states_from_models(ds.link_models, sim, horizon, seed);

    const int n_paths = static_cast<int>(paths.paths.size());
    const int n_links = static_cast<int>(net.links.size());
    ds.clean_delay = Mat(horizon, n_paths);
    ds.clean_loss = Mat(horizon, n_paths);
    ds.clean_bw = Mat(horizon, n_paths);
    ds.link_delay = Mat(horizon, n_links);
    ds.link_loss = Mat(horizon, n_links);
    ds.link_bw = Mat(horizon, n_links);
    ds.link_util = Mat(horizon, n_links);
    ds.congested = Mat(horizon, n_links);
    for (int t = 0; t < horizon; ++t) {
        for (int p = 0; p < n_paths; ++p) {
            const PathMeasurement m = aggregate_path(states[t].links, paths.paths[p].link_ids);
            ds.clean_delay(t, p) = m.delay_ms;
            ds.clean_loss(t, p) = m.loss_rate;
            ds.clean_bw(t, p) = m.bottleneck_bw_mbps;
        }
        for (int l = 0; l < n_links; ++l) {
            ds.link_delay(t, l) = states[t].links[l].delay_ms;
            ds.link_loss(t, l) = states[t].links[l].loss_rate;
            ds.link_bw(t, l) = states[t].links[l].avail_bw_mbps;
            ds.link_util(t, l) = states[t].utilization[l];
            ds.congested(t, l) = states[t].links[l].congested ? 1.0 : 0.0;
        }
    }

    ds.noisy_delay = inject_noise(ds.clean_delay, Indicator::Delay, noise_level, kind,
                                  stream_seed(seed, kTagNoiseBase + 0));
    ds.noisy_loss = inject_noise(ds.clean_loss, Indicator::Loss, noise_level, kind,
                                 stream_seed(seed, kTagNoiseBase + 1));
    ds.noisy_bw = inject_noise(ds.clean_bw, Indicator::Bandwidth, noise_level, kind,
                               stream_seed(seed, kTagNoiseBase + 2));

    // seeded clean-labeled subset of exactly ceil(f * N) samples
    const int n_clean = static_cast<int>(std::ceil(clean_fraction * horizon));
    std::vector<int> idx(horizon);
    std::iota(idx.begin(), idx.end(), 0);
    Rng mask_rng(stream_seed(seed, kTagCleanMask));
    for (int i = 0; i < n_clean && i < horizon; ++i) {
        int j = static_cast<int>(mask_rng.uniform_int(i, horizon - 1));
        std::swap(idx[i], idx[j]);
    }
    ds.clean_mask.assign(horizon, 0);
    for (int i = 0; i < n_clean && i < horizon; ++i) ds.clean_mask[idx[i]] = 1;

    ds.od = generate_od_scenario(net, paths, seed);
    const double base_total =
        std::accumulate(ds.od.base_link_loads.begin(), ds.od.base_link_loads.end(), 0.0);
    ds.od_scale.resize(horizon, 1.0);
    for (int t = 0; t < horizon; ++t) {
        double carried = 0.0;
        for (int l = 0; l < n_links; ++l)
            carried += net.links[l].capacity_mbps * ds.link_util(t, l);
        ds.od_scale[t] = base_total > 0.0 ? carried / base_total : 1.0;
    }
    return ds;
}

namespace {

nlohmann::ordered_json vec_json(const std::vector<double>& v) {
    return nlohmann::ordered_json(v);
}

nlohmann::ordered_json row_json(const Mat& m, int i) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (int j = 0; j < m.cols; ++j) arr.push_back(m(i, j));
    return arr;
}

void read_row(Mat& m, int i, const nlohmann::json& arr) {
    if (static_cast<int>(arr.size()) != m.cols) throw FormatError("dataset row length mismatch");
    for (int j = 0; j < m.cols; ++j) m(i, j) = arr[j].get<double>();
}

} // namespace

void save_dataset(const TomographyDataset& ds, const std::string& path) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["topology"] = nlohmann::ordered_json::parse(topology_to_json(ds.net));
    j["topology_hash"] = topology_hash(ds.net);
    {
        nlohmann::ordered_json parr = nlohmann::ordered_json::array();
        for (const Path& p : ds.paths.paths)
            parr.push_back({{"src", p.src}, {"dst", p.dst}, {"links", p.link_ids}});
        j["paths"] = parr;
    }
    j["sim"] = {{"latent_dim", ds.sim.latent_dim},
                {"congestion_threshold", ds.sim.congestion_threshold},
                {"ar_coeff", ds.sim.ar_coeff},
                {"ar_noise", ds.sim.ar_noise}};
    j["noise"] = {{"level", ds.noise_level}, {"kind", noise_kind_name(ds.noise_kind)}};
    j["clean_fraction"] = ds.clean_fraction;
    j["seed"] = ds.seed;
    j["indicator_dims"] = {{"delay", ds.path_count()},
                           {"loss", ds.path_count()},
                           {"bandwidth", ds.path_count()}};
    {
        nlohmann::ordered_json marr = nlohmann::ordered_json::array();
        for (const LinkModel& m : ds.link_models)
            marr.push_back({{"loading", vec_json(m.loading)},
                            {"bias", m.bias},
                            {"base_delay_ms", m.base_delay_ms},
                            {"capacity_mbps", m.capacity_mbps}});
        j["link_models"] = marr;
    }
    {
        nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
        for (auto [s, d] : ds.od.pairs) pairs.push_back({s, d});
        j["od"] = {{"pairs", pairs},
                   {"masses", vec_json(ds.od.masses)},
                   {"base_flows", vec_json(ds.od.base_flows)},
                   {"total_demand_mbps", ds.od.total_demand_mbps}};
    }
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (int t = 0; t < ds.sample_count(); ++t) {
        nlohmann::ordered_json s;
        s["t"] = t;
        s["delay"] = row_json(ds.noisy_delay, t);
        s["loss"] = row_json(ds.noisy_loss, t);
        s["bw"] = row_json(ds.noisy_bw, t);
        if (ds.clean_mask[t]) {
            s["clean"] = {{"delay", row_json(ds.clean_delay, t)},
                          {"loss", row_json(ds.clean_loss, t)},
                          {"bw", row_json(ds.clean_bw, t)}};
        } else {
            s["clean"] = nullptr;
        }
        nlohmann::ordered_json cong = nlohmann::ordered_json::array();
        for (int l = 0; l < ds.congested.cols; ++l)
            cong.push_back(ds.congested(t, l) != 0.0 ? 1 : 0);
        s["link"] = {{"delay", row_json(ds.link_delay, t)},
                     {"loss", row_json(ds.link_loss, t)},
                     {"bw", row_json(ds.link_bw, t)},
                     {"util", row_json(ds.link_util, t)},
                     {"congested", cong}};
        s["od_scale"] = ds.od_scale[t];
        samples.push_back(std::move(s));
    }
    j["samples"] = std::move(samples);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << j.dump() << "\n";
}

TomographyDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset parse failure in " + path + ": " + e.what());
    }
    TomographyDataset ds;
    try {
        const auto& topo = j.at("topology");
        ds.net.node_count = topo.at("nodes").get<int>();
        for (const auto& lj : topo.at("links"))
            ds.net.links.push_back({lj.at("id").get<int>(), lj.at("a").get<int>(),
                                    lj.at("b").get<int>(), lj.at("capacity_mbps").get<double>()});
        ds.net.validate();
        for (const auto& pj : j.at("paths")) {
            Path p;
            p.src = pj.at("src").get<int>();
            p.dst = pj.at("dst").get<int>();
            p.link_ids = pj.at("links").get<std::vector<int>>();
            ds.paths.paths.push_back(std::move(p));
        }
        ds.routing = build_routing_matrix(ds.net, ds.paths);
        const auto& sj = j.at("sim");
        ds.sim.latent_dim = sj.at("latent_dim").get<int>();
        ds.sim.congestion_threshold = sj.at("congestion_threshold").get<double>();
        ds.sim.ar_coeff = sj.at("ar_coeff").get<double>();
        ds.sim.ar_noise = sj.at("ar_noise").get<double>();
        ds.noise_level = j.at("noise").at("level").get<double>();
        ds.noise_kind = parse_noise_kind(j.at("noise").at("kind").get<std::string>());
        ds.clean_fraction = j.at("clean_fraction").get<double>();
        ds.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& mj : j.at("link_models")) {
            LinkModel m;
            m.loading = mj.at("loading").get<std::vector<double>>();
            m.bias = mj.at("bias").get<double>();
            m.base_delay_ms = mj.at("base_delay_ms").get<double>();
            m.capacity_mbps = mj.at("capacity_mbps").get<double>();
            ds.link_models.push_back(std::move(m));
        }
        const auto& oj = j.at("od");
        for (const auto& pj : oj.at("pairs"))
            ds.od.pairs.push_back({pj[0].get<int>(), pj[1].get<int>()});
        ds.od.masses = oj.at("masses").get<std::vector<double>>();
        ds.od.base_flows = oj.at("base_flows").get<std::vector<double>>();
        ds.od.total_demand_mbps = oj.at("total_demand_mbps").get<double>();
        ds.od.od_routing = Mat(static_cast<int>(ds.net.links.size()),
                               static_cast<int>(ds.od.pairs.size()));
        for (std::size_t p = 0; p < ds.paths.paths.size(); ++p)
            for (int lid : ds.paths.paths[p].link_ids)
                ds.od.od_routing(lid, static_cast<int>(p)) = 1.0;
        ds.od.base_link_loads = matvec(ds.od.od_routing, ds.od.base_flows);

        const auto& samples = j.at("samples");
        const int n = static_cast<int>(samples.size());
        const int n_paths = static_cast<int>(ds.paths.paths.size());
        const int n_links = static_cast<int>(ds.net.links.size());
        ds.noisy_delay = Mat(n, n_paths);
        ds.noisy_loss = Mat(n, n_paths);
        ds.noisy_bw = Mat(n, n_paths);
        ds.clean_delay = Mat(n, n_paths);
        ds.clean_loss = Mat(n, n_paths);
        ds.clean_bw = Mat(n, n_paths);
        ds.link_delay = Mat(n, n_links);
        ds.link_loss = Mat(n, n_links);
        ds.link_bw = Mat(n, n_links);
        ds.link_util = Mat(n, n_links);
        ds.congested = Mat(n, n_links);
        ds.clean_mask.assign(n, 0);
        ds.od_scale.assign(n, 1.0);
        for (int t = 0; t < n; ++t) {
            const auto& s = samples[t];
            read_row(ds.noisy_delay, t, s.at("delay"));
            read_row(ds.noisy_loss, t, s.at("loss"));
            read_row(ds.noisy_bw, t, s.at("bw"));
            ds.clean_mask[t] = s.at("clean").is_null() ? 0 : 1;
            const auto& lk = s.at("link");
            read_row(ds.link_delay, t, lk.at("delay"));
            read_row(ds.link_loss, t, lk.at("loss"));
            read_row(ds.link_bw, t, lk.at("bw"));
            read_row(ds.link_util, t, lk.at("util"));
            for (int l = 0; l < n_links; ++l)
                ds.congested(t, l) = lk.at("congested")[l].get<int>() ? 1.0 : 0.0;
            ds.od_scale[t] = s.at("od_scale").get<double>();
        }
        // full clean indicators are derivable from link ground truth; the
        // serialized clean blocks cover only the labeled subset
        for (int t = 0; t < n; ++t) {
            std::vector<LinkState> states(n_links);
            for (int l = 0; l < n_links; ++l) {
                states[l].delay_ms = ds.link_delay(t, l);
                states[l].loss_rate = ds.link_loss(t, l);
                states[l].avail_bw_mbps = ds.link_bw(t, l);
            }
            for (int p = 0; p < n_paths; ++p) {
                const PathMeasurement m = aggregate_path(states, ds.paths.paths[p].link_ids);
                ds.clean_delay(t, p) = m.delay_ms;
                ds.clean_loss(t, p) = m.loss_rate;
                ds.clean_bw(t, p) = m.bottleneck_bw_mbps;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset schema violation in " + path + ": " + e.what());
    }
    return ds;
}

namespace {

// Gauss-Hermite nodes/weights from the Golub-Welsch tridiagonal, reusing the
// project eigensolver.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};

GaussHermite gauss_hermite(int n) {
    Mat jm(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = std::sqrt(k / 2.0);
        jm(k - 1, k) = b;
        jm(k, k - 1) = b;
    }
    EigenResult eig = symmetric_eigen(jm);
    GaussHermite gh;
    gh.nodes.resize(n);
    gh.weights.resize(n);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int j = 0; j < n; ++j) {
        gh.nodes[j] = eig.values[j];
        const double v0 = eig.vectors(0, j);
        gh.weights[j] = sqrt_pi * v0 * v0;
    }
    return gh;
}

} // namespace

double stationary_delay_variance(const LinkModel& model, const SimParams& sim) {
    static const GaussHermite gh = gauss_hermite(48);
    const double sd = std::sqrt(sim.stationary_var());
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
        const double x = std::sqrt(2.0) * sd * gh.nodes[k] + model.bias;
        const double u = sigmoid(x);
        const double d = model.base_delay_ms * (1.0 + 4.0 * u * u);
        e1 += gh.weights[k] * d;
        e2 += gh.weights[k] * d * d;
    }
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    e1 *= inv_sqrt_pi;
    e2 *= inv_sqrt_pi;
    return e2 - e1 * e1;
}

Mat rootpath_delay_covariance(const Network& net, const std::vector<LinkModel>& models,
                              const SimParams& sim, int root, const std::vector<int>& leaves) {
    std::vector<std::pair<int, int>> pairs;
    for (int leaf : leaves) pairs.push_back({root, leaf});
    PathSet ps = enumerate_paths(net, pairs);

    std::vector<double> var(models.size());
    for (std::size_t l = 0; l < models.size(); ++l)
        var[l] = stationary_delay_variance(models[l], sim);

    const int n = static_cast<int>(leaves.size());
    Mat cov(n, n);
    for (int i = 0; i < n; ++i) {
        std::vector<char> on(models.size(), 0);
        for (int lid : ps.paths[i].link_ids) on[lid] = 1;
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int lid : ps.paths[j].link_ids)
                if (on[lid]) s += var[lid];
            cov(i, j) = s;
            cov(j, i) = s;
        }
    }
    return cov;
}

} // namespace platont
