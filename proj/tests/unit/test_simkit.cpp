#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "platont/errors.hpp"
#include "platont/rng.hpp"
#include "platont/simkit.hpp"

using namespace platont;

namespace {

Network chain3() {
    Network net;
    net.node_count = 3;
    net.links = {{0, 0, 1, 100.0}, {1, 1, 2, 100.0}};
    return net;
}

TomographyDataset small_dataset(int horizon = 64, double clean_frac = 0.2) {
    const Network net = generate_random_tree(12, 31);
    const PathSet paths = enumerate_paths(net, default_probing_pairs(net, 31));
    return build_dataset(net, paths, horizon, clean_frac, 0.1, NoiseKind::Channel, 77);
}

} // namespace

TEST_CASE("simulate_states") {
    const SimParams sim;
    SUBCASE("zero loading and bias pin utilization at one half") {
        Network net = chain3();
        auto models = build_link_models(net, sim, 4);
        for (auto& m : models) {
            std::fill(m.loading.begin(), m.loading.end(), 0.0);
            m.bias = 0.0;
        }
        auto states = simulate_states_from_models(models, sim, 1, 4);
        for (double u : states[0].utilization) CHECK(u == doctest::Approx(0.5));
        for (const LinkState& s : states[0].links) CHECK_FALSE(s.congested);
    }
    SUBCASE("long-run latent variance matches the AR(1) closed form") {
        Network net = chain3();
        auto models = build_link_models(net, sim, 5);
        const int horizon = 60000;
        auto states = simulate_states_from_models(models, sim, horizon, 5);
        double mean = 0.0, var = 0.0;
        for (const auto& s : states) mean += s.z[0];
        mean /= horizon;
        for (const auto& s : states) var += (s.z[0] - mean) * (s.z[0] - mean);
        var /= horizon;
        const double want = 0.01 / (1.0 - 0.81);
        // AR(1) samples are correlated; effective sample count shrinks by
        // (1+rho)/(1-rho) = 19
        const double se = want * std::sqrt(2.0 / (horizon / 19.0));
        CHECK(std::abs(var - want) < 3.0 * se);
    }
    SUBCASE("same seed twice gives identical trajectories") {
        Network net = chain3();
        auto a = simulate_states(net, sim, 50, 9);
        auto b = simulate_states(net, sim, 50, 9);
        for (int t = 0; t < 50; ++t) {
            CHECK(a[t].z == b[t].z);
            CHECK(a[t].utilization == b[t].utilization);
        }
    }
    SUBCASE("congestion flag is exactly the threshold test") {
        Network net = generate_random_tree(15, 3);
        auto states = simulate_states(net, sim, 100, 3);
        for (const auto& s : states)
            for (std::size_t l = 0; l < s.links.size(); ++l)
                CHECK(s.links[l].congested == (s.utilization[l] > sim.congestion_threshold));
    }
}

TEST_CASE("aggregate_path") {
    std::vector<LinkState> links(2);
    links[0] = {2.0, 0.1, 10.0, false};
    links[1] = {3.0, 0.2, 5.0, false};
    SUBCASE("delay adds") {
        CHECK(aggregate_path(links, {0, 1}).delay_ms == doctest::Approx(5.0));
    }
    SUBCASE("loss composes multiplicatively") {
        CHECK(aggregate_path(links, {0, 1}).loss_rate == doctest::Approx(0.28));
    }
    SUBCASE("bandwidth bottlenecks") {
        CHECK(aggregate_path(links, {0, 1}).bottleneck_bw_mbps == doctest::Approx(5.0));
    }
    SUBCASE("empty path rejected") {
        CHECK_THROWS_AS(aggregate_path(links, {}), std::invalid_argument);
    }
    SUBCASE("packet-level Monte Carlo oracle reproduces the loss formula") {
        Rng rng(123);
        std::vector<LinkState> chain(4);
        for (auto& l : chain) l.loss_rate = rng.uniform(0.0, 0.3);
        const double want = aggregate_path(chain, {0, 1, 2, 3}).loss_rate;
        const int packets = 100000;
        int dropped = 0;
        for (int k = 0; k < packets; ++k) {
            bool lost = false;
            for (const auto& l : chain)
                if (rng.uniform01() < l.loss_rate) {
                    lost = true;
                    break;
                }
            dropped += lost ? 1 : 0;
        }
        const double got = static_cast<double>(dropped) / packets;
        const double sd = std::sqrt(want * (1.0 - want) / packets);
        CHECK(std::abs(got - want) <= 3.0 * sd);
    }
}

TEST_CASE("inject_noise") {
    Mat clean(200, 5);
    Rng rng(6);
    for (double& v : clean.a) v = rng.uniform(1.0, 10.0);
    SUBCASE("vanishing level returns clean values") {
        const Mat noisy = inject_noise(clean, Indicator::Delay, 1e-12, NoiseKind::Channel, 1);
        for (std::size_t k = 0; k < clean.a.size(); ++k)
            CHECK(noisy.a[k] == doctest::Approx(clean.a[k]).epsilon(1e-9));
    }
    SUBCASE("channel noise preserves zeros exactly") {
        Mat zeros(10, 3);
        const Mat noisy = inject_noise(zeros, Indicator::Delay, 0.2, NoiseKind::Channel, 2);
        for (double v : noisy.a) CHECK(v == 0.0);
    }
    SUBCASE("relative RMS under channel noise matches the level") {
        Mat big(2000, 5);
        for (double& v : big.a) v = rng.uniform(5.0, 50.0);
        const Mat noisy = inject_noise(big, Indicator::Delay, 0.1, NoiseKind::Channel, 3);
        double sum_sq = 0.0;
        for (std::size_t k = 0; k < big.a.size(); ++k) {
            const double rel = (noisy.a[k] - big.a[k]) / big.a[k];
            sum_sq += rel * rel;
        }
        const double n = static_cast<double>(big.a.size());
        const double rms = std::sqrt(sum_sq / n);
        // mean of squares has std sigma^2 sqrt(2/n)
        const double se = 0.01 * std::sqrt(2.0 / n);
        CHECK(std::abs(rms * rms - 0.01) < 3.0 * se);
    }
    SUBCASE("domain bounds never violated") {
        Mat losses(300, 4);
        for (double& v : losses.a) v = rng.uniform(0.0, 1.0);
        for (NoiseKind kind : {NoiseKind::Channel, NoiseKind::Random}) {
            const Mat noisy = inject_noise(losses, Indicator::Loss, 0.2, kind, 4);
            for (double v : noisy.a) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
        const Mat bw = inject_noise(clean, Indicator::Bandwidth, 0.2, NoiseKind::Random, 5);
        for (double v : bw.a) CHECK(v >= 0.0);
    }
}

TEST_CASE("generate_od_scenario") {
    SUBCASE("single OD pair on a chain loads both links with its flow") {
        const Network net = chain3();
        const PathSet ps = enumerate_paths(net, {{0, 2}});
        const OdScenario sc = generate_od_scenario(net, ps, 8, 10.0);
        REQUIRE(sc.base_flows.size() == 1);
        CHECK(sc.base_flows[0] == doctest::Approx(10.0));
        CHECK(sc.base_link_loads[0] == doctest::Approx(10.0));
        CHECK(sc.base_link_loads[1] == doctest::Approx(10.0));
    }
    SUBCASE("link loads equal the per-flow brute force accumulation") {
        const Network net = generate_random_tree(14, 21);
        const PathSet ps = enumerate_paths(net, default_probing_pairs(net, 21));
        const OdScenario sc = generate_od_scenario(net, ps, 21);
        std::vector<double> brute(net.links.size(), 0.0);
        for (std::size_t p = 0; p < ps.paths.size(); ++p)
            for (int lid : ps.paths[p].link_ids) brute[lid] += sc.base_flows[p];
        for (std::size_t l = 0; l < brute.size(); ++l)
            CHECK(sc.base_link_loads[l] == doctest::Approx(brute[l]).epsilon(1e-12));
    }
    SUBCASE("all flows nonnegative and scaled to the demand budget") {
        const Network net = generate_random_tree(10, 2);
        const PathSet ps = enumerate_paths(net, default_probing_pairs(net, 2));
        const OdScenario sc = generate_od_scenario(net, ps, 2, 123.0);
        double total = 0.0;
        for (double f : sc.base_flows) {
            CHECK(f >= 0.0);
            total += f;
        }
        CHECK(total == doctest::Approx(123.0));
    }
}

TEST_CASE("build_dataset") {
    SUBCASE("clean_fraction one labels every sample") {
        const TomographyDataset ds = small_dataset(32, 1.0);
        CHECK(ds.clean_label_count() == 32);
    }
    SUBCASE("ceiling arithmetic on the clean subset") {
        const TomographyDataset ds = small_dataset(100, 0.2);
        CHECK(ds.clean_label_count() == 20);
    }
    SUBCASE("horizon below 2 rejected") {
        const Network net = chain3();
        const PathSet ps = enumerate_paths(net, {{0, 2}});
        CHECK_THROWS_AS(build_dataset(net, ps, 1, 0.2, 0.1, NoiseKind::Channel, 1),
                        std::invalid_argument);
    }
    SUBCASE("clean path delays equal R times link delays") {
        const TomographyDataset ds = small_dataset();
        for (int t = 0; t < ds.sample_count(); ++t) {
            std::vector<double> link_delay(ds.net.links.size());
            for (std::size_t l = 0; l < link_delay.size(); ++l) link_delay[l] = ds.link_delay(t, static_cast<int>(l));
            const std::vector<double> want = matvec(ds.routing.entries, link_delay);
            for (int p = 0; p < ds.path_count(); ++p)
                CHECK(ds.clean_delay(t, p) == doctest::Approx(want[p]).epsilon(1e-12));
        }
    }
    SUBCASE("round trip through JSON is structurally identical") {
        const TomographyDataset ds = small_dataset(24, 0.25);
        const std::string path =
            (std::filesystem::temp_directory_path() / "ds_roundtrip.json").string();
        save_dataset(ds, path);
        const TomographyDataset back = load_dataset(path);
        CHECK(back.sample_count() == ds.sample_count());
        CHECK(back.path_count() == ds.path_count());
        CHECK(back.clean_mask == ds.clean_mask);
        CHECK(back.noisy_delay.a == ds.noisy_delay.a);
        CHECK(back.clean_delay.a == ds.clean_delay.a);
        CHECK(back.link_util.a == ds.link_util.a);
        CHECK(back.od.base_flows == ds.od.base_flows);
        CHECK(back.od_scale == ds.od_scale);
        // byte-identical re-serialization
        const std::string path2 =
            (std::filesystem::temp_directory_path() / "ds_roundtrip2.json").string();
        save_dataset(back, path2);
        std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("stationary_delay_variance quadrature matches Monte Carlo") {
    const SimParams sim;
    LinkModel m;
    m.loading = {1.0};
    m.bias = 0.5;
    m.base_delay_ms = 4.0;
    m.capacity_mbps = 100.0;
    const double want = stationary_delay_variance(m, sim);
    Rng rng(17);
    const int n = 400000;
    const double sd = std::sqrt(sim.stationary_var());
    double e1 = 0.0, e2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double u = 1.0 / (1.0 + std::exp(-(sd * rng.gaussian() + m.bias)));
        const double d = m.base_delay_ms * (1.0 + 4.0 * u * u);
        e1 += d;
        e2 += d * d;
    }
    e1 /= n;
    e2 /= n;
    const double mc = e2 - e1 * e1;
    CHECK(std::abs(want - mc) < 0.05 * want);
}

TEST_CASE("rootpath_delay_covariance accumulates shared-path variance") {
    // star with hub 0: paths from leaf 1 to leaves 2,3 share link 0 only
    Network star;
    star.node_count = 4;
    star.links = {{0, 0, 1, 10}, {1, 0, 2, 10}, {2, 0, 3, 10}};
    const SimParams sim;
    auto models = build_link_models(star, sim, 13);
    const Mat cov = rootpath_delay_covariance(star, models, sim, 1, {2, 3});
    const double v0 = stationary_delay_variance(models[0], sim);
    const double v1 = stationary_delay_variance(models[1], sim);
    CHECK(cov(0, 1) == doctest::Approx(v0).epsilon(1e-12));
    CHECK(cov(0, 0) == doctest::Approx(v0 + v1).epsilon(1e-12));
}
