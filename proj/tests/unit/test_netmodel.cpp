#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "platont/errors.hpp"
#include "platont/netmodel.hpp"
#include "platont/theorylab.hpp"

using namespace platont;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Network chain3() {
    Network net;
    net.node_count = 3;
    net.links = {{0, 0, 1, 100.0}, {1, 1, 2, 100.0}};
    return net;
}

} // namespace

TEST_CASE("generate_random_tree basics") {
    SUBCASE("two nodes form the single possible tree") {
        const Network net = generate_random_tree(2, 42);
        REQUIRE(net.links.size() == 1);
        CHECK(net.links[0].a == 0);
        CHECK(net.links[0].b == 1);
    }
    SUBCASE("19 nodes, 18 links, connected and acyclic") {
        const Network net = generate_random_tree(19, 7);
        CHECK(net.node_count == 19);
        CHECK(net.links.size() == 18);
        CHECK_NOTHROW(net.validate()); // connectivity
        CHECK(net.is_tree());
    }
    SUBCASE("determinism: same seed gives byte-identical output") {
        const std::string a = topology_to_json(generate_random_tree(19, 7));
        const std::string b = topology_to_json(generate_random_tree(19, 7));
        CHECK(a == b);
        const std::string c = topology_to_json(generate_random_tree(19, 8));
        CHECK(a != c);
    }
    SUBCASE("node_count below 2 rejected") {
        CHECK_THROWS_AS(generate_random_tree(1, 0), std::invalid_argument);
    }
    SUBCASE("tree edge-count identity across sizes") {
        for (int n : {3, 5, 12, 25})
            for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
                const Network net = generate_random_tree(n, seed);
                CHECK(static_cast<int>(net.links.size()) == n - 1);
                CHECK_NOTHROW(net.validate());
            }
    }
}

TEST_CASE("load_topology") {
    SUBCASE("chain round trip") {
        const std::string path = temp_path("chain3.json");
        save_topology(chain3(), path);
        const Network net = load_topology(path);
        CHECK(net.node_count == 3);
        REQUIRE(net.links.size() == 2);
        CHECK(net.links[1].b == 2);
    }
    SUBCASE("duplicate link id rejected") {
        const std::string path = temp_path("dup.json");
        std::ofstream(path) << R"({"nodes":3,"links":[
            {"id":0,"a":0,"b":1,"capacity_mbps":10},
            {"id":0,"a":1,"b":2,"capacity_mbps":10}]})";
        CHECK_THROWS_AS(load_topology(path), ValidationError);
    }
    SUBCASE("disconnected graph names the offending component") {
        const std::string path = temp_path("disc.json");
        std::ofstream(path) << R"({"nodes":4,"links":[
            {"id":0,"a":0,"b":1,"capacity_mbps":10},
            {"id":1,"a":2,"b":3,"capacity_mbps":10}]})";
        try {
            load_topology(path);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("2") != std::string::npos);
            CHECK(std::string(e.what()).find("3") != std::string::npos);
        }
    }
    SUBCASE("garbage input is a format error") {
        const std::string path = temp_path("garbage.json");
        std::ofstream(path) << "not json";
        CHECK_THROWS_AS(load_topology(path), FormatError);
    }
    SUBCASE("17-node edge list loads with node_count 17") {
        const std::string path = temp_path("seventeen.json");
        save_topology(generate_random_tree(17, 3), path);
        CHECK(load_topology(path).node_count == 17);
    }
}

TEST_CASE("enumerate_paths") {
    SUBCASE("chain 0-1-2 pair (0,2) walks both links") {
        const PathSet ps = enumerate_paths(chain3(), {{0, 2}});
        REQUIRE(ps.paths.size() == 1);
        CHECK(ps.paths[0].link_ids == std::vector<int>{0, 1});
    }
    SUBCASE("star: leaf to leaf through the hub") {
        Network star;
        star.node_count = 4; // hub = 0
        star.links = {{0, 0, 1, 10}, {1, 0, 2, 10}, {2, 0, 3, 10}};
        const PathSet ps = enumerate_paths(star, {{1, 3}});
        CHECK(ps.paths[0].link_ids == std::vector<int>{0, 2});
    }
    SUBCASE("unreachable pair named in the error") {
        Network net = chain3();
        // force disconnection by pointing at a node with no links
        net.node_count = 4;
        try {
            enumerate_paths(net, {{0, 3}});
            FAIL("expected error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("(0,3)") != std::string::npos);
        }
    }
    SUBCASE("random 19-node tree matches the exhaustive DFS oracle") {
        const Network net = generate_random_tree(19, 11);
        const auto pairs = default_probing_pairs(net, 11);
        const PathSet ps = enumerate_paths(net, pairs);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto oracle = testing::dfs_tree_path(net, pairs[i].first, pairs[i].second);
            CHECK(ps.paths[i].link_ids == oracle);
        }
    }
}

TEST_CASE("build_routing_matrix") {
    SUBCASE("chain single path gives R = [[1,1]]") {
        const PathSet ps = enumerate_paths(chain3(), {{0, 2}});
        const RoutingMatrix rm = build_routing_matrix(chain3(), ps);
        REQUIRE(rm.entries.rows == 1);
        REQUIRE(rm.entries.cols == 2);
        CHECK(rm.entries(0, 0) == 1.0);
        CHECK(rm.entries(0, 1) == 1.0);
    }
    SUBCASE("3-leaf star: each leaf-pair row sums to 2") {
        Network star;
        star.node_count = 4;
        star.links = {{0, 0, 1, 10}, {1, 0, 2, 10}, {2, 0, 3, 10}};
        const PathSet ps = enumerate_paths(star, {{1, 2}, {1, 3}, {2, 3}});
        const RoutingMatrix rm = build_routing_matrix(star, ps);
        for (int i = 0; i < 3; ++i) {
            double s = 0.0;
            for (int j = 0; j < 3; ++j) s += rm.entries(i, j);
            CHECK(s == 2.0);
        }
    }
    SUBCASE("19-node tree row sums equal DFS oracle hop counts") {
        const Network net = generate_random_tree(19, 5);
        const auto pairs = default_probing_pairs(net, 5);
        const RoutingMatrix rm = build_routing_matrix(net, enumerate_paths(net, pairs));
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            double s = 0.0;
            for (int j = 0; j < rm.entries.cols; ++j) s += rm.entries(static_cast<int>(i), j);
            CHECK(s == static_cast<double>(
                           testing::dfs_tree_path(net, pairs[i].first, pairs[i].second).size()));
        }
    }
    SUBCASE("pair reordering permutes rows only") {
        const Network net = generate_random_tree(12, 9);
        auto pairs = default_probing_pairs(net, 9);
        const RoutingMatrix a = build_routing_matrix(net, enumerate_paths(net, pairs));
        std::reverse(pairs.begin(), pairs.end());
        const RoutingMatrix b = build_routing_matrix(net, enumerate_paths(net, pairs));
        const int n = a.entries.rows;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < a.entries.cols; ++j)
                CHECK(a.entries(i, j) == b.entries(n - 1 - i, j));
    }
    SUBCASE("rank over the reals matches the exact integer oracle") {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
            const Network net = generate_random_tree(15, seed); // <= 20 links
            const RoutingMatrix rm =
                build_routing_matrix(net, enumerate_paths(net, default_probing_pairs(net, seed)));
            const int exact = testing::bareiss_rank(rm.entries);
            CHECK(exact <= rm.entries.cols);
            // float rank via the eigenvalues of R^T R
            EigenResult eig = symmetric_eigen(matmul_tn(rm.entries, rm.entries));
            int fp_rank = 0;
            for (double v : eig.values)
                if (v > 1e-9) ++fp_rank;
            CHECK(fp_rank == exact);
        }
    }
}

TEST_CASE("default_probing_pairs caps general graphs") {
    Network net = generate_random_tree(40, 2);
    // add one extra link to leave tree-land
    net.links.push_back({static_cast<int>(net.links.size()), 0, 39, 80.0});
    const auto pairs = default_probing_pairs(net, 2, 100);
    CHECK(pairs.size() == 100);
    std::set<std::pair<int, int>> uniq(pairs.begin(), pairs.end());
    CHECK(uniq.size() == pairs.size());
    CHECK(std::is_sorted(pairs.begin(), pairs.end()));
}
