#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "platont/linalg.hpp"

namespace platont {

struct Link {
    int id = 0;
    int a = 0;
    int b = 0;
    double capacity_mbps = 100.0;
};

// Undirected connected graph. Link ids are unique and contiguous from 0,
// endpoints in range, no self-loops.
struct Network {
    int node_count = 0;
    std::vector<Link> links;
    bool directed = false;

    void validate() const; // throws ValidationError on any broken invariant

    // node -> list of (neighbor, link id)
    std::vector<std::vector<std::pair<int, int>>> adjacency() const;
    std::vector<int> leaves() const;
    bool is_tree() const;
};

struct Path {
    int src = 0;
    int dst = 0;
    std::vector<int> link_ids;
};

struct PathSet {
    std::vector<Path> paths;
    void validate(const Network& net) const;
};

// Binary path x link incidence; entry (i,j) = 1 iff link j lies on path i.
struct RoutingMatrix {
    Mat entries;
    std::vector<std::pair<int, int>> path_index; // row -> (src, dst)
};

// Uniformly random labeled tree (Pruefer construction), node_count-1 links,
// capacities seeded uniform in [50, 150] Mbps. Deterministic per seed.
Network generate_random_tree(int node_count, std::uint64_t seed);

// Topology JSON: {"nodes": int, "links": [{"id", "a", "b", "capacity_mbps"}]}
Network load_topology(const std::string& path);
void save_topology(const Network& net, const std::string& path);
std::string topology_to_json(const Network& net);
std::uint64_t topology_hash(const Network& net);

// Shortest path per pair (BFS hop metric, ties broken by lexicographically
// smallest node sequence). On trees this is the unique path.
PathSet enumerate_paths(const Network& net, const std::vector<std::pair<int, int>>& pairs);

// All leaf-leaf pairs on trees; all node pairs capped at `cap` paths
// (seeded subsample) on general graphs.
std::vector<std::pair<int, int>> default_probing_pairs(const Network& net, std::uint64_t seed,
                                                       int cap = 512);

RoutingMatrix build_routing_matrix(const Network& net, const PathSet& paths);

} // namespace platont
