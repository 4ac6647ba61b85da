#include "platont/netmodel.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "platont/errors.hpp"
#include "platont/rng.hpp"

namespace platont {

void Network::validate() const {
    if (node_count < 2) throw ValidationError("network needs at least 2 nodes");
    std::vector<bool> seen(links.size(), false);
    for (const Link& l : links) {
        if (l.id < 0 || l.id >= static_cast<int>(links.size()))
            throw ValidationError("link id " + std::to_string(l.id) + " not contiguous from 0");
        if (seen[l.id]) throw ValidationError("duplicate link id " + std::to_string(l.id));
        seen[l.id] = true;
        if (l.a < 0 || l.a >= node_count || l.b < 0 || l.b >= node_count)
            throw ValidationError("link " + std::to_string(l.id) + " endpoint out of range");
        if (l.a == l.b) throw ValidationError("link " + std::to_string(l.id) + " is a self-loop");
        if (!(l.capacity_mbps > 0.0))
            throw ValidationError("link " + std::to_string(l.id) + " capacity must be positive");
    }
    // connectivity; report one offending component when disconnected
    std::vector<int> comp(node_count, -1);
    std::deque<int> queue{0};
    comp[0] = 0;
    auto adj = adjacency();
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (auto [v, lid] : adj[u]) {
            if (comp[v] < 0) {
                comp[v] = 0;
                queue.push_back(v);
            }
        }
    }
    std::vector<int> orphan;
    for (int v = 0; v < node_count; ++v)
        if (comp[v] < 0) orphan.push_back(v);
    if (!orphan.empty()) {
        std::ostringstream os;
        os << "graph disconnected; component not reachable from node 0: {";
        for (std::size_t i = 0; i < orphan.size(); ++i) os << (i ? "," : "") << orphan[i];
        os << "}";
        throw ValidationError(os.str());
    }
}

std::vector<std::vector<std::pair<int, int>>> Network::adjacency() const {
    std::vector<std::vector<std::pair<int, int>>> adj(node_count);
    for (const Link& l : links) {
        adj[l.a].push_back({l.b, l.id});
        adj[l.b].push_back({l.a, l.id});
    }
    for (auto& row : adj) std::sort(row.begin(), row.end());
    return adj;
}

std::vector<int> Network::leaves() const {
    std::vector<int> deg(node_count, 0);
    for (const Link& l : links) {
        ++deg[l.a];
        ++deg[l.b];
    }
    std::vector<int> out;
    for (int v = 0; v < node_count; ++v)
        if (deg[v] == 1) out.push_back(v);
    return out;
}

bool Network::is_tree() const { return static_cast<int>(links.size()) == node_count - 1; }

void PathSet::validate(const Network& net) const {
    std::set<std::pair<int, int>> seen;
    for (const Path& p : paths) {
        if (p.link_ids.empty()) throw ValidationError("empty path");
        if (p.src == p.dst) throw ValidationError("path src == dst");
        if (!seen.insert({p.src, p.dst}).second)
            throw ValidationError("duplicate (src,dst) pair in path set");
        int at = p.src;
        for (int lid : p.link_ids) {
            if (lid < 0 || lid >= static_cast<int>(net.links.size()))
                throw ValidationError("path references unknown link");
            const Link& l = net.links[lid];
            if (l.a == at)
                at = l.b;
            else if (l.b == at)
                at = l.a;
            else
                throw ValidationError("consecutive path links do not share a node");
        }
        if (at != p.dst) throw ValidationError("path does not end at dst");
    }
}

Network generate_random_tree(int node_count, std::uint64_t seed) {
    if (node_count < 2) throw std::invalid_argument("generate_random_tree: node_count must be >= 2");
    Rng rng(stream_seed(seed, 0xA11CE));
    Network net;
    net.node_count = node_count;
    if (node_count == 2) {
        net.links.push_back({0, 0, 1, rng.uniform(50.0, 150.0)});
        net.validate();
        return net;
    }
    // Pruefer sequence of length n-2, decoded smallest-leaf-first.
    std::vector<int> pruefer(node_count - 2);
    for (int& v : pruefer) v = static_cast<int>(rng.uniform_int(0, node_count - 1));
    std::vector<int> degree(node_count, 1);
    for (int v : pruefer) ++degree[v];
    std::set<int> leaves;
    for (int v = 0; v < node_count; ++v)
        if (degree[v] == 1) leaves.insert(v);
    int next_id = 0;
    for (int v : pruefer) {
        int leaf = *leaves.begin();
        leaves.erase(leaves.begin());
        net.links.push_back({next_id++, std::min(leaf, v), std::max(leaf, v), 0.0});
        if (--degree[v] == 1) leaves.insert(v);
    }
    int u = *leaves.begin();
    int w = *std::next(leaves.begin());
    net.links.push_back({next_id++, std::min(u, w), std::max(u, w), 0.0});
    for (Link& l : net.links) l.capacity_mbps = rng.uniform(50.0, 150.0);
    net.validate();
    return net;
}

std::string topology_to_json(const Network& net) {
    nlohmann::ordered_json j;
    j["nodes"] = net.node_count;
    j["links"] = nlohmann::ordered_json::array();
    for (const Link& l : net.links) {
        j["links"].push_back({{"id", l.id}, {"a", l.a}, {"b", l.b}, {"capacity_mbps", l.capacity_mbps}});
    }
    return j.dump(2) + "\n";
}

std::uint64_t topology_hash(const Network& net) {
    // FNV-1a over the canonical serialization
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : topology_to_json(net)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

void save_topology(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << topology_to_json(net);
}

Network load_topology(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open topology file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("topology parse failure in " + path + ": " + e.what());
    }
    Network net;
    try {
        net.node_count = j.at("nodes").get<int>();
        for (const auto& lj : j.at("links")) {
            Link l;
            l.id = lj.at("id").get<int>();
            l.a = lj.at("a").get<int>();
            l.b = lj.at("b").get<int>();
            l.capacity_mbps = lj.value("capacity_mbps", 100.0);
            net.links.push_back(l);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("topology schema violation in " + path + ": " + e.what());
    }
    net.validate();
    return net;
}

PathSet enumerate_paths(const Network& net, const std::vector<std::pair<int, int>>& pairs) {
    net.validate();
    auto adj = net.adjacency();
    PathSet out;
    for (auto [src, dst] : pairs) {
        if (src < 0 || src >= net.node_count || dst < 0 || dst >= net.node_count)
            throw std::invalid_argument("enumerate_paths: node index out of range");
        // BFS distances toward dst, then greedy walk from src picking the
        // smallest-index neighbor that still decreases the distance. This
        // yields the lexicographically smallest shortest node sequence.
        std::vector<int> dist(net.node_count, -1);
        std::deque<int> queue{dst};
        dist[dst] = 0;
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            for (auto [v, lid] : adj[u])
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
        }
        if (dist[src] < 0)
            throw ValidationError("pair (" + std::to_string(src) + "," + std::to_string(dst) +
                                  ") unreachable");
        Path p{src, dst, {}};
        int at = src;
        while (at != dst) {
            for (auto [v, lid] : adj[at]) { // adjacency is sorted by node index
                if (dist[v] == dist[at] - 1) {
                    p.link_ids.push_back(lid);
                    at = v;
                    break;
                }
            }
        }
        out.paths.push_back(std::move(p));
    }
    out.validate(net);
    return out;
}

std::vector<std::pair<int, int>> default_probing_pairs(const Network& net, std::uint64_t seed,
                                                       int cap) {
    std::vector<std::pair<int, int>> pairs;
    if (net.is_tree()) {
        auto lv = net.leaves();
        for (std::size_t i = 0; i < lv.size(); ++i)
            for (std::size_t j = i + 1; j < lv.size(); ++j) pairs.push_back({lv[i], lv[j]});
        return pairs;
    }
    for (int a = 0; a < net.node_count; ++a)
        for (int b = a + 1; b < net.node_count; ++b) pairs.push_back({a, b});
    if (static_cast<int>(pairs.size()) <= cap) return pairs;
    // seeded partial Fisher-Yates, then restore deterministic order
    Rng rng(stream_seed(seed, 0xBA125));
    for (int i = 0; i < cap; ++i) {
        int j = static_cast<int>(rng.uniform_int(i, static_cast<int>(pairs.size()) - 1));
        std::swap(pairs[i], pairs[j]);
    }
    pairs.resize(cap);
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

RoutingMatrix build_routing_matrix(const Network& net, const PathSet& paths) {
    paths.validate(net);
    RoutingMatrix rm;
    rm.entries = Mat(static_cast<int>(paths.paths.size()), static_cast<int>(net.links.size()));
    for (std::size_t i = 0; i < paths.paths.size(); ++i) {
        const Path& p = paths.paths[i];
        rm.path_index.push_back({p.src, p.dst});
        for (int lid : p.link_ids) rm.entries(static_cast<int>(i), lid) = 1.0;
    }
    return rm;
}

} // namespace platont
