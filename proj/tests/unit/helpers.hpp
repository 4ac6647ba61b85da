#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "platont/linalg.hpp"
#include "platont/netmodel.hpp"

namespace platont::testing {

// Exhaustive DFS path oracle, independent of the BFS implementation: unique
// simple path between two nodes of a tree.
inline std::vector<int> dfs_tree_path(const Network& net, int src, int dst) {
    auto adj = net.adjacency();
    std::vector<int> best;
    std::vector<int> stack_links;
    std::vector<char> visited(net.node_count, 0);
    std::function<bool(int)> walk = [&](int at) {
        if (at == dst) {
            best = stack_links;
            return true;
        }
        visited[at] = 1;
        for (auto [v, lid] : adj[at]) {
            if (visited[v]) continue;
            stack_links.push_back(lid);
            if (walk(v)) return true;
            stack_links.pop_back();
        }
        return false;
    };
    walk(src);
    return best;
}

// Fraction-free integer Gaussian elimination (Bareiss); exact rank of an
// integer matrix.
inline int bareiss_rank(const Mat& m) {
    const int rows = m.rows, cols = m.cols;
    std::vector<std::vector<long long>> a(rows, std::vector<long long>(cols));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a[i][j] = static_cast<long long>(m(i, j));
    int rank = 0;
    long long prev = 1;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = -1;
        for (int r = rank; r < rows; ++r)
            if (a[r][col] != 0) {
                pivot = r;
                break;
            }
        if (pivot < 0) continue;
        std::swap(a[rank], a[pivot]);
        for (int r = rank + 1; r < rows; ++r) {
            for (int c = col + 1; c < cols; ++c)
                a[r][c] = (a[rank][col] * a[r][c] - a[r][col] * a[rank][c]) / prev;
            a[r][col] = 0;
        }
        prev = a[rank][col];
        ++rank;
    }
    return rank;
}

// Central finite difference of a scalar function at x.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / (std::abs(want) + 1e-8);
}

} // namespace platont::testing
