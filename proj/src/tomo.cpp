#include "platont/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "platont/errors.hpp"

namespace platont {

ThresholdPolicy calibrate_thresholds(const Mat& clean_path_delays, double k) {
    if (clean_path_delays.rows < 2)
        throw std::invalid_argument("calibrate_thresholds: need at least 2 calibration slots");
    ThresholdPolicy pol;
    pol.k = k;
    pol.mu.resize(clean_path_delays.cols);
    pol.sigma.resize(clean_path_delays.cols);
    for (int j = 0; j < clean_path_delays.cols; ++j) {
        double m = 0.0;
        for (int i = 0; i < clean_path_delays.rows; ++i) m += clean_path_delays(i, j);
        m /= clean_path_delays.rows;
        double var = 0.0;
        for (int i = 0; i < clean_path_delays.rows; ++i) {
            const double d = clean_path_delays(i, j) - m;
            var += d * d;
        }
        pol.mu[j] = m;
        pol.sigma[j] = std::sqrt(var / clean_path_delays.rows);
    }
    return pol;
}

std::vector<int> flag_congested_paths(const std::vector<double>& path_delays,
                                      const ThresholdPolicy& policy) {
    if (path_delays.size() != policy.mu.size())
        throw ShapeError("flag_congested_paths: path count mismatch");
    std::vector<int> flagged;
    for (std::size_t p = 0; p < path_delays.size(); ++p)
        if (path_delays[p] > policy.mu[p] + policy.k * policy.sigma[p])
            flagged.push_back(static_cast<int>(p));
    return flagged;
}

DiagnosisResult diagnose_congested_links(const std::vector<double>& path_delays,
                                         const RoutingMatrix& routing,
                                         const ThresholdPolicy& policy) {
    if (static_cast<int>(path_delays.size()) != routing.entries.rows)
        throw ShapeError("diagnose_congested_links: measurement length mismatch");
    DiagnosisResult res;
    res.congested_paths = flag_congested_paths(path_delays, policy);
    const int n_links = routing.entries.cols;
    res.scores.assign(n_links, 0.0);
    for (int p : res.congested_paths)
        for (int l = 0; l < n_links; ++l)
            if (routing.entries(p, l) != 0.0) res.scores[l] += 1.0;

    std::vector<char> covered(path_delays.size(), 0);
    int uncovered = static_cast<int>(res.congested_paths.size());
    while (uncovered > 0) {
        int best_link = -1;
        int best_count = 0;
        for (int l = 0; l < n_links; ++l) {
            int count = 0;
            for (int p : res.congested_paths)
                if (!covered[p] && routing.entries(p, l) != 0.0) ++count;
            if (count > best_count) {
                best_count = count;
                best_link = l;
            }
        }
        if (best_link < 0) break; // no link explains any remaining path
        res.predicted_links.push_back(best_link);
        for (int p : res.congested_paths)
            if (!covered[p] && routing.entries(p, best_link) != 0.0) {
                covered[p] = 1;
                --uncovered;
            }
    }
    std::sort(res.predicted_links.begin(), res.predicted_links.end());
    return res;
}

std::vector<double> solve_linear_inverse(const Mat& r, const std::vector<double>& y, double ridge,
                                         bool nonneg, const std::vector<double>* prior) {
    if (static_cast<int>(y.size()) != r.rows)
        throw ShapeError("solve_linear_inverse: measurement length mismatch");
    if (ridge < 0.0) throw std::invalid_argument("solve_linear_inverse: ridge must be >= 0");
    const int n = r.cols;
    if (prior && static_cast<int>(prior->size()) != n)
        throw ShapeError("solve_linear_inverse: prior length mismatch");

    Mat a = matmul_tn(r, r);
    for (int i = 0; i < n; ++i) a(i, i) += ridge;
    std::vector<double> b = matvec_t(r, y);
    if (prior && ridge > 0.0)
        for (int i = 0; i < n; ++i) b[i] += ridge * (*prior)[i];

    std::vector<double> x;
    if (!cholesky_spd_solve(a, b, x, 1e-12)) {
        if (ridge == 0.0)
            throw ValidationError(
                "solve_linear_inverse: rank-deficient system; set ridge > 0 to regularize");
        throw NumericError("solve_linear_inverse: normal equations not SPD");
    }
    if (!nonneg) return x;

    // projected gradient with step 1/L, L from power iteration on the
    // normal-equation matrix
    double lam = 0.0;
    {
        std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
        for (int it = 0; it < 50; ++it) {
            std::vector<double> w = matvec(a, v);
            const double nw = norm2(w);
            if (nw == 0.0) break;
            for (int i = 0; i < n; ++i) v[i] = w[i] / nw;
            lam = nw;
        }
    }
    const double step = 1.0 / std::max(2.0 * lam, 1e-12);
    for (double& v : x) v = std::max(v, 0.0);
    std::vector<double> grad(n);
    for (long it = 0; it < 200000; ++it) {
        const std::vector<double> ax = matvec(a, x);
        double kkt = 0.0;
        for (int i = 0; i < n; ++i) {
            grad[i] = 2.0 * (ax[i] - b[i]);
            kkt = std::max(kkt, std::abs(x[i] - std::max(0.0, x[i] - grad[i])));
        }
        if (kkt < 1e-8) break;
        for (int i = 0; i < n; ++i) x[i] = std::max(0.0, x[i] - step * grad[i]);
    }
    return x;
}

OdEstimate estimate_od(const std::vector<double>& link_loads, const Mat& od_routing,
                       const std::vector<double>& gravity_prior, double ridge) {
    std::vector<double> prior = gravity_prior;
    const std::vector<double> implied = matvec(od_routing, prior);
    const double implied_total = std::accumulate(implied.begin(), implied.end(), 0.0);
    const double load_total = std::accumulate(link_loads.begin(), link_loads.end(), 0.0);
    if (implied_total > 0.0)
        for (double& p : prior) p *= load_total / implied_total;

    OdEstimate est;
    est.flows = solve_linear_inverse(od_routing, link_loads, ridge, true, &prior);
    const std::vector<double> fitted = matvec(od_routing, est.flows);
    double r2 = 0.0;
    for (std::size_t i = 0; i < fitted.size(); ++i) {
        const double d = link_loads[i] - fitted[i];
        r2 += d * d;
    }
    est.residual = std::sqrt(r2);
    return est;
}

std::vector<double> derive_link_loads(const std::vector<double>& path_bw, const Mat& routing,
                                      const std::vector<double>& capacities) {
    if (static_cast<int>(path_bw.size()) != routing.rows)
        throw ShapeError("derive_link_loads: path count mismatch");
    std::vector<double> loads(routing.cols, 0.0);
    for (int l = 0; l < routing.cols; ++l) {
        double mn = std::numeric_limits<double>::infinity();
        bool covered = false;
        for (int p = 0; p < routing.rows; ++p)
            if (routing(p, l) != 0.0) {
                covered = true;
                mn = std::min(mn, path_bw[p]);
            }
        if (covered) loads[l] = std::clamp(capacities[l] - mn, 0.0, capacities[l]);
    }
    return loads;
}

namespace {

struct RawNode {
    std::vector<int> children;
    int leaf = -1; // position in leaf_ids for leaves
};

// Canonical form shared by the inferred and ground-truth sides. When
// `top_is_root` the top node takes the root slot (index n_leaves); otherwise
// the root connects to the top node by a single edge.
InferredTopology canonicalize(const std::vector<RawNode>& nodes, int top,
                              const std::vector<int>& leaf_ids, bool top_is_root) {
    const int n_leaves = static_cast<int>(leaf_ids.size());

    // minimal monitored leaf in each subtree, for deterministic child order
    std::vector<int> min_leaf(nodes.size(), std::numeric_limits<int>::max());
    auto compute_min = [&](auto&& self, int v) -> int {
        if (nodes[v].leaf >= 0) return min_leaf[v] = nodes[v].leaf;
        int m = std::numeric_limits<int>::max();
        for (int c : nodes[v].children) m = std::min(m, self(self, c));
        return min_leaf[v] = m;
    };
    compute_min(compute_min, top);

    std::vector<std::pair<int, int>> edges; // canonical (a, b)
    std::vector<std::string> labels(n_leaves + 1);
    for (int i = 0; i < n_leaves; ++i) labels[i] = "n" + std::to_string(leaf_ids[i]);
    labels[n_leaves] = "root";
    int next_internal = n_leaves + 1;

    auto assign = [&](auto&& self, int v, bool as_root) -> int {
        if (nodes[v].leaf >= 0) return nodes[v].leaf;
        int my_id;
        if (as_root) {
            my_id = n_leaves;
        } else {
            my_id = next_internal++;
            labels.push_back("i" + std::to_string(my_id - n_leaves - 1));
        }
        std::vector<int> order = nodes[v].children;
        std::sort(order.begin(), order.end(),
                  [&](int x, int y) { return min_leaf[x] < min_leaf[y]; });
        for (int c : order) edges.push_back({my_id, self(self, c, false)});
        return my_id;
    };
    const int top_id = assign(assign, top, top_is_root);
    if (!top_is_root) edges.push_back({n_leaves, top_id});

    InferredTopology out;
    out.leaf_ids = leaf_ids;
    out.root_node = n_leaves;
    const int n_nodes = next_internal;
    out.adjacency = Mat(n_nodes, n_nodes);
    for (auto [a, b] : edges) {
        out.adjacency(a, b) = 1.0;
        out.adjacency(b, a) = 1.0;
    }
    out.labels = std::move(labels);
    return out;
}

} // namespace

InferredTopology infer_topology_rnj(const Mat& covariance, const std::vector<int>& leaf_ids,
                                    double merge_tol_rel) {
    const int n = covariance.rows;
    if (covariance.cols != n) throw ShapeError("infer_topology_rnj: covariance not square");
    if (static_cast<int>(leaf_ids.size()) != n)
        throw ShapeError("infer_topology_rnj: leaf id count mismatch");
    for (std::size_t i = 1; i < leaf_ids.size(); ++i)
        if (leaf_ids[i] <= leaf_ids[i - 1])
            throw std::invalid_argument("infer_topology_rnj: leaf ids must be ascending");
    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(covariance(i, i)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(covariance(i, j) - covariance(j, i)) > 1e-10 * std::max(1.0, scale))
                throw ValidationError("infer_topology_rnj: covariance not symmetric");

    std::vector<RawNode> nodes(n);
    for (int i = 0; i < n; ++i) nodes[i].leaf = i;

    std::vector<int> active(n); // cluster -> node index
    std::iota(active.begin(), active.end(), 0);
    Mat w = covariance;
    std::vector<int> pos(n); // cluster -> row of w
    std::iota(pos.begin(), pos.end(), 0);

    const double tol = merge_tol_rel * std::max(1.0, scale);

    auto w_at = [&](int a, int b) { return w(pos[a], pos[b]); };

    while (active.size() > 1) {
        const int m = static_cast<int>(active.size());
        int best_a = -1, best_b = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b)
                if (w_at(a, b) > best) {
                    best = w_at(a, b);
                    best_a = a;
                    best_b = b;
                }
        if (best <= tol) break; // remaining clusters share no path: attach to root

        std::vector<int> merged{best_a, best_b};
        for (int k = 0; k < m; ++k) {
            if (k == best_a || k == best_b) continue;
            if (w_at(best_a, k) >= best - tol && w_at(best_b, k) >= best - tol)
                merged.push_back(k);
        }
        std::sort(merged.begin(), merged.end());

        RawNode parent;
        for (int c : merged) parent.children.push_back(active[c]);
        nodes.push_back(parent);
        const int parent_node = static_cast<int>(nodes.size()) - 1;

        // averaged covariance row of the merged cluster
        std::vector<double> new_row(m, 0.0);
        for (int k = 0; k < m; ++k) {
            double s = 0.0;
            for (int c : merged) s += w_at(c, k);
            new_row[k] = s / static_cast<double>(merged.size());
        }

        // rebuild the active set: survivors keep order, merged cluster appended
        std::vector<int> keep;
        for (int k = 0; k < m; ++k)
            if (std::find(merged.begin(), merged.end(), k) == merged.end()) keep.push_back(k);
        const int m2 = static_cast<int>(keep.size()) + 1;
        Mat w2(m2, m2);
        for (int i = 0; i < m2 - 1; ++i)
            for (int j = 0; j < m2 - 1; ++j) w2(i, j) = w_at(keep[i], keep[j]);
        for (int i = 0; i < m2 - 1; ++i) {
            w2(i, m2 - 1) = new_row[keep[i]];
            w2(m2 - 1, i) = new_row[keep[i]];
        }
        std::vector<int> active2;
        for (int k : keep) active2.push_back(active[k]);
        active2.push_back(parent_node);
        active = std::move(active2);
        w = std::move(w2);
        pos.resize(active.size());
        std::iota(pos.begin(), pos.end(), 0);
    }

    if (active.size() == 1) return canonicalize(nodes, active[0], leaf_ids, false);
    // multiple zero-covariance clusters hang off the root directly
    RawNode root_like;
    root_like.children = active;
    nodes.push_back(root_like);
    return canonicalize(nodes, static_cast<int>(nodes.size()) - 1, leaf_ids, true);
}

InferredTopology canonical_logical_tree(const Network& net, int root,
                                        const std::vector<int>& leaf_ids) {
    auto adj = net.adjacency();
    std::set<int> monitored(leaf_ids.begin(), leaf_ids.end());
    if (monitored.count(root)) throw std::invalid_argument("root cannot be a monitored leaf");
    // leaf positions must match ascending leaf_ids order
    std::vector<int> sorted_ids = leaf_ids;
    std::sort(sorted_ids.begin(), sorted_ids.end());

    std::vector<RawNode> nodes;
    // returns node index in `nodes`, or -1 when the subtree holds no leaves
    auto build = [&](auto&& self, int v, int parent) -> int {
        std::vector<int> kids;
        for (auto [u, lid] : adj[v]) {
            if (u == parent) continue;
            int c = self(self, u, v);
            if (c >= 0) kids.push_back(c);
        }
        if (monitored.count(v)) {
            if (!kids.empty())
                throw ValidationError("monitored leaf has descendants holding leaves");
            RawNode leaf;
            leaf.leaf = static_cast<int>(
                std::lower_bound(sorted_ids.begin(), sorted_ids.end(), v) - sorted_ids.begin());
            nodes.push_back(leaf);
            return static_cast<int>(nodes.size()) - 1;
        }
        if (kids.empty()) return -1;
        if (kids.size() == 1 && v != root) return kids[0]; // contract pass-through node
        RawNode internal;
        internal.children = kids;
        nodes.push_back(internal);
        return static_cast<int>(nodes.size()) - 1;
    };
    int top = build(build, root, -1);
    if (top < 0) throw ValidationError("no monitored leaves reachable from root");
    // build() never contracts the root itself, so `top` is the root's node
    return canonicalize(nodes, top, sorted_ids, true);
}

namespace {

double padded_entry(const Mat& m, int i, int j) {
    return (i < m.rows && j < m.cols) ? m(i, j) : 0.0;
}

} // namespace

double hamming_distance(const InferredTopology& a, const InferredTopology& b) {
    const int n = std::max(a.adjacency.rows, b.adjacency.rows);
    if (n < 2) return 0.0;
    long diff = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (padded_entry(a.adjacency, i, j) != padded_entry(b.adjacency, i, j)) ++diff;
        }
    return static_cast<double>(diff) / (static_cast<double>(n) * (n - 1));
}

double frobenius_distance(const InferredTopology& a, const InferredTopology& b) {
    const int n = std::max(a.adjacency.rows, b.adjacency.rows);
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d = padded_entry(a.adjacency, i, j) - padded_entry(b.adjacency, i, j);
            s += d * d;
        }
    return std::sqrt(s);
}

ClassificationScores classification_metrics(const std::vector<int>& predicted,
                                            const std::vector<int>& truth, int universe) {
    std::set<int> pred(predicted.begin(), predicted.end());
    std::set<int> tr(truth.begin(), truth.end());
    ClassificationScores s;
    for (int p : pred) tr.count(p) ? ++s.tp : ++s.fp;
    for (int t : tr)
        if (!pred.count(t)) ++s.fn;
    s.tn = universe - s.tp - s.fp - s.fn;

    if (s.tp + s.fp == 0)
        s.precision = tr.empty() ? 1.0 : 0.0;
    else
        s.precision = static_cast<double>(s.tp) / (s.tp + s.fp);
    s.recall = (s.tp + s.fn == 0) ? 1.0 : static_cast<double>(s.tp) / (s.tp + s.fn);
    s.f1 = (s.precision + s.recall == 0.0)
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    const long negatives = universe - static_cast<long>(tr.size());
    s.fpr = negatives <= 0 ? 0.0 : static_cast<double>(s.fp) / negatives;
    return s;
}

ClassificationScores accumulate_scores(const std::vector<long>& c) {
    ClassificationScores s;
    s.tp = c[0];
    s.fp = c[1];
    s.fn = c[2];
    s.tn = c[3];
    const bool truth_empty = s.tp + s.fn == 0;
    if (s.tp + s.fp == 0)
        s.precision = truth_empty ? 1.0 : 0.0;
    else
        s.precision = static_cast<double>(s.tp) / (s.tp + s.fp);
    s.recall = truth_empty ? 1.0 : static_cast<double>(s.tp) / (s.tp + s.fn);
    s.f1 = (s.precision + s.recall == 0.0)
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    const long negatives = s.fp + s.tn;
    s.fpr = negatives <= 0 ? 0.0 : static_cast<double>(s.fp) / negatives;
    return s;
}

GapStats error_gap(const std::vector<double>& value, const std::vector<double>& reference) {
    if (value.size() != reference.size()) throw ShapeError("error_gap: length mismatch");
    GapStats g;
    const int n = static_cast<int>(value.size());
    if (n == 0) return g;
    for (int i = 0; i < n; ++i) g.mean += std::abs(value[i] - reference[i]);
    g.mean /= n;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(value[i] - reference[i]) - g.mean;
        g.stddev += d * d;
    }
    g.stddev = std::sqrt(g.stddev / n);
    return g;
}

} // namespace platont
