#include "platont/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "platont/errors.hpp"

namespace platont {

AlignmentResult alignment_loss(const std::vector<const Mat*>& latents, double tau) {
    const int n_ch = static_cast<int>(latents.size());
    if (n_ch < 2) throw std::invalid_argument("alignment_loss: need at least two channels");
    const int n = latents[0]->rows;
    const int d = latents[0]->cols;
    if (n < 2) throw std::invalid_argument("alignment_loss: batch size must be >= 2");
    for (const Mat* z : latents)
        if (z->rows != n || z->cols != d)
            throw ShapeError("alignment_loss: channel shapes differ");

    std::vector<std::vector<double>> norms(n_ch, std::vector<double>(n));
    for (int c = 0; c < n_ch; ++c)
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = latents[c]->row(i);
            for (int j = 0; j < d; ++j) s += row[j] * row[j];
            norms[c][i] = std::sqrt(s);
            if (norms[c][i] == 0.0)
                throw DegenerateEmbeddingError("alignment_loss: zero-norm latent row " +
                                               std::to_string(i) + " in channel " +
                                               std::to_string(c));
        }

    AlignmentResult res;
    res.grads.reserve(n_ch);
    for (int c = 0; c < n_ch; ++c) res.grads.push_back(Mat(n, d));

    Mat sim(n, n);
    std::vector<double> prob(n);
    for (int ci = 0; ci < n_ch; ++ci) {
        for (int cj = 0; cj < n_ch; ++cj) {
            if (ci == cj) continue;
            const Mat& zi = *latents[ci];
            const Mat& zj = *latents[cj];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double s = 0.0;
                    const double* ra = zi.row(a);
                    const double* rb = zj.row(b);
                    for (int k = 0; k < d; ++k) s += ra[k] * rb[k];
                    sim(a, b) = s / (norms[ci][a] * norms[cj][b]);
                }
            for (int a = 0; a < n; ++a) {
                double mx = sim(a, 0);
                for (int b = 1; b < n; ++b) mx = std::max(mx, sim(a, b));
                double z = 0.0;
                for (int b = 0; b < n; ++b) {
                    prob[b] = std::exp((sim(a, b) - mx) / tau);
                    z += prob[b];
                }
                // value: s_aa/tau - log((1/N) sum exp(s_ab/tau))
                res.value += sim(a, a) / tau - (mx / tau + std::log(z / n));
                // dL/ds_ab = (p_ab - delta_ab) / (N tau)
                for (int b = 0; b < n; ++b) {
                    double g = (prob[b] / z - (a == b ? 1.0 : 0.0)) / (n * tau);
                    if (g == 0.0) continue;
                    const double* ra = zi.row(a);
                    const double* rb = zj.row(b);
                    double* da = res.grads[ci].row(a);
                    double* db = res.grads[cj].row(b);
                    const double inv = 1.0 / (norms[ci][a] * norms[cj][b]);
                    const double s_ab = sim(a, b);
                    const double ia2 = 1.0 / (norms[ci][a] * norms[ci][a]);
                    const double ib2 = 1.0 / (norms[cj][b] * norms[cj][b]);
                    for (int k = 0; k < d; ++k) {
                        da[k] += g * (rb[k] * inv - s_ab * ra[k] * ia2);
                        db[k] += g * (ra[k] * inv - s_ab * rb[k] * ib2);
                    }
                }
            }
        }
    }
    res.value = -res.value / n;
    return res;
}

namespace {

inline double huber(double r, double delta) {
    const double ar = std::abs(r);
    return ar <= delta ? 0.5 * r * r : delta * (ar - 0.5 * delta);
}

inline double huber_grad(double r, double delta) {
    if (r > delta) return delta;
    if (r < -delta) return -delta;
    return r;
}

} // namespace

RecResult reconstruction_loss(const std::vector<RecChannel>& channels, double huber_delta,
                              RecMode mode) {
    const int n_ch = static_cast<int>(channels.size());
    if (n_ch < 1) throw std::invalid_argument("reconstruction_loss: no channels");
    RecResult res;
    res.sigma.assign(n_ch, 1.0);
    res.grads.reserve(n_ch);

    for (int c = 0; c < n_ch; ++c) {
        const RecChannel& ch = channels[c];
        const Mat& recon = *ch.recon;
        const int n = recon.rows, d = recon.cols;
        if (!ch.noisy->same_shape(recon) || !ch.clean->same_shape(recon))
            throw ShapeError("reconstruction_loss: channel shapes differ");
        if (static_cast<int>(ch.clean_mask->size()) != n)
            throw ShapeError("reconstruction_loss: clean mask length mismatch");
        res.grads.push_back(Mat(n, d));
        Mat& grad = res.grads.back();

        int n_clean = 0;
        for (auto m : *ch.clean_mask) n_clean += m ? 1 : 0;

        if (mode == RecMode::HuberNormalized) {
            // sigma_k from the batch's clean targets; fall back to the mixed
            // target rows when the batch holds no clean-labeled samples
            double mean = 0.0, var = 0.0;
            long cnt = 0;
            auto accumulate = [&](bool clean_only) {
                mean = var = 0.0;
                cnt = 0;
                for (int i = 0; i < n; ++i) {
                    if (clean_only && !(*ch.clean_mask)[i]) continue;
                    const Mat& src = (*ch.clean_mask)[i] ? *ch.clean : *ch.noisy;
                    for (int j = 0; j < d; ++j) {
                        mean += src(i, j);
                        ++cnt;
                    }
                }
                if (cnt == 0) return;
                mean /= cnt;
                for (int i = 0; i < n; ++i) {
                    if (clean_only && !(*ch.clean_mask)[i]) continue;
                    const Mat& src = (*ch.clean_mask)[i] ? *ch.clean : *ch.noisy;
                    for (int j = 0; j < d; ++j) {
                        const double dv = src(i, j) - mean;
                        var += dv * dv;
                    }
                }
                var /= cnt;
            };
            accumulate(n_clean > 0);
            double sigma = std::sqrt(var);
            if (sigma < 1e-6) {
                sigma = 1e-6;
                res.sigma_floored = true;
            }
            res.sigma[c] = sigma;
            double sum = 0.0;
            const double gscale = 1.0 / (static_cast<double>(n) * d * sigma * n_ch);
            for (int i = 0; i < n; ++i) {
                const Mat& target = (*ch.clean_mask)[i] ? *ch.clean : *ch.noisy;
                for (int j = 0; j < d; ++j) {
                    const double r = recon(i, j) - target(i, j);
                    sum += huber(r, huber_delta);
                    grad(i, j) = huber_grad(r, huber_delta) * gscale;
                }
            }
            res.value += sum / (static_cast<double>(n) * d * sigma * n_ch);
        } else {
            // literal hybrid objective: per-subset means of squared norms,
            // summed over indicators
            const int n_noisy = n - n_clean;
            double sum_clean = 0.0, sum_noisy = 0.0;
            for (int i = 0; i < n; ++i) {
                const bool is_clean = (*ch.clean_mask)[i] != 0;
                const Mat& target = is_clean ? *ch.clean : *ch.noisy;
                const double w =
                    is_clean ? 1.0 / std::max(n_clean, 1) : 1.0 / std::max(n_noisy, 1);
                for (int j = 0; j < d; ++j) {
                    const double r = recon(i, j) - target(i, j);
                    (is_clean ? sum_clean : sum_noisy) += r * r * w;
                    grad(i, j) = 2.0 * r * w;
                }
            }
            res.value += sum_clean + sum_noisy;
        }
    }
    return res;
}

namespace {

// M = (R^T R + ridge I)^-1 R^T, the closed-form ridge surrogate
Mat ridge_surrogate(const Mat& routing, double ridge) {
    Mat gram = matmul_tn(routing, routing);
    for (int i = 0; i < gram.rows; ++i) gram(i, i) += ridge;
    const Mat rt = transpose(routing);
    Mat m(gram.rows, rt.cols);
    std::vector<double> col(gram.rows), sol;
    for (int j = 0; j < rt.cols; ++j) {
        for (int i = 0; i < gram.rows; ++i) col[i] = rt(i, j);
        if (!cholesky_spd_solve(gram, col, sol))
            throw ValidationError("task surrogate: singular normal equations; increase ridge");
        for (int i = 0; i < gram.rows; ++i) m(i, j) = sol[i];
    }
    return m;
}

} // namespace

TaskResult link_task_loss(const Mat& recon_path_delay, const Mat& link_delay_labels,
                          const Mat& routing, double ridge) {
    if (recon_path_delay.cols != routing.rows)
        throw ShapeError("link_task_loss: path dim mismatch with routing rows");
    if (link_delay_labels.cols != routing.cols || link_delay_labels.rows != recon_path_delay.rows)
        throw ShapeError("link_task_loss: label shape mismatch");
    const Mat m = ridge_surrogate(routing, ridge); // |L| x |P|
    const int n = recon_path_delay.rows;

    Mat est = matmul_nt(recon_path_delay, m); // N x |L|
    TaskResult res;
    res.grad = Mat(n, recon_path_delay.cols);
    Mat resid(n, est.cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < est.cols; ++j) {
            const double r = est(i, j) - link_delay_labels(i, j);
            resid(i, j) = r;
            res.value += r * r;
        }
    res.value /= n;
    Mat g = matmul(resid, m); // N x |P|
    for (std::size_t k = 0; k < g.a.size(); ++k) res.grad.a[k] = 2.0 * g.a[k] / n;
    return res;
}

TaskResult od_task_loss(const Mat& recon_path_bw, const std::vector<double>& capacities,
                        const Mat& routing, const Mat& od_routing, const Mat& od_labels,
                        double ridge) {
    const int n = recon_path_bw.rows;
    const int n_links = routing.cols;
    const int n_pairs = od_routing.cols;
    if (od_routing.rows != n_links) throw ShapeError("od_task_loss: od_routing rows != links");
    if (od_labels.rows != n || od_labels.cols != n_pairs)
        throw ShapeError("od_task_loss: label shape mismatch");

    const Mat m = ridge_surrogate(od_routing, ridge); // pairs x links

    TaskResult res;
    res.grad = Mat(n, recon_path_bw.cols);
    // loads_l = capacity_l - min over covering paths of bw; argmin fixed for
    // the backward pass
    std::vector<std::vector<int>> covering(n_links);
    for (int p = 0; p < routing.rows; ++p)
        for (int l = 0; l < n_links; ++l)
            if (routing(p, l) != 0.0) covering[l].push_back(p);

    std::vector<double> loads(n_links), est, resid_row(n_pairs);
    std::vector<int> argmin(n_links);
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < n_links; ++l) {
            double mn = 0.0;
            int arg = -1;
            for (int p : covering[l]) {
                const double v = recon_path_bw(i, p);
                if (arg < 0 || v < mn) {
                    mn = v;
                    arg = p;
                }
            }
            argmin[l] = arg;
            loads[l] = arg < 0 ? 0.0 : std::max(0.0, capacities[l] - mn);
        }
        est = matvec(m, loads);
        for (int j = 0; j < n_pairs; ++j) {
            resid_row[j] = est[j] - od_labels(i, j);
            res.value += resid_row[j] * resid_row[j];
        }
        const std::vector<double> d_loads = matvec_t(m, resid_row); // links
        for (int l = 0; l < n_links; ++l) {
            if (argmin[l] < 0 || loads[l] <= 0.0) continue;
            res.grad(i, argmin[l]) += -2.0 * d_loads[l] / n;
        }
    }
    res.value /= n;
    return res;
}

LossReport total_loss(double align, double rec, double task, const LossWeights& w) {
    if (std::isnan(align)) throw NumericError("total_loss: alignment component is NaN");
    if (std::isnan(rec)) throw NumericError("total_loss: reconstruction component is NaN");
    if (std::isnan(task)) throw NumericError("total_loss: task component is NaN");
    LossReport rep;
    rep.align = align;
    rep.rec = rec;
    rep.task = task;
    rep.total = w.lambda1 * align + w.lambda2 * rec + w.lambda3 * task;
    return rep;
}

} // namespace platont
