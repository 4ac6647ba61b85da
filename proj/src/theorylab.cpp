#include "platont/theorylab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "platont/errors.hpp"
#include "platont/rng.hpp"

namespace platont {

namespace {

double offdiag_frobenius(const Mat& a) {
    double s = 0.0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

} // namespace

EigenResult symmetric_eigen(const Mat& m) {
    const int n = m.rows;
    if (m.cols != n) throw ShapeError("symmetric_eigen: matrix not square");
    if (n > 512) throw ValidationError("symmetric_eigen: n > 512");
    const double scale = frobenius(m);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-10 * std::max(1.0, scale))
                throw ValidationError("symmetric_eigen: input not symmetric");

    Mat a = m;
    Mat v = Mat::identity(n);
    const double target = 1e-12 * scale;
    // zero matrix: already diagonal
    for (int sweep = 0; sweep < 100 && offdiag_frobenius(a) > target; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a(i, i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] > diag[y]; });

    EigenResult res;
    res.values.resize(n);
    res.vectors = Mat(n, n);
    for (int j = 0; j < n; ++j) {
        res.values[j] = diag[order[j]];
        for (int i = 0; i < n; ++i) res.vectors(i, j) = v(i, order[j]);
    }
    return res;
}

double PmiMatrix::alpha() const {
    double m = 0.0;
    for (int i = 0; i < k.rows; ++i)
        for (int j = 0; j < k.cols; ++j)
            if (i != j) m = std::max(m, std::abs(k(i, j)));
    return m;
}

void PmiMatrix::validate() const {
    if (k.rows != k.cols) throw ShapeError("PmiMatrix: not square");
    if (!(rho_min > 0.0 && rho_min <= 1.0)) throw ValidationError("PmiMatrix: rho_min outside (0,1]");
    if (eps < 0.0) throw ValidationError("PmiMatrix: eps < 0");
    for (int i = 0; i < k.rows; ++i)
        for (int j = i; j < k.cols; ++j) {
            if (!std::isfinite(k(i, j))) throw NumericError("PmiMatrix: non-finite entry");
            if (std::abs(k(i, j) - k(j, i)) > 1e-12 * std::max(1.0, std::abs(k(i, j))))
                throw ValidationError("PmiMatrix: not symmetric");
        }
}

PmiMatrix pmi_from_counts(const Mat& counts) {
    const int n = counts.rows;
    if (counts.cols != n) throw ShapeError("pmi_from_counts: counts not square");
    double total = 0.0;
    for (double c : counts.a) {
        if (c < 0.0) throw std::invalid_argument("pmi_from_counts: negative count");
        total += c;
    }
    if (total <= 0.0) throw std::invalid_argument("pmi_from_counts: all-zero counts");

    Mat joint(n, n);
    double smoothed_total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            joint(i, j) = 0.5 * (counts(i, j) + counts(j, i)) + 1.0;
            smoothed_total += joint(i, j);
        }
    std::vector<double> row_marg(n, 0.0), col_marg(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            joint(i, j) /= smoothed_total;
            row_marg[i] += joint(i, j);
        }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) col_marg[j] += joint(i, j);

    PmiMatrix out;
    out.k = Mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.k(i, j) = std::log(joint(i, j) / (row_marg[i] * col_marg[j]));
    // measured smoothness parameters: tightest (A1) interval containing the
    // off-diagonal range, with rho_min capped at 1
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) {
                lo = first ? out.k(i, j) : std::min(lo, out.k(i, j));
                hi = first ? out.k(i, j) : std::max(hi, out.k(i, j));
                first = false;
            }
    const double log_rho = first ? 0.0 : std::min(lo, 0.0);
    out.rho_min = std::exp(log_rho);
    out.eps = first ? 0.0 : hi - log_rho;
    out.counts_derived = true;
    out.validate();
    return out;
}

Theorem1Report theorem1_shift(const PmiMatrix& k) {
    k.validate();
    const int n = k.k.rows;
    Theorem1Report rep;
    double min_diag = k.k(0, 0);
    for (int i = 1; i < n; ++i) min_diag = std::min(min_diag, k.k(i, i));
    const double alpha = k.alpha();
    rep.c_bound = std::max(0.0, (n - 1) * alpha - min_diag);

    EigenResult eig = symmetric_eigen(k.k);
    rep.min_eig = eig.values.back();
    rep.min_eig_shifted = rep.min_eig + rep.c_bound;

    const double log_rho = std::log(k.rho_min);
    rep.a1_holds = true;
    for (int i = 0; i < n && rep.a1_holds; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && (k.k(i, j) < log_rho - 1e-12 || k.k(i, j) > log_rho + k.eps + 1e-12)) {
                rep.a1_holds = false;
                break;
            }
    rep.a2_holds = min_diag >= n * k.eps + log_rho - 1e-12;
    rep.part2_precondition = rep.a1_holds && rep.a2_holds && k.eps >= n * std::abs(log_rho) - 1e-12;
    return rep;
}

PmiMatrix build_a1a2_instance(int n, double rho_min, double eps, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("build_a1a2_instance: n < 2");
    if (!(rho_min > 0.0 && rho_min <= 1.0))
        throw std::invalid_argument("build_a1a2_instance: rho_min outside (0,1]");
    if (eps < 0.0) throw std::invalid_argument("build_a1a2_instance: eps < 0");
    Rng rng(stream_seed(seed, 0xA1A2));
    const double log_rho = std::log(rho_min);
    PmiMatrix out;
    out.k = Mat(n, n);
    out.rho_min = rho_min;
    out.eps = eps;
    for (int i = 0; i < n; ++i) {
        out.k(i, i) = rng.uniform(n * eps + log_rho, n * eps + log_rho + 1.0);
        for (int j = i + 1; j < n; ++j) {
            const double v = rng.uniform(log_rho, log_rho + eps);
            out.k(i, j) = v;
            out.k(j, i) = v;
        }
    }
    out.validate();
    return out;
}

Mat pmi_feature_map(const PmiMatrix& k, double shift) {
    Mat shifted = k.k;
    for (int i = 0; i < shifted.rows; ++i) shifted(i, i) += shift;
    EigenResult eig = symmetric_eigen(shifted);
    if (eig.values.back() < -1e-8) throw ValidationError("pmi_feature_map: shifted kernel not PSD");
    const int n = shifted.rows;
    Mat f(n, n);
    for (int j = 0; j < n; ++j) {
        const double s = std::sqrt(std::max(0.0, eig.values[j]));
        for (int i = 0; i < n; ++i) f(i, j) = eig.vectors(i, j) * s;
    }
    return f;
}

Prop1Report proposition1_check(const GradientBundle& bundle, double eps_target) {
    const Mat& a = bundle.gradients;
    const int m = a.cols;
    if (m < 1) throw std::invalid_argument("proposition1_check: no gradients");
    if (static_cast<int>(bundle.lambda.size()) != m)
        throw ShapeError("proposition1_check: lambda size mismatch");

    // Gram of the gradient columns; the whole analysis lives in its
    // eigendecomposition, so the ambient dimension p never appears.
    Mat gram = matmul_tn(a, a);
    const double total = [&] {
        double t = 0.0;
        for (int i = 0; i < m; ++i) t += gram(i, i);
        return t;
    }();
    if (total <= 0.0) throw std::invalid_argument("proposition1_check: all gradients zero");

    EigenResult eig = symmetric_eigen(gram); // sigma_j^2 descending
    const int rank_cap = m;

    // ||P_U g_i||^2 = sum_{j<r} sigma_j^2 v_j[i]^2 with v_j the Gram
    // eigenvectors; residual fraction per gradient follows directly.
    auto eps_at = [&](int r) {
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            const double gii = gram(i, i);
            if (gii <= 0.0) continue;
            double kept = 0.0;
            for (int j = 0; j < r; ++j)
                kept += std::max(0.0, eig.values[j]) * eig.vectors(i, j) * eig.vectors(i, j);
            const double resid = std::max(0.0, gii - kept);
            worst = std::max(worst, std::sqrt(resid / gii));
        }
        return worst;
    };

    Prop1Report rep;
    rep.r = rank_cap;
    rep.eps_s1 = eps_at(rank_cap);
    for (int r = 1; r <= rank_cap; ++r) {
        const double e = eps_at(r);
        if (e <= eps_target) {
            rep.r = r;
            rep.eps_s1 = e;
            break;
        }
    }

    double proj_trace = 0.0;
    for (int j = 0; j < rep.r; ++j) proj_trace += std::max(0.0, eig.values[j]);
    const double lam_max = std::max(0.0, eig.values[0]);
    rep.delta = proj_trace > 0.0 ? lam_max * rep.r / proj_trace - 1.0 : 0.0;
    rep.delta = std::max(0.0, rep.delta);
    rep.eta = 2.0 * rep.eps_s1 * std::sqrt(rep.r / (1.0 + rep.delta)) +
              rep.eps_s1 * rep.eps_s1 * rep.r / (1.0 + rep.delta);

    // lhs = lambda^T Gram lambda
    double lhs = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) lhs += bundle.lambda[i] * gram(i, j) * bundle.lambda[j];
    rep.lhs = std::max(0.0, lhs);
    const double lam_norm2 = dot(bundle.lambda, bundle.lambda);
    rep.rhs = (1.0 + rep.eta) * (1.0 + rep.delta) / rep.r * lam_norm2 * total;
    rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-9) + 1e-12;
    return rep;
}

} // namespace platont
