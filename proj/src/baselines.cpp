#include "platont/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "platont/errors.hpp"
#include "platont/theorylab.hpp"

namespace platont {

namespace {

std::vector<double> column_means(const Mat& x) {
    std::vector<double> m(x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) m[j] += x(i, j);
    for (double& v : m) v /= x.rows;
    return m;
}

Mat centered(const Mat& x, const std::vector<double>& mean) {
    Mat c = x;
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) c(i, j) -= mean[j];
    return c;
}

Mat covariance(const Mat& xc) {
    Mat cov = matmul_tn(xc, xc);
    const double inv = 1.0 / std::max(1, xc.rows - 1);
    for (double& v : cov.a) v *= inv;
    return cov;
}

// V diag(f(lambda)) V^T for a symmetric PSD matrix
Mat eig_apply(const EigenResult& eig, double (*f)(double)) {
    const int n = eig.vectors.rows;
    Mat out(n, n);
    for (int k = 0; k < n; ++k) {
        const double fv = f(std::max(eig.values[k], 0.0));
        if (fv == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const double vik = eig.vectors(i, k) * fv;
            if (vik == 0.0) continue;
            for (int j = 0; j < n; ++j) out(i, j) += vik * eig.vectors(j, k);
        }
    }
    return out;
}

double inv_sqrt(double x) { return x > 0.0 ? 1.0 / std::sqrt(x) : 0.0; }

} // namespace

std::pair<PcaModel, Mat> pca_fit_denoise(const Mat& x, int k) {
    const int n = x.rows, dims = x.cols;
    if (k < 1 || k > dims || k >= n)
        throw std::invalid_argument("pca_fit_denoise: need 1 <= k <= dims and k < N");
    PcaModel model;
    model.k = k;
    model.mean = column_means(x);
    const Mat xc = centered(x, model.mean);
    EigenResult eig = symmetric_eigen(covariance(xc));
    model.components = Mat(k, dims);
    for (int r = 0; r < k; ++r)
        for (int j = 0; j < dims; ++j) model.components(r, j) = eig.vectors(j, r);
    return {model, pca_denoise(model, x)};
}

Mat pca_denoise(const PcaModel& model, const Mat& x) {
    const Mat xc = centered(x, model.mean);
    const Mat proj = matmul_nt(xc, model.components); // N x k
    Mat recon = matmul(proj, model.components);       // N x D
    for (int i = 0; i < recon.rows; ++i)
        for (int j = 0; j < recon.cols; ++j) recon(i, j) += model.mean[j];
    return recon;
}

CcaModel cca_fit(const Mat& c, const Mat& d, int k) {
    if (c.rows != d.rows) throw ShapeError("cca_fit: row counts differ");
    const int p = c.cols, q = d.cols;
    if (k < 1 || k > std::min(p, q))
        throw std::invalid_argument("cca_fit: need 1 <= k <= min(p, q)");
    if (!all_finite(c) || !all_finite(d)) throw NumericError("cca_fit: non-finite input");

    CcaModel model;
    model.mean_c = column_means(c);
    model.mean_d = column_means(d);
    const Mat cc = centered(c, model.mean_c);
    const Mat dc = centered(d, model.mean_d);

    Mat scc = covariance(cc);
    Mat sdd = covariance(dc);
    for (int i = 0; i < p; ++i) scc(i, i) += 1e-6;
    for (int i = 0; i < q; ++i) sdd(i, i) += 1e-6;
    Mat scd = matmul_tn(cc, dc);
    for (double& v : scd.a) v /= std::max(1, c.rows - 1);

    const Mat scc_isqrt = eig_apply(symmetric_eigen(scc), inv_sqrt);
    const Mat sdd_isqrt = eig_apply(symmetric_eigen(sdd), inv_sqrt);
    const Mat t = matmul(matmul(scc_isqrt, scd), sdd_isqrt); // p x q

    EigenResult sq = symmetric_eigen(matmul_tn(t, t)); // q x q, eigs = corr^2
    Mat v(q, k), u(p, k);
    model.correlations.resize(k);
    for (int j = 0; j < k; ++j) {
        const double corr = std::sqrt(std::clamp(sq.values[j], 0.0, 1.0));
        model.correlations[j] = corr;
        std::vector<double> vj(q);
        for (int i = 0; i < q; ++i) {
            vj[i] = sq.vectors(i, j);
            v(i, j) = vj[i];
        }
        const std::vector<double> tv = matvec(t, vj);
        const double denom = std::max(corr, 1e-12);
        for (int i = 0; i < p; ++i) u(i, j) = tv[i] / denom;
    }
    model.wc = matmul(scc_isqrt, u);
    model.wd = matmul(sdd_isqrt, v);
    return model;
}

namespace {

// S * (W^T W + 1e-6 I)^-1 W^T + mean
Mat reconstruct_view(const Mat& xc, const Mat& w, const std::vector<double>& mean) {
    const int k = w.cols;
    Mat gram = matmul_tn(w, w);
    for (int i = 0; i < k; ++i) gram(i, i) += 1e-6;
    const Mat wt = transpose(w);
    Mat pinv(k, wt.cols);
    std::vector<double> col(k), sol;
    for (int j = 0; j < wt.cols; ++j) {
        for (int i = 0; i < k; ++i) col[i] = wt(i, j);
        if (!cholesky_spd_solve(gram, col, sol))
            throw NumericError("cca_denoise: projection Gram not SPD");
        for (int i = 0; i < k; ++i) pinv(i, j) = sol[i];
    }
    const Mat scores = matmul(xc, w);
    Mat recon = matmul(scores, pinv);
    for (int i = 0; i < recon.rows; ++i)
        for (int j = 0; j < recon.cols; ++j) recon(i, j) += mean[j];
    return recon;
}

} // namespace

std::pair<Mat, Mat> cca_denoise(const CcaModel& model, const Mat& c, const Mat& d) {
    if (model.wc.rows != c.cols || model.wd.rows != d.cols)
        throw ShapeError("cca_denoise: view dims differ from the fitted model");
    const Mat cc = centered(c, model.mean_c);
    const Mat dc = centered(d, model.mean_d);
    return {reconstruct_view(cc, model.wc, model.mean_c),
            reconstruct_view(dc, model.wd, model.mean_d)};
}

} // namespace platont
