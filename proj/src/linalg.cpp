#include "platont/linalg.hpp"

#include <cmath>
#include <cstddef>

#include "platont/errors.hpp"

namespace platont {

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dims differ");
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw ShapeError("matmul_tn: leading dims differ");
    Mat c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i);
            for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw ShapeError("matmul_nt: trailing dims differ");
    Mat c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
    return c;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

std::vector<double> matvec(const Mat& a, const std::vector<double>& x) {
    if (a.cols != static_cast<int>(x.size())) throw ShapeError("matvec: dim mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> matvec_t(const Mat& a, const std::vector<double>& x) {
    if (a.rows != static_cast<int>(x.size())) throw ShapeError("matvec_t: dim mismatch");
    std::vector<double> y(a.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (int j = 0; j < a.cols; ++j) y[j] += ai[j] * xi;
    }
    return y;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(const std::vector<double>& x) { return std::sqrt(dot(x, x)); }

double frobenius(const Mat& a) {
    double s = 0.0;
    for (double v : a.a) s += v * v;
    return std::sqrt(s);
}

bool all_finite(const Mat& a) {
    for (double v : a.a)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const std::vector<double>& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

bool cholesky_spd_solve(Mat a, const std::vector<double>& b, std::vector<double>& x, double tol) {
    const int n = a.rows;
    if (a.cols != n || static_cast<int>(b.size()) != n) throw ShapeError("cholesky: dim mismatch");
    // in-place lower factor
    for (int j = 0; j < n; ++j) {
        double d = a(j, j);
        for (int k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > tol)) return false;
        const double ljj = std::sqrt(d);
        a(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / ljj;
        }
    }
    // forward then backward substitution
    x = b;
    for (int i = 0; i < n; ++i) {
        double s = x[i];
        for (int k = 0; k < i; ++k) s -= a(i, k) * x[k];
        x[i] = s / a(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int k = i + 1; k < n; ++k) s -= a(k, i) * x[k];
        x[i] = s / a(i, i);
    }
    return true;
}

} // namespace platont
