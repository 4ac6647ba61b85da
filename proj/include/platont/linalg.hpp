#pragma once

#include <cstddef>
#include <vector>

namespace platont {

// Dense row-major matrix of doubles. Everything in this project stays well
// below 512x512, so no blocking or external BLAS.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    static Mat identity(int n);
};

Mat matmul(const Mat& a, const Mat& b);    // a * b
Mat matmul_tn(const Mat& a, const Mat& b); // a^T * b
Mat matmul_nt(const Mat& a, const Mat& b); // a * b^T
Mat transpose(const Mat& a);

std::vector<double> matvec(const Mat& a, const std::vector<double>& x);   // a * x
std::vector<double> matvec_t(const Mat& a, const std::vector<double>& x); // a^T * x

double dot(const std::vector<double>& x, const std::vector<double>& y);
double norm2(const std::vector<double>& x);
double frobenius(const Mat& a);
bool all_finite(const Mat& a);
bool all_finite(const std::vector<double>& x);

// Solves a*x = b for symmetric positive definite `a` via Cholesky.
// Returns false when a pivot falls below `tol` (not SPD to working precision).
bool cholesky_spd_solve(Mat a, const std::vector<double>& b, std::vector<double>& x,
                        double tol = 1e-300);

} // namespace platont
