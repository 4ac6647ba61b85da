#pragma once

#include <cstdint>
#include <vector>

#include "platont/linalg.hpp"

namespace platont {

struct EigenResult {
    std::vector<double> values; // descending
    Mat vectors;                // column j is the eigenvector of values[j]
};

// Cyclic Jacobi sweeps until the off-diagonal Frobenius mass drops below
// 1e-12 * ||M||_F. Input must be symmetric to 1e-10 and n <= 512.
EigenResult symmetric_eigen(const Mat& m);

// Symmetric matrix of pointwise-mutual-information values together with the
// smoothness parameters used by the positive-semidefiniteness analysis.
// rho_min is a co-occurrence probability floor in (0,1]; eps bounds the
// off-diagonal variation (this eps is unrelated to measurement noise).
struct PmiMatrix {
    Mat k;
    double rho_min = 1.0;
    double eps = 0.0;
    bool counts_derived = false;

    double alpha() const; // max off-diagonal |K_ij|
    void validate() const;
};

// Empirical PMI from a nonnegative co-occurrence count table, Laplace +1
// smoothed cell-wise so no log(0) can occur. Asymmetric counts are
// symmetrized as (c + c^T)/2 before smoothing.
PmiMatrix pmi_from_counts(const Mat& counts);

struct Theorem1Report {
    double c_bound = 0.0;       // max(0, (N-1)*alpha - min_i K_ii)
    double min_eig = 0.0;       // of K
    double min_eig_shifted = 0.0; // of K + c_bound * I
    bool a1_holds = false;
    bool a2_holds = false;
    bool part2_precondition = false; // A1 && A2 && eps >= N*|log rho_min|
};

Theorem1Report theorem1_shift(const PmiMatrix& k);

// Instance satisfying the off-diagonal smoothness (A1) and diagonal lower
// bound (A2) by construction: off-diagonals uniform in
// [log rho_min, log rho_min + eps], diagonals uniform in
// [N*eps + log rho_min, N*eps + log rho_min + 1].
PmiMatrix build_a1a2_instance(int n, double rho_min, double eps, std::uint64_t seed);

// Feature rows f_X = V * Lambda^{1/2} for the shifted kernel; valid when
// K + shift*I is PSD.
Mat pmi_feature_map(const PmiMatrix& k, double shift);

// m gradient vectors of dimension p (columns of `gradients`) with the
// weights that combine them.
struct GradientBundle {
    Mat gradients; // p x m
    std::vector<double> lambda;
};

struct Prop1Report {
    double lhs = 0.0; // ||A lambda||^2
    double rhs = 0.0; // (1+eta) * (1+delta)/r * ||lambda||^2 * sum ||g_i||^2
    bool holds = false;
    int r = 0;
    double eps_s1 = 0.0; // max_i residual fraction outside the rank-r subspace
    double delta = 0.0;  // spectral flatness deviation on the projected Gram
    double eta = 0.0;    // 2*eps*sqrt(r/(1+delta)) + eps^2 * r/(1+delta)
};

// Measures (r, eps, delta, eta) from the bundle itself: r is the smallest
// dimension whose residual energy fraction is <= eps_target for every
// gradient, then the composite-gradient inequality is evaluated with those
// measured constants.
Prop1Report proposition1_check(const GradientBundle& bundle, double eps_target = 0.05);

} // namespace platont
