#pragma once

#include <utility>
#include <vector>

#include "platont/linalg.hpp"

namespace platont {

struct PcaModel {
    std::vector<double> mean;
    Mat components; // k x D, rows orthonormal
    int k = 0;
};

// Center, take the top-k covariance eigendirections (shared symmetric
// eigensolver), reconstruct as mean + projection onto their span.
std::pair<PcaModel, Mat> pca_fit_denoise(const Mat& x, int k);
Mat pca_denoise(const PcaModel& model, const Mat& x);

struct CcaModel {
    std::vector<double> mean_c, mean_d;
    Mat wc, wd;                       // p x k, q x k
    std::vector<double> correlations; // descending, in [0, 1]
};

// Whiten each view against its (ridge 1e-6) covariance and take the singular
// structure of the whitened cross-covariance via the eigendecomposition of
// its symmetric square. Projected training views have identity within-view
// covariance.
CcaModel cca_fit(const Mat& c, const Mat& d, int k);

// Project to the canonical space and reconstruct through the
// ridge-regularized pseudo-inverse of the projection.
std::pair<Mat, Mat> cca_denoise(const CcaModel& model, const Mat& c, const Mat& d);

} // namespace platont
