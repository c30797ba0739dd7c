// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace fintrec {

// Principal component analysis fitted via Jacobi eigendecomposition of the
// sample covariance (computed in double precision). Component rows are
// orthonormal, ordered by decreasing variance, and sign-normalized so the
// largest-magnitude entry of each row is positive.
struct PcaModel {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<float> mean;        // [in_dim]
    std::vector<float> components;  // [out_dim, in_dim] row-major
    std::vector<float> variance;    // [out_dim] variance captured per component
    float total_variance = 0.0f;    // trace of the covariance

    std::vector<float> transform(const std::vector<float>& row) const;
};

// X is row-major [n, d]; requires n >= 2 and 1 <= out_dim <= d.
PcaModel pca_fit(const std::vector<float>& X, int n, int d, int out_dim);

struct PcaResult {
    PcaModel model;
    std::vector<float> transformed;  // [n, out_dim] row-major
};

PcaResult pca_fit_transform(const std::vector<float>& X, int n, int d, int out_dim);

}  // namespace fintrec
