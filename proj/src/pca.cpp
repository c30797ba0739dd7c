// SPDX-License-Identifier: Apache-2.0
#include "fintrec/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fintrec {

std::vector<float> PcaModel::transform(const std::vector<float>& row) const {
    if (static_cast<int>(row.size()) != in_dim) {
        throw std::invalid_argument("pca: input dimension mismatch");
    }
    std::vector<float> out(out_dim, 0.0f);
    for (int k = 0; k < out_dim; ++k) {
        const float* comp = components.data() + static_cast<size_t>(k) * in_dim;
        float acc = 0.0f;
        for (int j = 0; j < in_dim; ++j) acc += comp[j] * (row[j] - mean[j]);
        out[k] = acc;
    }
    return out;
}

PcaModel pca_fit(const std::vector<float>& X, int n, int d, int out_dim) {
    if (n < 2) throw std::invalid_argument("pca: need at least two rows");
    if (out_dim < 1 || out_dim > d) throw std::invalid_argument("pca: out_dim out of range");
    if (static_cast<int64_t>(X.size()) != static_cast<int64_t>(n) * d) {
        throw std::invalid_argument("pca: data length does not match n*d");
    }

    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) mean[j] += X[static_cast<size_t>(i) * d + j];
    }
    for (double& m : mean) m /= n;

    // covariance (sample, divides by n-1)
    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        const float* row = X.data() + static_cast<size_t>(i) * d;
        for (int a = 0; a < d; ++a) {
            const double da = row[a] - mean[a];
            for (int b = a; b < d; ++b) {
                cov[static_cast<size_t>(a) * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) {
            const double v = cov[static_cast<size_t>(a) * d + b] / (n - 1);
            cov[static_cast<size_t>(a) * d + b] = v;
            cov[static_cast<size_t>(b) * d + a] = v;
        }
    }

    // cyclic Jacobi rotations; V accumulates eigenvectors as columns
    std::vector<double> V(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) V[static_cast<size_t>(i) * d + i] = 1.0;
    auto at = [d](std::vector<double>& M, int r, int c) -> double& {
        return M[static_cast<size_t>(r) * d + c];
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) off += std::abs(at(cov, p, q));
        }
        if (off < 1e-14) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = at(cov, p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(cov, q, q) - at(cov, p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = at(cov, i, p), aiq = at(cov, i, q);
                    at(cov, i, p) = c * aip - s * aiq;
                    at(cov, i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = at(cov, p, i), aqi = at(cov, q, i);
                    at(cov, p, i) = c * api - s * aqi;
                    at(cov, q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = at(V, i, p), viq = at(V, i, q);
                    at(V, i, p) = c * vip - s * viq;
                    at(V, i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return at(cov, a, a) > at(cov, b, b);
    });

    PcaModel model;
    model.in_dim = d;
    model.out_dim = out_dim;
    model.mean.assign(mean.begin(), mean.end());
    model.components.resize(static_cast<size_t>(out_dim) * d);
    model.variance.resize(out_dim);
    double trace = 0.0;
    for (int i = 0; i < d; ++i) trace += std::max(0.0, at(cov, i, i));
    model.total_variance = static_cast<float>(trace);
    for (int k = 0; k < out_dim; ++k) {
        const int col = idx[k];
        model.variance[k] = static_cast<float>(std::max(0.0, at(cov, col, col)));
        // deterministic sign: largest-magnitude entry is positive
        int arg = 0;
        double best = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = std::abs(at(V, j, col));
            if (v > best) {
                best = v;
                arg = j;
            }
        }
        const double sgn = at(V, arg, col) >= 0.0 ? 1.0 : -1.0;
        for (int j = 0; j < d; ++j) {
            model.components[static_cast<size_t>(k) * d + j] =
                static_cast<float>(sgn * at(V, j, col));
        }
    }
    return model;
}

PcaResult pca_fit_transform(const std::vector<float>& X, int n, int d, int out_dim) {
    PcaResult res;
    res.model = pca_fit(X, n, d, out_dim);
    res.transformed.resize(static_cast<size_t>(n) * out_dim);
    std::vector<float> row(d);
    for (int i = 0; i < n; ++i) {
        std::copy_n(X.data() + static_cast<size_t>(i) * d, d, row.begin());
        const auto t = res.model.transform(row);
        std::copy_n(t.data(), out_dim, res.transformed.data() + static_cast<size_t>(i) * out_dim);
    }
    return res;
}

}  // namespace fintrec
