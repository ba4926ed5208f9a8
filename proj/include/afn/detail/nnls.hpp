#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "afn/common.hpp"

namespace afn::detail {

/// Lawson-Hanson active-set solve of min ||A x - b||_2 over x >= 0.
inline Vec nnls(const Mat& a, const Vec& b, int max_iter = 0) {
    const Eigen::Index n = a.cols();
    if (max_iter <= 0) max_iter = static_cast<int>(10 * n + 30);
    Vec x = Vec::Zero(n);
    std::vector<bool> passive(n, false);
    const double tol = 1e-12 * a.cwiseAbs().maxCoeff() * (b.cwiseAbs().maxCoeff() + 1.0);

    auto solve_passive = [&](const std::vector<bool>& set) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (set[j]) idx.push_back(j);
        Vec z = Vec::Zero(n);
        if (idx.empty()) return z;
        Mat ap(a.rows(), idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) ap.col(k) = a.col(idx[k]);
        Vec zp = ap.colPivHouseholderQr().solve(b);
        for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[k];
        return z;
    };

    for (int it = 0; it < max_iter; ++it) {
        const Vec w = a.transpose() * (b - a * x);
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[j] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        if (best < 0) break;
        passive[best] = true;

        Vec z = solve_passive(passive);
        int guard = 0;
        while (guard++ < max_iter) {
            bool all_positive = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[j] && z[j] <= 0.0) all_positive = false;
            if (all_positive) break;
            double step = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[j] && z[j] <= 0.0 && x[j] > z[j])
                    step = std::min(step, x[j] / (x[j] - z[j]));
            x += step * (z - x);
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[j] && x[j] <= 1e-14) passive[j] = false;
            z = solve_passive(passive);
        }
        x = z;
    }
    return x.cwiseMax(0.0);
}

}  // namespace afn::detail
