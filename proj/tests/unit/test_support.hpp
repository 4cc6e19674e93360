#pragma once

#include "fieldharm/geometry.hpp"

#include <random>

namespace fieldharm::testing {

/// Random SPD matrix A A^T / n + eps I with a moderate condition number.
inline SpdMatrix random_spd(std::mt19937_64& rng, Eigen::Index n, double eps = 0.1) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(i, j) = g(rng);
        }
    }
    Matrix c = a * a.transpose() / static_cast<double>(n);
    c.diagonal().array() += eps;
    return SpdMatrix(symmetrize(c));
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            a(i, j) = g(rng);
        }
    }
    return a;
}

inline double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace fieldharm::testing
