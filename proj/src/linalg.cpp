#include "fieldharm/linalg.hpp"

#include "fieldharm/error.hpp"

#include <cmath>
#include <numeric>

namespace fieldharm {

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kRelativeOffTol = 1e-15;

}  // namespace

SymEig eigh(const Matrix& input) {
    const Eigen::Index n = input.rows();
    if (input.cols() != n) {
        throw Error(Errc::DimMismatch, "eigh expects a square matrix");
    }
    if (!input.allFinite()) {
        throw Error(Errc::NonFinite, "eigh input has non-finite entries");
    }

    Matrix a = symmetrize(input);
    Matrix v = Matrix::Identity(n, n);

    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double app = a(p, p);
                const double aqq = a(q, q);
                if (std::abs(apq) <= kRelativeOffTol * std::sqrt(std::abs(app * aqq))) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                rotated = true;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                // A <- A J (columns p, q), contiguous in column-major storage.
                auto col_p = a.col(p);
                auto col_q = a.col(q);
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double kp = col_p[k];
                    const double kq = col_q[k];
                    col_p[k] = c * kp - s * kq;
                    col_q[k] = s * kp + c * kq;
                }
                // A <- J^T A: by symmetry the new rows equal the new columns.
                for (Eigen::Index k = 0; k < n; ++k) {
                    a(p, k) = a(k, p);
                    a(q, k) = a(k, q);
                }
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;

                auto vp = v.col(p);
                auto vq = v.col(q);
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double kp = vp[k];
                    const double kq = vq[k];
                    vp[k] = c * kp - s * kq;
                    vq[k] = s * kp + c * kq;
                }
            }
        }
        if (!rotated) {
            break;
        }
    }
    if (sweep == kMaxSweeps) {
        throw Error(Errc::NoConvergence, "Jacobi eigendecomposition exceeded sweep limit");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

    SymEig out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
    }
    out.sweeps = sweep + 1;
    return out;
}

Matrix apply_spectral(const SymEig& eig, const std::function<double(double)>& fn) {
    Vector f = eig.values.unaryExpr(fn);
    Matrix scaled = eig.vectors * f.asDiagonal();
    return symmetrize(scaled * eig.vectors.transpose());
}

double asymmetry(const Matrix& a) {
    const double norm = a.norm();
    if (norm == 0.0) {
        return 0.0;
    }
    return (a - a.transpose()).norm() / norm;
}

}  // namespace fieldharm
