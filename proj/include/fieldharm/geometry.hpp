#pragma once

#include "fieldharm/linalg.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fieldharm {

/// Symmetric positive definite matrix. Validated on construction and
/// immutable afterwards.
class SpdMatrix {
public:
    /// Throws NotSpd when asymmetric beyond 1e-12 relative Frobenius error or
    /// when the smallest eigenvalue is not strictly positive.
    explicit SpdMatrix(Matrix values);

    static SpdMatrix identity(Eigen::Index dim);

    [[nodiscard]] Eigen::Index dim() const noexcept { return values_.rows(); }
    [[nodiscard]] const Matrix& values() const noexcept { return values_; }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }

    [[nodiscard]] SymEig eig() const { return eigh(values_); }
    [[nodiscard]] Matrix sqrt() const;
    [[nodiscard]] Matrix inv_sqrt() const;
    [[nodiscard]] Matrix log() const;

private:
    struct Trusted {};
    SpdMatrix(Matrix values, Trusted) : values_(std::move(values)) {}
    friend SpdMatrix spd_from_spectrum(const SymEig&, const std::function<double(double)>&);

    Matrix values_;
};

/// Builds V f(L) V^T as an SPD matrix; fn must map positive reals to positive reals.
SpdMatrix spd_from_spectrum(const SymEig& eig, const std::function<double(double)>& fn);

/// Matrix exponential of a symmetric matrix (always SPD).
SpdMatrix spd_exp(const Matrix& sym);

/// Upper-triangle vectorization, row-major, diagonal weight 1 and off-diagonal
/// weight sqrt(2), so the Euclidean norm equals the Frobenius norm.
class TangentVector {
public:
    TangentVector(Vector values, Eigen::Index reference_dim);

    [[nodiscard]] const Vector& values() const noexcept { return values_; }
    [[nodiscard]] Eigen::Index reference_dim() const noexcept { return reference_dim_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return values_.size(); }

    static Eigen::Index length_for(Eigen::Index dim) { return dim * (dim + 1) / 2; }

private:
    Vector values_;
    Eigen::Index reference_dim_;
};

struct MeanEstimate {
    SpdMatrix mean;
    int iterations = 0;
    double final_gradient_norm = 0.0;
};

struct MeanOptions {
    double tol = 1e-10;
    int max_iter = 50;
};

/// Ledoit-Wolf shrinkage intensity of the uncentered sample covariance
/// X X^T / T, clamped to [0, 1]. `x` is channels x samples.
double ledoit_wolf_intensity(const Eigen::Ref<const Matrix>& x);

/// (1 - s) X X^T / T + s mu I with mu = tr(C) / P. `forced_intensity`
/// overrides the Ledoit-Wolf estimate.
SpdMatrix shrink_covariance(const Eigen::Ref<const Matrix>& x,
                            std::optional<double> forced_intensity = std::nullopt);

/// Affine-invariant distance sqrt(sum_k log^2 lambda_k(C1^-1 C2)).
double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b);

/// Karcher mean by the unit-step fixed point
///   M <- M^1/2 exp(mean_i log(M^-1/2 C_i M^-1/2)) M^1/2,
/// started at the arithmetic mean. Logs are summed in input order.
/// Throws NoConvergence once max_iter is exhausted.
MeanEstimate geometric_mean(std::span<const SpdMatrix> set, const MeanOptions& options = {});

/// Geodesic midpoint A^1/2 (A^-1/2 B A^-1/2)^1/2 A^1/2.
SpdMatrix geodesic_midpoint(const SpdMatrix& a, const SpdMatrix& b);

/// Upper(log(R^-1/2 C R^-1/2)).
TangentVector tangent_map(const SpdMatrix& c, const SpdMatrix& reference);

/// Inverse of tangent_map: R^1/2 exp(unvec(z)) R^1/2.
SpdMatrix tangent_unmap(const TangentVector& z, const SpdMatrix& reference);

/// Vectorize a symmetric matrix with the sqrt(2) off-diagonal weighting.
Vector upper_weighted(const Matrix& sym);
Matrix unvec_upper_weighted(const Vector& z, Eigen::Index dim);

/// C_i -> M^-1/2 C_i M^-1/2 for every element.
std::vector<SpdMatrix> recenter(std::span<const SpdMatrix> set, const SpdMatrix& mean);

/// Congruence W^T C W (SPD when W is invertible).
SpdMatrix congruence(const SpdMatrix& c, const Matrix& w);

}  // namespace fieldharm
