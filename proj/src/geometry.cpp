#include "fieldharm/geometry.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fieldharm {

namespace {

constexpr double kSymmetryTol = 1e-12;

bool is_positive_definite(const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    return (llt.matrixLLT().diagonal().array() > 0.0).all();
}

}  // namespace

SpdMatrix::SpdMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() == 0 || values_.rows() != values_.cols()) {
        throw Error(Errc::NotSpd, "SPD matrix must be square and non-empty");
    }
    if (!values_.allFinite()) {
        throw Error(Errc::NonFinite, "SPD matrix has non-finite entries");
    }
    if (asymmetry(values_) > kSymmetryTol) {
        throw Error(Errc::NotSpd, "matrix is not symmetric");
    }
    if (!is_positive_definite(values_)) {
        throw Error(Errc::NotSpd, "matrix is not positive definite");
    }
}

SpdMatrix SpdMatrix::identity(Eigen::Index dim) { return SpdMatrix(Matrix::Identity(dim, dim), Trusted{}); }

Matrix SpdMatrix::sqrt() const {
    return apply_spectral(eig(), [](double l) { return std::sqrt(l); });
}

Matrix SpdMatrix::inv_sqrt() const {
    return apply_spectral(eig(), [](double l) { return 1.0 / std::sqrt(l); });
}

Matrix SpdMatrix::log() const {
    return apply_spectral(eig(), [](double l) { return std::log(l); });
}

SpdMatrix spd_from_spectrum(const SymEig& eig, const std::function<double(double)>& fn) {
    Vector f = eig.values.unaryExpr(fn);
    if (!(f.array() > 0.0).all() || !f.allFinite()) {
        throw Error(Errc::NotSpd, "spectral map produced a non-positive eigenvalue");
    }
    Matrix scaled = eig.vectors * f.asDiagonal();
    return SpdMatrix(symmetrize(scaled * eig.vectors.transpose()), SpdMatrix::Trusted{});
}

SpdMatrix spd_exp(const Matrix& sym) {
    return spd_from_spectrum(eigh(sym), [](double l) { return std::exp(l); });
}

TangentVector::TangentVector(Vector values, Eigen::Index reference_dim)
    : values_(std::move(values)), reference_dim_(reference_dim) {
    if (values_.size() != length_for(reference_dim_)) {
        throw Error(Errc::DimMismatch, "tangent vector length must be P(P+1)/2");
    }
}

double ledoit_wolf_intensity(const Eigen::Ref<const Matrix>& x) {
    const auto p = static_cast<double>(x.rows());
    const auto n = static_cast<double>(x.cols());

    const Matrix scatter = x * x.transpose();
    const Vector variances = scatter.diagonal() / n;
    const double mu = variances.sum() / p;

    // sum_t (sum_i x_it^2)^2 = sum of all entries of (X.^2)(X.^2)^T
    const Eigen::ArrayXd sample_energy = x.array().square().colwise().sum();
    const double beta_raw = sample_energy.square().sum();
    const double delta_raw = scatter.squaredNorm() / (n * n);

    double beta = (beta_raw / n - delta_raw) / (p * n);
    const double delta = (delta_raw - 2.0 * mu * variances.sum() + p * mu * mu) / p;
    beta = std::min(beta, delta);
    if (beta <= 0.0 || delta <= 0.0) {
        return 0.0;
    }
    return std::clamp(beta / delta, 0.0, 1.0);
}

SpdMatrix shrink_covariance(const Eigen::Ref<const Matrix>& x, std::optional<double> forced_intensity) {
    if (x.cols() < 2) {
        throw Error(Errc::DegenerateInput, "covariance needs at least two samples");
    }
    if (!x.allFinite()) {
        throw Error(Errc::NonFinite, "epoch contains NaN or infinite samples");
    }
    const auto p = x.rows();
    const double s = forced_intensity ? std::clamp(*forced_intensity, 0.0, 1.0) : ledoit_wolf_intensity(x);
    Matrix c = (x * x.transpose()) / static_cast<double>(x.cols());
    const double mu = c.trace() / static_cast<double>(p);
    Matrix shrunk = (1.0 - s) * c;
    shrunk.diagonal().array() += s * mu;
    return SpdMatrix(symmetrize(shrunk));
}

double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b) {
    if (a.dim() != b.dim()) {
        throw Error(Errc::DimMismatch, "riemannian_distance on matrices of different size");
    }
    // eig(A^-1 B) = eig(L^-1 B L^-T) with A = L L^T
    Eigen::LLT<Matrix> llt(a.values());
    Matrix half = llt.matrixL().solve(b.values());
    Matrix whitened = llt.matrixL().solve(half.transpose());
    const SymEig e = eigh(whitened);
    return std::sqrt(e.values.array().log().square().sum());
}

MeanEstimate geometric_mean(std::span<const SpdMatrix> set, const MeanOptions& options) {
    if (set.empty()) {
        throw Error(Errc::DegenerateInput, "geometric mean of an empty set");
    }
    const Eigen::Index dim = set.front().dim();
    Matrix arithmetic = Matrix::Zero(dim, dim);
    for (const auto& c : set) {
        if (c.dim() != dim) {
            throw Error(Errc::DimMismatch, "geometric mean over matrices of different size");
        }
        arithmetic += c.values();
    }
    arithmetic /= static_cast<double>(set.size());

    SpdMatrix current(symmetrize(arithmetic));
    std::vector<Matrix> logs(set.size());
    double grad_norm = 0.0;
    for (int iter = 1; iter <= options.max_iter; ++iter) {
        const SymEig e = current.eig();
        const Matrix root = apply_spectral(e, [](double l) { return std::sqrt(l); });
        const Matrix inv_root = apply_spectral(e, [](double l) { return 1.0 / std::sqrt(l); });

        parallel_for(set.size(), [&](std::size_t i) {
            const Matrix w = symmetrize(inv_root * set[i].values() * inv_root);
            logs[i] = apply_spectral(eigh(w), [](double l) { return std::log(l); });
        });
        Matrix step = Matrix::Zero(dim, dim);
        for (const auto& l : logs) {
            step += l;
        }
        step /= static_cast<double>(set.size());
        grad_norm = step.norm();
        if (grad_norm <= options.tol) {
            return MeanEstimate{std::move(current), iter, grad_norm};
        }
        const SpdMatrix moved = spd_exp(step);
        current = SpdMatrix(symmetrize(root * moved.values() * root));
    }
    std::ostringstream msg;
    msg << "geometric mean did not reach tol " << options.tol << " in " << options.max_iter
        << " iterations (final gradient norm " << grad_norm << ")";
    throw Error(Errc::NoConvergence, msg.str());
}

SpdMatrix geodesic_midpoint(const SpdMatrix& a, const SpdMatrix& b) {
    if (a.dim() != b.dim()) {
        throw Error(Errc::DimMismatch, "geodesic midpoint on matrices of different size");
    }
    const SymEig e = a.eig();
    const Matrix root = apply_spectral(e, [](double l) { return std::sqrt(l); });
    const Matrix inv_root = apply_spectral(e, [](double l) { return 1.0 / std::sqrt(l); });
    const SpdMatrix inner = spd_from_spectrum(eigh(symmetrize(inv_root * b.values() * inv_root)),
                                              [](double l) { return std::sqrt(l); });
    return SpdMatrix(symmetrize(root * inner.values() * root));
}

Vector upper_weighted(const Matrix& sym) {
    const Eigen::Index n = sym.rows();
    Vector z(TangentVector::length_for(n));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        z[k++] = sym(i, i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            z[k++] = M_SQRT2 * sym(i, j);
        }
    }
    return z;
}

Matrix unvec_upper_weighted(const Vector& z, Eigen::Index dim) {
    if (z.size() != TangentVector::length_for(dim)) {
        throw Error(Errc::DimMismatch, "vector length does not match P(P+1)/2");
    }
    Matrix m(dim, dim);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < dim; ++i) {
        m(i, i) = z[k++];
        for (Eigen::Index j = i + 1; j < dim; ++j) {
            m(i, j) = z[k++] / M_SQRT2;
            m(j, i) = m(i, j);
        }
    }
    return m;
}

TangentVector tangent_map(const SpdMatrix& c, const SpdMatrix& reference) {
    if (c.dim() != reference.dim()) {
        throw Error(Errc::DimMismatch, "tangent_map reference has a different size");
    }
    const Matrix inv_root = reference.inv_sqrt();
    const Matrix w = symmetrize(inv_root * c.values() * inv_root);
    const Matrix l = apply_spectral(eigh(w), [](double v) { return std::log(v); });
    return TangentVector(upper_weighted(l), c.dim());
}

SpdMatrix tangent_unmap(const TangentVector& z, const SpdMatrix& reference) {
    if (z.reference_dim() != reference.dim()) {
        throw Error(Errc::DimMismatch, "tangent vector and reference differ in size");
    }
    const Matrix root = reference.sqrt();
    const SpdMatrix e = spd_exp(unvec_upper_weighted(z.values(), z.reference_dim()));
    return SpdMatrix(symmetrize(root * e.values() * root));
}

std::vector<SpdMatrix> recenter(std::span<const SpdMatrix> set, const SpdMatrix& mean) {
    const Matrix inv_root = mean.inv_sqrt();
    std::vector<SpdMatrix> out;
    out.reserve(set.size());
    for (const auto& c : set) {
        if (c.dim() != mean.dim()) {
            throw Error(Errc::DimMismatch, "recenter mean has a different size");
        }
        out.emplace_back(symmetrize(inv_root * c.values() * inv_root));
    }
    return out;
}

SpdMatrix congruence(const SpdMatrix& c, const Matrix& w) {
    if (w.rows() != c.dim()) {
        throw Error(Errc::DimMismatch, "congruence transform has the wrong number of rows");
    }
    return SpdMatrix(symmetrize(w.transpose() * c.values() * w));
}

}  // namespace fieldharm
