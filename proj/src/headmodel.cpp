#include "fieldharm/headmodel.hpp"

#include "fieldharm/error.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace fieldharm {

namespace {

std::uint64_t fnv1a(std::uint64_t hash, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

// Radial and electrode-direction weights of the series:
//   V = a_r (q . r0_hat) + a_e (q . e_hat)
struct SeriesWeights {
    double radial = 0.0;
    double electrode = 0.0;
};

SeriesWeights series_weights(double f, double cos_gamma, int degree) {
    SeriesWeights w;
    // P_n by the three-term recurrence, P_n' by P'_{n+1} = P'_{n-1} + (2n+1) P_n
    double p_prev = 1.0;        // P_0
    double p_cur = cos_gamma;   // P_1
    double dp_prev = 0.0;       // P'_0
    double dp_cur = 1.0;        // P'_1
    double f_pow = 1.0;         // f^(n-1)
    for (int n = 1; n <= degree; ++n) {
        const double dn = n;
        const double scale = (2.0 * dn + 1.0) / dn * f_pow;
        w.radial += scale * (dn * p_cur - cos_gamma * dp_cur);
        w.electrode += scale * dp_cur;

        const double p_next = ((2.0 * dn + 1.0) * cos_gamma * p_cur - dn * p_prev) / (dn + 1.0);
        const double dp_next = dp_prev + (2.0 * dn + 1.0) * p_cur;
        p_prev = p_cur;
        p_cur = p_next;
        dp_prev = dp_cur;
        dp_cur = dp_next;
        f_pow *= f;
        if (f_pow == 0.0) {
            break;
        }
    }
    return w;
}

}  // namespace

SourceSpace::SourceSpace(std::vector<Dipole> dipoles, double radius_fraction, double head_radius)
    : dipoles_(std::move(dipoles)), radius_fraction_(radius_fraction), head_radius_(head_radius) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& d : dipoles_) {
        if (std::abs(d.orientation.norm() - 1.0) > 1e-12) {
            throw Error(Errc::InvalidSpec, "dipole orientation must be unit norm");
        }
        if (!(d.position.norm() < head_radius_)) {
            throw Error(Errc::DipoleOutsideSphere, "dipole lies on or outside the head sphere");
        }
        h = fnv1a(h, d.position.data(), 3 * sizeof(double));
        h = fnv1a(h, d.orientation.data(), 3 * sizeof(double));
    }
    fingerprint_ = h;
}

SourceSpace fibonacci_source_grid(std::size_t n, double radius_fraction, double head_radius) {
    if (n < 4) {
        throw Error(Errc::InvalidSpec, "source grid needs at least 4 locations");
    }
    if (!(radius_fraction > 0.0 && radius_fraction < 1.0)) {
        throw Error(Errc::InvalidSpec, "radius fraction must lie in (0, 1)");
    }
    const double radius = radius_fraction * head_radius;
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Dipole> dipoles;
    dipoles.reserve(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * static_cast<double>(i);
        Eigen::Vector3d unit(rho * std::cos(phi), rho * std::sin(phi), z);
        const Eigen::Vector3d pos = radius * unit.normalized();
        dipoles.push_back({pos, Eigen::Vector3d::UnitX()});
        dipoles.push_back({pos, Eigen::Vector3d::UnitY()});
        dipoles.push_back({pos, Eigen::Vector3d::UnitZ()});
    }
    return SourceSpace(std::move(dipoles), radius_fraction, head_radius);
}

double sphere_dipole_potential(const Eigen::Vector3d& dipole_position, const Eigen::Vector3d& moment,
                               const Eigen::Vector3d& electrode_dir, double sphere_radius, int degree,
                               double conductivity) {
    const double b = dipole_position.norm();
    const double norm = 1.0 / (4.0 * std::numbers::pi * conductivity * sphere_radius * sphere_radius);
    if (b == 0.0) {
        // only the n = 1 term survives at the center
        return norm * 3.0 * moment.dot(electrode_dir);
    }
    const Eigen::Vector3d r0_hat = dipole_position / b;
    const double cos_gamma = std::clamp(r0_hat.dot(electrode_dir), -1.0, 1.0);
    const SeriesWeights w = series_weights(b / sphere_radius, cos_gamma, degree);
    return norm * (w.radial * moment.dot(r0_hat) + w.electrode * moment.dot(electrode_dir));
}

Leadfield leadfield(const SourceSpace& src, const Montage& m, const ForwardOptions& options) {
    const double radius = m.head_radius();
    for (const auto& d : src.dipoles()) {
        if (!(d.position.norm() < radius)) {
            throw Error(Errc::DipoleOutsideSphere, "dipole is not inside the electrode sphere");
        }
    }
    const auto dirs = project_unit_sphere(m);
    Leadfield out;
    out.matrix.resize(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(src.size()));
    for (std::size_t j = 0; j < src.size(); ++j) {
        const Dipole& d = src.dipoles()[j];
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sphere_dipole_potential(
                d.position, d.orientation, dirs[i], radius, options.degree, options.conductivity);
        }
    }
    if (options.average_reference && out.matrix.rows() > 0) {
        const Eigen::RowVectorXd mean = out.matrix.colwise().mean();
        out.matrix.rowwise() -= mean;
    }
    if (!out.matrix.allFinite()) {
        throw Error(Errc::NonFinite, "leadfield has non-finite entries");
    }
    out.electrode_names = m.names();
    out.source_fingerprint = src.fingerprint();
    return out;
}

}  // namespace fieldharm
