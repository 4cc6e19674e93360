#pragma once

#include "fieldharm/linalg.hpp"
#include "fieldharm/montage.hpp"

#include <cstdint>
#include <vector>

namespace fieldharm {

inline constexpr double kScalpConductivity = 0.33;  // S/m
inline constexpr int kLeadfieldDegree = 60;

struct Dipole {
    Eigen::Vector3d position;     // meters
    Eigen::Vector3d orientation;  // unit
};

/// Current dipoles strictly inside the head sphere; one leadfield column each.
class SourceSpace {
public:
    SourceSpace(std::vector<Dipole> dipoles, double radius_fraction, double head_radius = kDefaultHeadRadius);

    [[nodiscard]] const std::vector<Dipole>& dipoles() const noexcept { return dipoles_; }
    [[nodiscard]] std::size_t size() const noexcept { return dipoles_.size(); }
    [[nodiscard]] double radius_fraction() const noexcept { return radius_fraction_; }
    [[nodiscard]] double head_radius() const noexcept { return head_radius_; }
    /// Hash of the dipole positions and orientations; equal spaces hash equal.
    [[nodiscard]] std::uint64_t fingerprint() const noexcept { return fingerprint_; }

private:
    std::vector<Dipole> dipoles_;
    double radius_fraction_;
    double head_radius_;
    std::uint64_t fingerprint_;
};

/// n quasi-uniform locations (golden-angle spiral) on the sphere of radius
/// radius_fraction * head_radius, each carrying x, y and z unit dipoles.
SourceSpace fibonacci_source_grid(std::size_t n, double radius_fraction, double head_radius = kDefaultHeadRadius);

struct Leadfield {
    Matrix matrix;  // electrodes x dipoles, volts per A*m, columns sum to zero
    std::vector<std::string> electrode_names;
    std::uint64_t source_fingerprint = 0;
};

struct ForwardOptions {
    int degree = kLeadfieldDegree;
    double conductivity = kScalpConductivity;
    bool average_reference = true;
};

/// Surface potential of a current dipole in a homogeneous insulated sphere,
/// Legendre series truncated at `degree`. `electrode_dir` is a unit vector.
double sphere_dipole_potential(const Eigen::Vector3d& dipole_position, const Eigen::Vector3d& moment,
                               const Eigen::Vector3d& electrode_dir, double sphere_radius, int degree,
                               double conductivity = kScalpConductivity);

/// Forward matrix for the montage electrodes projected onto the head sphere.
/// Throws DipoleOutsideSphere when a dipole is not strictly inside it.
Leadfield leadfield(const SourceSpace& src, const Montage& m, const ForwardOptions& options = {});

}  // namespace fieldharm
