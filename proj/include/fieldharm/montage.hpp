#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fieldharm {

inline constexpr double kDefaultHeadRadius = 0.095;

struct Electrode {
    std::string name;
    Eigen::Vector3d position;  // meters, head frame: +x right, +y nasion, +z vertex
};

/// Ordered electrode set. Channel order here is the channel order of every
/// matrix built from the montage.
class Montage {
public:
    Montage(std::vector<Electrode> channels, double head_radius = kDefaultHeadRadius);

    /// Canonical positions for the given names (aliases accepted, names kept
    /// as given). Throws UnknownChannel for names outside the 10-10 table.
    static Montage from_names(const std::vector<std::string>& names, double head_radius = kDefaultHeadRadius);

    [[nodiscard]] const std::vector<Electrode>& channels() const noexcept { return channels_; }
    [[nodiscard]] std::size_t size() const noexcept { return channels_.size(); }
    [[nodiscard]] double head_radius() const noexcept { return head_radius_; }
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const;
    [[nodiscard]] const Eigen::Vector3d& position(std::string_view name) const;

    /// Keep the given channels, in the given order.
    [[nodiscard]] Montage subset(const std::vector<std::string>& names) const;

private:
    std::vector<Electrode> channels_;
    double head_radius_;
};

/// Upper-cased lookup key with old 10-20 names mapped to 10-10 ones
/// (T3->T7, T4->T8, T5->P7, T6->P8). Idempotent.
std::string channel_key(std::string_view name);

/// Canonical 10-10 spelling for a name ("t3" -> "T7", "FPZ" -> "Fpz");
/// returns the input unchanged when the name is not in the table.
std::string canonical_name(std::string_view name);

/// Analytic position on the sphere of the given radius, or nullopt.
std::optional<Eigen::Vector3d> standard_position(std::string_view name, double head_radius = kDefaultHeadRadius);

/// All names the analytic 10-10 table knows, in table order.
const std::vector<std::string>& standard_names();

/// [Fp1, Fp2, F7, F3, Fz, F4, F8, C3, Cz, C4, P3, Pz, P4, T3, T4, T5, T6]
Montage template_17();

/// v / ||v|| for every electrode. Throws ZeroPosition.
std::vector<Eigen::Vector3d> project_unit_sphere(const Montage& m);

struct ChannelMatch {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (index in a, index in b), in a's order
    std::vector<std::size_t> unmatched_source;
    std::vector<std::size_t> unmatched_target;
};

ChannelMatch match_channels(const Montage& a, const Montage& b);

nlohmann::json montage_to_json(const Montage& m);
Montage montage_from_json(const nlohmann::json& j);

Montage read_montage_json(const std::filesystem::path& path);
void write_montage_json(const Montage& m, const std::filesystem::path& path);

}  // namespace fieldharm
