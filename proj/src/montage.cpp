#include "fieldharm/montage.hpp"

#include "fieldharm/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

namespace fieldharm {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::Vector3d spherical(double polar_deg, double azimuth_deg) {
    const double th = polar_deg * kDeg;
    const double az = azimuth_deg * kDeg;
    return {std::sin(th) * std::cos(az), std::sin(th) * std::sin(az), std::cos(th)};
}

// Rotate u toward w (both unit, relative to `center`) along their common circle.
Eigen::Vector3d along_arc(const Eigen::Vector3d& from, const Eigen::Vector3d& to,
                          const Eigen::Vector3d& center, double fraction) {
    const Eigen::Vector3d a = from - center;
    const Eigen::Vector3d b = to - center;
    const Eigen::Vector3d axis = a.cross(b).normalized();
    const double angle = std::atan2(a.cross(b).norm(), a.dot(b)) * fraction;
    const Eigen::Vector3d rotated =
        a * std::cos(angle) + axis.cross(a) * std::sin(angle) + axis * axis.dot(a) * (1.0 - std::cos(angle));
    return center + rotated;
}

Eigen::Vector3d circumcenter(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    const Eigen::Vector3d ab = b - a;
    const Eigen::Vector3d ac = c - a;
    const Eigen::Vector3d n = ab.cross(ac);
    return a + (ac.squaredNorm() * n.cross(ab) + ab.squaredNorm() * ac.cross(n)) / (2.0 * n.squaredNorm());
}

struct Row {
    std::array<const char*, 9> names;  // left end .. midline .. right end
    double midline_polar;              // degrees from vertex
    double midline_azimuth;            // 90 front, -90 back
    double left_azimuth;               // equator azimuth of the left end
};

// 10-10 rows between the Fp and O rings. Ends sit on the equator
// (Fpz-T7-Oz circumference), midline points split the nasion-inion arc in
// 22.5 degree steps, and the eight intervals of each row are equal angles
// along the circle through its two ends and its midline point.
constexpr std::array<Row, 7> kRows{{
    {{"AF7", "AF5", "AF3", "AF1", "AFz", "AF2", "AF4", "AF6", "AF8"}, 67.5, 90.0, 126.0},
    {{"F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8"}, 45.0, 90.0, 144.0},
    {{"FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8"}, 22.5, 90.0, 162.0},
    {{"T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"}, 0.0, 90.0, 180.0},
    {{"TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8"}, 22.5, -90.0, 198.0},
    {{"P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8"}, 45.0, -90.0, 216.0},
    {{"PO7", "PO5", "PO3", "PO1", "POz", "PO2", "PO4", "PO6", "PO8"}, 67.5, -90.0, 234.0},
}};

struct Table {
    std::vector<std::string> names;
    std::map<std::string, Eigen::Vector3d> unit_positions;  // keyed by channel_key
    std::map<std::string, std::string> spelling;           // key -> canonical name
};

const Table& table() {
    static const Table t = [] {
        Table out;
        auto add = [&](const std::string& name, const Eigen::Vector3d& pos) {
            out.names.push_back(name);
            std::string key = name;
            std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::toupper(ch); });
            out.unit_positions.emplace(key, pos.normalized());
            out.spelling.emplace(key, name);
        };

        add("Fp1", spherical(90.0, 108.0));
        add("Fpz", spherical(90.0, 90.0));
        add("Fp2", spherical(90.0, 72.0));
        for (const Row& row : kRows) {
            const Eigen::Vector3d left = spherical(90.0, row.left_azimuth);
            const Eigen::Vector3d right = spherical(90.0, 180.0 - row.left_azimuth);
            const Eigen::Vector3d mid = spherical(row.midline_polar, row.midline_azimuth);
            const Eigen::Vector3d center = circumcenter(left, mid, right);
            for (int k = 0; k < 9; ++k) {
                Eigen::Vector3d p;
                if (k < 4) {
                    p = along_arc(left, mid, center, k / 4.0);
                } else if (k == 4) {
                    p = mid;
                } else {
                    p = along_arc(mid, right, center, (k - 4) / 4.0);
                }
                add(row.names[static_cast<std::size_t>(k)], p);
            }
        }
        add("O1", spherical(90.0, 252.0));
        add("Oz", spherical(90.0, 270.0));
        add("O2", spherical(90.0, 288.0));

        // Inferior ring, 22.5 degrees below the equator.
        add("Nz", spherical(112.5, 90.0));
        const std::array<std::pair<const char*, const char*>, 8> lower{{{"AF9", "AF10"},
                                                                        {"F9", "F10"},
                                                                        {"FT9", "FT10"},
                                                                        {"T9", "T10"},
                                                                        {"TP9", "TP10"},
                                                                        {"P9", "P10"},
                                                                        {"PO9", "PO10"},
                                                                        {"O9", "O10"}}};
        for (std::size_t k = 0; k < lower.size(); ++k) {
            const double az = 126.0 + 18.0 * static_cast<double>(k);
            add(lower[k].first, spherical(112.5, az));
            add(lower[k].second, spherical(112.5, 180.0 - az));
        }
        add("Iz", spherical(112.5, 270.0));
        return out;
    }();
    return t;
}

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::toupper(ch); });
    return out;
}

}  // namespace

std::string channel_key(std::string_view name) {
    static const std::map<std::string, std::string> aliases{{"T3", "T7"}, {"T4", "T8"}, {"T5", "P7"}, {"T6", "P8"}};
    std::string key = upper(name);
    if (auto it = aliases.find(key); it != aliases.end()) {
        return it->second;
    }
    return key;
}

std::string canonical_name(std::string_view name) {
    const auto& spelling = table().spelling;
    if (auto it = spelling.find(channel_key(name)); it != spelling.end()) {
        return it->second;
    }
    return std::string(name);
}

std::optional<Eigen::Vector3d> standard_position(std::string_view name, double head_radius) {
    const auto& positions = table().unit_positions;
    if (auto it = positions.find(channel_key(name)); it != positions.end()) {
        return Eigen::Vector3d(it->second * head_radius);
    }
    return std::nullopt;
}

const std::vector<std::string>& standard_names() { return table().names; }

Montage::Montage(std::vector<Electrode> channels, double head_radius)
    : channels_(std::move(channels)), head_radius_(head_radius) {
    if (!(head_radius_ > 0.0)) {
        throw Error(Errc::InvalidSpec, "head radius must be positive");
    }
    std::set<std::string> seen;
    for (const auto& e : channels_) {
        if (!seen.insert(channel_key(e.name)).second) {
            throw Error(Errc::InvalidSpec, "duplicate channel after alias normalization: " + e.name);
        }
        if (!e.position.allFinite() || e.position.norm() > 1.25 * head_radius_) {
            throw Error(Errc::InvalidSpec, "electrode " + e.name + " lies outside 1.25 head radii");
        }
    }
}

Montage Montage::from_names(const std::vector<std::string>& names, double head_radius) {
    std::vector<Electrode> channels;
    channels.reserve(names.size());
    for (const auto& n : names) {
        auto pos = standard_position(n, head_radius);
        if (!pos) {
            throw Error(Errc::UnknownChannel, "no canonical position for channel " + n);
        }
        channels.push_back({n, *pos});
    }
    return Montage(std::move(channels), head_radius);
}

std::vector<std::string> Montage::names() const {
    std::vector<std::string> out;
    out.reserve(channels_.size());
    for (const auto& e : channels_) {
        out.push_back(e.name);
    }
    return out;
}

std::optional<std::size_t> Montage::index_of(std::string_view name) const {
    const std::string key = channel_key(name);
    for (std::size_t i = 0; i < channels_.size(); ++i) {
        if (channel_key(channels_[i].name) == key) {
            return i;
        }
    }
    return std::nullopt;
}

const Eigen::Vector3d& Montage::position(std::string_view name) const {
    auto idx = index_of(name);
    if (!idx) {
        throw Error(Errc::UnknownChannel, "channel not in montage: " + std::string(name));
    }
    return channels_[*idx].position;
}

Montage Montage::subset(const std::vector<std::string>& names) const {
    std::vector<Electrode> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        auto idx = index_of(n);
        if (!idx) {
            throw Error(Errc::UnknownChannel, "channel not in montage: " + n);
        }
        out.push_back(channels_[*idx]);
    }
    return Montage(std::move(out), head_radius_);
}

Montage template_17() {
    return Montage::from_names(
        {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "C3", "Cz", "C4", "P3", "Pz", "P4", "T3", "T4", "T5", "T6"});
}

std::vector<Eigen::Vector3d> project_unit_sphere(const Montage& m) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(m.size());
    for (const auto& e : m.channels()) {
        const double norm = e.position.norm();
        if (norm == 0.0) {
            throw Error(Errc::ZeroPosition, "electrode " + e.name + " sits at the origin");
        }
        out.emplace_back(e.position / norm);
    }
    return out;
}

ChannelMatch match_channels(const Montage& a, const Montage& b) {
    ChannelMatch out;
    std::vector<bool> used(b.size(), false);
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto j = b.index_of(a.channels()[i].name);
        if (j) {
            out.pairs.emplace_back(i, *j);
            used[*j] = true;
        } else {
            out.unmatched_source.push_back(i);
        }
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (!used[j]) {
            out.unmatched_target.push_back(j);
        }
    }
    return out;
}

nlohmann::json montage_to_json(const Montage& m) {
    nlohmann::json j;
    j["head_radius_m"] = m.head_radius();
    j["channels"] = nlohmann::json::array();
    for (const auto& e : m.channels()) {
        j["channels"].push_back({{"name", e.name}, {"pos_m", {e.position.x(), e.position.y(), e.position.z()}}});
    }
    return j;
}

Montage montage_from_json(const nlohmann::json& j) {
    try {
        std::vector<Electrode> channels;
        for (const auto& c : j.at("channels")) {
            const auto pos = c.at("pos_m").get<std::vector<double>>();
            if (pos.size() != 3) {
                throw Error(Errc::InvalidSpec, "pos_m must have three entries");
            }
            channels.push_back({c.at("name").get<std::string>(), Eigen::Vector3d(pos[0], pos[1], pos[2])});
        }
        return Montage(std::move(channels), j.at("head_radius_m").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed montage: ") + e.what());
    }
}

Montage read_montage_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot open montage file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, "malformed montage file " + path.string() + ": " + e.what());
    }
    return montage_from_json(j);
}

void write_montage_json(const Montage& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::Io, "cannot write montage file " + path.string());
    }
    out << montage_to_json(m).dump(2) << '\n';
}

}  // namespace fieldharm
