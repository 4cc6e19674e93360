#include "doctest.h"

#include "fieldharm/error.hpp"
#include "fieldharm/montage.hpp"

#include <cmath>
#include <filesystem>
#include <set>

using namespace fieldharm;

TEST_CASE("analytic 10-10 table") {
    const auto& names = standard_names();
    CHECK(names.size() == 87);
    std::set<std::string> keys;
    for (const auto& n : names) {
        keys.insert(channel_key(n));
        const auto p = standard_position(n);
        REQUIRE(p.has_value());
        CHECK(p->norm() == doctest::Approx(kDefaultHeadRadius).epsilon(1e-12));
    }
    CHECK(keys.size() == names.size());

    // every right-hemisphere electrode mirrors its left partner through x = 0
    const std::vector<std::pair<std::string, std::string>> mirrors{
        {"Fp1", "Fp2"}, {"F7", "F8"}, {"FC5", "FC6"}, {"C1", "C2"}, {"CP3", "CP4"},
        {"P9", "P10"},  {"PO7", "PO8"}, {"O1", "O2"}, {"AF9", "AF10"}};
    for (const auto& [l, r] : mirrors) {
        Eigen::Vector3d pl = *standard_position(l);
        const Eigen::Vector3d pr = *standard_position(r);
        pl.x() = -pl.x();
        CHECK((pl - pr).norm() <= 1e-9);
    }
    CHECK(standard_position("Fz")->y() > 0.0);
    CHECK(standard_position("Pz")->y() < 0.0);
    CHECK(standard_position("C3")->x() < 0.0);
}

TEST_CASE("template_17") {
    const Montage t = template_17();
    CHECK(t.size() == 17);
    const Eigen::Vector3d cz = t.position("Cz");
    CHECK((cz - Eigen::Vector3d(0, 0, kDefaultHeadRadius)).norm() <= 1e-9);
    Eigen::Vector3d c3 = t.position("C3");
    c3.x() = -c3.x();
    CHECK((c3 - t.position("C4")).norm() <= 1e-9);
    CHECK(t.channels()[13].name == "T3");
    CHECK((t.position("T3") - *standard_position("T7")).norm() == 0.0);
}

TEST_CASE("alias normalization") {
    CHECK(channel_key("T3") == "T7");
    CHECK(channel_key("t6") == "P8");
    CHECK(channel_key(channel_key("T5")) == channel_key("T5"));
    for (const auto& n : standard_names()) {
        CHECK(channel_key(channel_key(n)) == channel_key(n));
    }
    CHECK(canonical_name("fpz") == "Fpz");
    CHECK(canonical_name("T4") == "T8");
    CHECK(canonical_name("XYZ") == "XYZ");
}

TEST_CASE("montage invariants") {
    CHECK_THROWS_AS(Montage::from_names({"T3", "T7"}), Error);
    CHECK_THROWS_AS(Montage({{"A", Eigen::Vector3d(0, 0, 0.2)}}), Error);
    try {
        (void)Montage::from_names({"Cz", "NotAChannel"});
        FAIL("unknown channel accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownChannel);
    }
}

TEST_CASE("project_unit_sphere") {
    const Montage m({{"A", Eigen::Vector3d(0, 0, 0.095)}, {"B", Eigen::Vector3d(0.03, -0.02, 0.05)}});
    const auto u = project_unit_sphere(m);
    CHECK((u[0] - Eigen::Vector3d(0, 0, 1)).norm() <= 1e-12);
    CHECK(u[1].norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(u[1].cross(m.channels()[1].position).norm() <= 1e-15);

    const Montage t = template_17();
    const auto tu = project_unit_sphere(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double before = t.channels()[i].position.dot(t.channels()[j].position) /
                                  (t.head_radius() * t.head_radius());
            CHECK(tu[i].dot(tu[j]) == doctest::Approx(before).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(project_unit_sphere(Montage({{"Z", Eigen::Vector3d::Zero()}})), Error);
}

TEST_CASE("match_channels") {
    const Montage t = template_17();
    const ChannelMatch self = match_channels(t, t);
    REQUIRE(self.pairs.size() == 17);
    for (std::size_t i = 0; i < 17; ++i) {
        CHECK(self.pairs[i] == std::make_pair(i, i));
    }
    CHECK(self.unmatched_source.empty());

    const Montage a = Montage::from_names({"C3", "Cz", "C4"});
    const Montage b = Montage::from_names({"Fp1", "Cz", "O2"});
    const ChannelMatch ab = match_channels(a, b);
    REQUIRE(ab.pairs.size() == 1);
    CHECK(ab.pairs[0] == std::make_pair(std::size_t{1}, std::size_t{1}));
    CHECK(ab.unmatched_source == std::vector<std::size_t>{0, 2});

    const Montage modern = Montage::from_names({"T7", "P8"});
    const ChannelMatch alias = match_channels(modern, t);
    REQUIRE(alias.pairs.size() == 2);
    CHECK(alias.pairs[0] == std::make_pair(std::size_t{0}, std::size_t{13}));
    CHECK(alias.pairs[1] == std::make_pair(std::size_t{1}, std::size_t{16}));

    // symmetric up to swapping the pair components
    const ChannelMatch ba = match_channels(t, modern);
    std::set<std::pair<std::size_t, std::size_t>> forward(alias.pairs.begin(), alias.pairs.end());
    std::set<std::pair<std::size_t, std::size_t>> backward;
    for (auto [i, j] : ba.pairs) {
        backward.emplace(j, i);
    }
    CHECK(forward == backward);
}

TEST_CASE("montage json round trip") {
    const auto path = std::filesystem::temp_directory_path() / "fieldharm_montage_test.json";
    write_montage_json(template_17(), path);
    const Montage back = read_montage_json(path);
    CHECK(back.names() == template_17().names());
    CHECK((back.position("Cz") - template_17().position("Cz")).norm() == 0.0);
    std::filesystem::remove(path);
}
