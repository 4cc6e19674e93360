#include "doctest.h"

#include "fieldharm/error.hpp"
#include "fieldharm/evaluate.hpp"

#include <filesystem>
#include <random>

using namespace fieldharm;

namespace {

// Brute-force two-sided signed-rank p-value over all 2^n sign patterns.
double enumerate_p(const std::vector<double>& d) {
    const std::size_t n = d.size();
    std::vector<double> absd(n);
    for (std::size_t i = 0; i < n; ++i) {
        absd[i] = std::abs(d[i]);
    }
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            less += absd[j] < absd[i] ? 1.0 : 0.0;
            equal += absd[j] == absd[i] ? 1.0 : 0.0;
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        observed += d[i] > 0 ? rank[i] : 0.0;
    }
    double lower = 0.0, upper = 0.0;
    const std::size_t patterns = std::size_t{1} << n;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w += (mask >> i) & 1U ? rank[i] : 0.0;
        }
        lower += w <= observed + 1e-9 ? 1.0 : 0.0;
        upper += w >= observed - 1e-9 ? 1.0 : 0.0;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / static_cast<double>(patterns));
}

SimSpec easy_spec(double erd) {
    SimSpec spec;
    spec.seed = 11;
    spec.erd_factor = erd;
    SimDataset d;
    d.montage = {"FC3", "FC4", "C3", "Cz", "C4", "CP3", "CP4", "Pz"};
    d.n_subjects = 2;
    d.n_sessions = 1;
    d.n_runs = 2;
    d.trials_per_run = 16;
    d.sfreq = 128.0;
    d.trial_sec = 2.0;
    d.subject_shift_std = 0.05;
    d.name = "easy1";
    SimDataset e = d;
    e.name = "easy2";
    spec.datasets = {d, e};
    return spec;
}

std::filesystem::path generated(const SimSpec& spec, const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("fieldharm_eval_" + tag);
    std::filesystem::remove_all(dir);
    generate(spec, dir);
    return dir;
}

}  // namespace

TEST_CASE("wilcoxon: six positive differences") {
    const std::vector<double> a{0.9, 0.8, 0.85, 0.7, 0.95, 0.75};
    const std::vector<double> b{0.5, 0.6, 0.55, 0.65, 0.5, 0.7};
    const WilcoxonResult r = wilcoxon_signed_rank(a, b);
    CHECK(r.p_value == 0.03125);
    CHECK(r.statistic == 21.0);
    CHECK(r.exact);
    CHECK(r.stars == "*");
}

TEST_CASE("wilcoxon exact p matches brute-force enumeration") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> grid(-4, 4);
    for (std::size_t n = 5; n <= 12; ++n) {
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> a(n), b(n, 0.0);
            for (auto& v : a) {
                // half of the repetitions use a coarse grid to create ties
                v = rep % 2 == 0 ? g(rng) : (grid(rng) == 0 ? 1.0 : grid(rng) * 0.25);
            }
            bool zero = false;
            for (double v : a) {
                zero = zero || v == 0.0;
            }
            if (zero) {
                continue;
            }
            const WilcoxonResult r = wilcoxon_signed_rank(a, b);
            CHECK(std::abs(r.p_value - enumerate_p(a)) <= 1e-12);
        }
    }
}

TEST_CASE("wilcoxon zero pairs, normal approximation and stars") {
    const std::vector<double> same{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    try {
        wilcoxon_signed_rank(same, same);
        FAIL("expected TooFewPairs");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::TooFewPairs);
    }

    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.3, 1.0);
    std::vector<double> a(40), b(40, 0.0);
    for (auto& v : a) {
        v = g(rng);
    }
    const WilcoxonResult approx = wilcoxon_signed_rank(a, b);
    CHECK_FALSE(approx.exact);
    CHECK(approx.p_value > 0.0);
    CHECK(approx.p_value < 1.0);

    CHECK(significance_stars(0.2) == "ns");
    CHECK(significance_stars(0.05) == "*");
    CHECK(significance_stars(0.01) == "**");
    CHECK(significance_stars(0.001) == "***");
    CHECK(significance_stars(1e-4) == "****");
}

TEST_CASE("config parsing, defaults and hash") {
    RunConfig c;
    CHECK(c.band_low == 8.0);
    CHECK(c.band_high == 32.0);
    CHECK(c.resample_hz == 128.0);
    CHECK(c.ssi_reg == 1e-7);
    CHECK(c.fi_reg == 1e-3);
    CHECK(c.C == 1.0);
    CHECK(c.template_montage == "builtin-17");

    const RunConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));

    RunConfig moved = c;
    moved.data_root = "/elsewhere";
    CHECK(config_hash(moved) == config_hash(c));
    moved.fi_reg = 1e-2;
    CHECK(config_hash(moved) != config_hash(c));

    try {
        config_from_json({{"methd", "fi"}});
        FAIL("expected Config");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::Config);
    }
    CHECK_THROWS_AS(config_from_json({{"method", "pca"}}), Error);
    CHECK_THROWS_AS(config_from_json({{"align", "sideways"}}), Error);
    CHECK(config_from_json({{"method", "dt"}, {"align", "none"}}).method == Method::Dt);
}

TEST_CASE("lodo on two matching datasets with a strong class effect") {
    const auto dir = generated(easy_spec(0.2), "easy");
    const RunConfig cfg;
    const auto data = load_datasets(dir, cfg);
    REQUIRE(data.size() == 2);
    CHECK(data[0].subjects[0].epochs.sfreq == 128.0);
    CHECK(data[0].subjects[0].epochs.labels.empty());
    CHECK(data[0].subjects[0].origins.size() == 32);

    const RunResult r = lodo(data, "easy2", cfg);
    REQUIRE(r.subjects.size() == 2);
    for (const auto& s : r.subjects) {
        CHECK(s.accuracy >= 0.9);
        CHECK(s.n_epochs == 32);
    }
    CHECK(r.feature_channels == 17);
    CHECK(r.train_datasets == std::vector<std::string>{"easy1"});

    const nlohmann::json j = result_to_json(r);
    CHECK(j.at("target") == "easy2");
    CHECK(j.at("timing").contains("harmonize_s"));
    CHECK(result_from_json(j).subjects[1].accuracy == r.subjects[1].accuracy);

    RunConfig common = cfg;
    common.method = Method::Common;
    const RunResult rc = lodo(data, "easy2", common);
    CHECK(rc.feature_channels == 8);
    CHECK(rc.retained_channels.size() == 8);

    RunConfig cal = cfg;
    cal.method = Method::Calibration;
    for (const auto& s : data[0].subjects) {
        CHECK(calibration(s, cal) >= 0.9);
    }

    // learning curve: one included dataset equals the lodo pool
    const auto curve = learning_curve(data, "easy2", {"easy1"}, cfg);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].target_channels_seen == 8);
    CHECK(curve[0].result.subjects[0].accuracy == r.subjects[0].accuracy);
    for (double d : curve[0].diff_vs_reference) {
        CHECK(d == 0.0);
    }

    // target labels are only used for scoring
    for (const auto& stem : data[1].subjects[0].stems) {
        EpochSet run = read_epoch_set(stem, LabelAccess::Load);
        for (auto& l : run.labels) {
            l = 1 - l;
        }
        write_epoch_set(run, stem);
    }
    const RunResult flipped = lodo(data, "easy2", cfg);
    CHECK(flipped.subjects[0].predicted == r.subjects[0].predicted);
    CHECK(flipped.subjects[0].accuracy == doctest::Approx(1.0 - r.subjects[0].accuracy));
    std::filesystem::remove_all(dir);
}

TEST_CASE("null spec sits at chance and common keeps one channel") {
    SimSpec spec = bench6_spec(1.0);
    // keep the unit test short: two low-density datasets
    spec.datasets = {spec.datasets[1], spec.datasets[5]};
    const auto dir = generated(spec, "null");
    RunConfig cfg;
    cfg.method = Method::Common;
    const auto data = load_datasets(dir, cfg);
    const RunResult r = lodo(data, "ds6", cfg);
    CHECK(r.feature_channels == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("train pool order does not change the result") {
    SimSpec spec = easy_spec(0.4);
    SimDataset third = spec.datasets[0];
    third.name = "easy3";
    third.montage = {"C3", "Cz", "C4", "Fz", "Oz"};
    spec.datasets.push_back(third);
    const auto dir = generated(spec, "order");
    RunConfig cfg;
    cfg.method = Method::Dt;
    const auto data = load_datasets(dir, cfg);
    const std::vector<const Dataset*> forward{&data[0], &data[1]};
    const std::vector<const Dataset*> backward{&data[1], &data[0]};
    const RunResult a = evaluate_transfer(forward, data[2], cfg);
    const RunResult b = evaluate_transfer(backward, data[2], cfg);
    CHECK(result_to_json(a)["subjects"] == result_to_json(b)["subjects"]);
    CHECK(a.feature_channels == 10);
    std::filesystem::remove_all(dir);
}

TEST_CASE("calibration needs four epochs per class in each half") {
    SimSpec spec = easy_spec(0.5);
    spec.datasets[0].n_runs = 1;
    spec.datasets[0].trials_per_run = 12;
    spec.datasets.resize(1);
    const auto dir = generated(spec, "few");
    RunConfig cfg;
    cfg.method = Method::Calibration;
    const auto data = load_datasets(dir, cfg);
    bool thrown = false;
    for (const auto& s : data[0].subjects) {
        try {
            calibration(s, cfg);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::TooFewEpochs);
            thrown = true;
        }
    }
    // 12 trials leave 6 per half, so at least one half lacks 4 of some class
    CHECK(thrown);
    std::filesystem::remove_all(dir);
}
