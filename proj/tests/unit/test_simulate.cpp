#include "doctest.h"

#include "fieldharm/error.hpp"
#include "fieldharm/harmonize.hpp"
#include "fieldharm/parallel.hpp"
#include "fieldharm/rng.hpp"
#include "fieldharm/simulate.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace fieldharm;

namespace {

SimSpec small_spec(double erd = 0.5) {
    SimSpec spec;
    spec.seed = 7;
    spec.erd_factor = erd;
    SimDataset a;
    a.name = "alpha";
    a.montage = {"C3", "Cz", "C4", "Pz", "Fz"};
    a.n_subjects = 2;
    a.n_sessions = 2;
    a.trials_per_run = 4;
    a.sfreq = 128.0;
    a.trial_sec = 1.0;
    SimDataset b = a;
    b.name = "beta";
    b.montage = {"C3", "C4", "T7", "T8"};
    b.n_subjects = 1;
    b.n_sessions = 1;
    b.n_runs = 2;
    b.sfreq = 160.0;
    spec.datasets = {a, b};
    return spec;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fieldharm_sim_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("splitmix64 reference value and stream independence") {
    std::uint64_t state = 0;
    CHECK(splitmix64(state) == 0xe220a8397b1dcdafULL);

    Rng a = Rng::derive(1, {0, 1});
    Rng b = Rng::derive(1, {1, 0});
    Rng c = Rng::derive(1, {0, 1});
    const auto va = a.next();
    CHECK(va != b.next());
    CHECK(va == c.next());
}

TEST_CASE("normal draws have unit variance") {
    Rng rng(42);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.below(7) < 7);
    }
}

TEST_CASE("bench6 montages: sizes, union and intersection") {
    const SimSpec spec = bench6_spec();
    spec.validate();
    std::vector<std::size_t> sizes;
    std::vector<Montage> montages;
    std::vector<std::vector<std::string>> lists;
    for (const auto& d : spec.datasets) {
        sizes.push_back(d.montage.size());
        montages.push_back(Montage::from_names(d.montage));
        lists.push_back(d.montage);
    }
    CHECK(sizes == std::vector<std::size_t>{22, 3, 64, 30, 60, 14});
    const Montage shared = common_channels(montages, template_17().names());
    REQUIRE(shared.size() == 1);
    CHECK(shared.names()[0] == "Cz");
    CHECK(union_channels(lists, template_17().names()).size() == 84);
}

TEST_CASE("spec validation") {
    SimSpec spec = small_spec();
    spec.erd_factor = 0.0;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = small_spec();
    spec.datasets[0].trials_per_run = 3;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = small_spec();
    spec.datasets[1].montage.push_back("XYZ");
    try {
        spec.validate();
        FAIL("expected InvalidSpec");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidSpec);
    }
    spec = small_spec(1.0);
    CHECK_NOTHROW(spec.validate());

    const SimSpec back = sim_spec_from_json(sim_spec_to_json(bench6_spec()));
    CHECK(sim_spec_to_json(back) == sim_spec_to_json(bench6_spec()));
}

TEST_CASE("labels are balanced per run") {
    const SimSpec spec = bench6_spec();
    const auto labels = run_labels(spec, 2, 0, 0, 0);
    CHECK(labels.size() == 48);
    CHECK(std::count(labels.begin(), labels.end(), 1) == 24);
    CHECK(labels == run_labels(spec, 2, 0, 0, 0));
    CHECK(labels != run_labels(spec, 2, 1, 0, 0));
}

TEST_CASE("trial data is the leadfield mixture plus noise") {
    const SimSpec spec = small_spec();
    const SubjectModel model = subject_model(spec, 0, 1);
    const TrialComponents t = simulate_trial(spec, model, 0, 1, 1, 0, 3, 1);
    CHECK(t.data.rows() == 5);
    CHECK(t.data.cols() == 128);
    CHECK(t.background_sources.rows() == spec.n_background);

    const Matrix brain = model.motor.matrix * t.motor_sources + model.background.matrix * t.background_sources;
    const Matrix expected = spec.datasets[0].gain * (model.shift * brain) + t.sensor_noise;
    CHECK((expected - t.data).norm() <= 1e-12 * t.data.norm());

    // an independent re-run reproduces every component
    const SubjectModel again = subject_model(spec, 0, 1);
    const TrialComponents u = simulate_trial(spec, again, 0, 1, 1, 0, 3, 1);
    CHECK(u.data == t.data);
    CHECK(u.motor_sources == t.motor_sources);
}

TEST_CASE("class effect is contralateral") {
    SimSpec spec = small_spec();
    spec.datasets[0].subject_shift_std = 0.0;
    const SubjectModel model = subject_model(spec, 0, 0);
    const auto c3 = static_cast<Eigen::Index>(*model.montage.index_of("C3"));
    const auto c4 = static_cast<Eigen::Index>(*model.montage.index_of("C4"));
    double left_c3 = 0.0, right_c3 = 0.0, left_c4 = 0.0, right_c4 = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix l = simulate_trial(spec, model, 0, 0, 0, 0, trial, 0).data;
        const Matrix r = simulate_trial(spec, model, 0, 0, 0, 0, trial, 1).data;
        left_c3 += l.row(c3).squaredNorm();
        right_c3 += r.row(c3).squaredNorm();
        left_c4 += l.row(c4).squaredNorm();
        right_c4 += r.row(c4).squaredNorm();
    }
    CHECK(right_c3 < left_c3);
    CHECK(left_c4 < right_c4);
}

TEST_CASE("no class effect when erd_factor is one") {
    SimSpec spec = small_spec(1.0);
    const SubjectModel model = subject_model(spec, 0, 0);
    const auto c3 = static_cast<Eigen::Index>(*model.montage.index_of("C3"));
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix l = simulate_trial(spec, model, 0, 0, 0, 0, trial, 0).data;
        const Matrix r = simulate_trial(spec, model, 0, 0, 0, 0, trial, 1).data;
        // the label only enters through the attenuation, so the draws coincide
        CHECK(l.row(c3) == r.row(c3));
    }
}

TEST_CASE("generate writes a reproducible directory tree") {
    const SimSpec spec = small_spec();
    const auto a = scratch("a");
    const auto b = scratch("b");
    set_thread_count(1);
    const auto manifests = generate(spec, a);
    set_thread_count(3);
    generate(spec, b);
    set_thread_count(0);

    REQUIRE(manifests.size() == 2);
    CHECK(manifests[0].runs.size() == 2 * 2 * 1);
    CHECK(manifests[1].runs.size() == 2);
    const DatasetManifest read = read_manifest(a / "alpha");
    CHECK(read.subjects == std::vector<std::string>{"sub-01", "sub-02"});
    CHECK(read.runs[1].stem == "sub-01/ses-02/run-01");
    CHECK(read.montage.names() == spec.datasets[0].montage);

    std::size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto rel = std::filesystem::relative(entry.path(), a);
        CHECK(slurp(entry.path()) == slurp(b / rel));
        ++files;
    }
    CHECK(files == 2 + 2 * (4 + 2));

    const EpochSet run = read_epoch_set(a / "beta" / "sub-01" / "ses-01" / "run-02", LabelAccess::Load);
    CHECK(run.n_epochs() == 4);
    CHECK(run.n_times() == 160);
    CHECK(run.labels == run_labels(spec, 1, 0, 0, 1));
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}
