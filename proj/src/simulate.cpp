#include "fieldharm/simulate.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/geometry.hpp"
#include "fieldharm/parallel.hpp"
#include "fieldharm/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace fieldharm {

namespace {

// Stream tags inside one subject.
constexpr std::uint64_t kSubjectStream = 0;
constexpr std::uint64_t kLabelStream = 1;
constexpr std::uint64_t kTrialStream = 2;

constexpr int kPinkWarmup = 256;

std::string numbered(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%02d", prefix, index);
    return buf;
}

Eigen::Vector3d random_unit(Rng& rng) {
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-12);
    return v.normalized();
}

// Economy pink-noise filter (three first-order sections plus a direct term).
struct PinkFilter {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double step(double white) {
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        return b0 + b1 + b2 + white * 0.1848;
    }
};

// Output rms of the pink filter for unit-variance white input.
double pink_rms() {
    static const double rms = [] {
        PinkFilter f;
        double energy = 0.0;
        double y = f.step(1.0);
        energy += y * y;
        for (int i = 0; i < 200000; ++i) {
            y = f.step(0.0);
            energy += y * y;
        }
        return std::sqrt(energy);
    }();
    return rms;
}

Leadfield motor_leadfield(const SimSpec& spec, const Montage& montage) {
    std::vector<Dipole> dipoles;
    for (const char* name : {"C3", "C4"}) {
        const Eigen::Vector3d dir = standard_position(name, montage.head_radius())->normalized();
        dipoles.push_back({spec.source_fraction * montage.head_radius() * dir, dir});
    }
    return leadfield(SourceSpace(std::move(dipoles), spec.source_fraction, montage.head_radius()), montage);
}

}  // namespace

void SimSpec::validate() const {
    if (datasets.empty()) {
        throw Error(Errc::InvalidSpec, "simulation spec has no datasets");
    }
    if (!(erd_factor > 0.0 && erd_factor <= 1.0)) {
        throw Error(Errc::InvalidSpec, "erd_factor must lie in (0, 1]");
    }
    if (n_background < 0 || !(source_fraction > 0.0 && source_fraction < 1.0)) {
        throw Error(Errc::InvalidSpec, "invalid background count or source depth");
    }
    if (!(band_low > 0.0 && band_low < band_high)) {
        throw Error(Errc::InvalidSpec, "invalid oscillation band");
    }
    for (const auto& d : datasets) {
        if (d.name.empty() || d.montage.empty()) {
            throw Error(Errc::InvalidSpec, "dataset needs a name and a montage");
        }
        if (d.n_subjects < 1 || d.n_sessions < 1 || d.n_runs < 1 || d.trials_per_run < 2 || d.trials_per_run % 2 != 0) {
            throw Error(Errc::InvalidSpec, "dataset " + d.name + ": counts must be >= 1 and trials per run even");
        }
        if (!(d.sfreq > 2.0 * band_high) || !(d.trial_sec > 0.0) || !(d.gain > 0.0) || !(d.noise_std >= 0.0) ||
            !(d.subject_shift_std >= 0.0)) {
            throw Error(Errc::InvalidSpec, "dataset " + d.name + ": invalid rate, duration, gain or noise");
        }
        for (const auto& n : d.montage) {
            if (!standard_position(n)) {
                throw Error(Errc::InvalidSpec, "dataset " + d.name + ": unknown channel " + n);
            }
        }
        Montage::from_names(d.montage);  // rejects duplicates
    }
}

SimSpec sim_spec_from_json(const nlohmann::json& j) {
    try {
        SimSpec spec;
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.erd_factor = j.value("erd_factor", spec.erd_factor);
        spec.n_background = j.value("n_background", spec.n_background);
        spec.source_fraction = j.value("source_fraction", spec.source_fraction);
        spec.motor_amplitude = j.value("motor_amplitude", spec.motor_amplitude);
        spec.background_amplitude = j.value("background_amplitude", spec.background_amplitude);
        spec.band_low = j.value("band_low", spec.band_low);
        spec.band_high = j.value("band_high", spec.band_high);
        for (const auto& d : j.at("datasets")) {
            SimDataset ds;
            ds.name = d.at("name").get<std::string>();
            ds.montage = d.at("montage").get<std::vector<std::string>>();
            ds.n_subjects = d.at("n_subjects").get<int>();
            ds.n_sessions = d.value("n_sessions", 1);
            ds.n_runs = d.value("n_runs", 1);
            ds.trials_per_run = d.at("trials_per_run").get<int>();
            ds.sfreq = d.at("sfreq").get<double>();
            ds.trial_sec = d.value("trial_sec", ds.trial_sec);
            ds.gain = d.value("gain", ds.gain);
            ds.noise_std = d.value("noise_std", ds.noise_std);
            ds.subject_shift_std = d.value("subject_shift_std", ds.subject_shift_std);
            spec.datasets.push_back(std::move(ds));
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed simulation spec: ") + e.what());
    }
}

nlohmann::json sim_spec_to_json(const SimSpec& spec) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["erd_factor"] = spec.erd_factor;
    j["n_background"] = spec.n_background;
    j["source_fraction"] = spec.source_fraction;
    j["motor_amplitude"] = spec.motor_amplitude;
    j["background_amplitude"] = spec.background_amplitude;
    j["band_low"] = spec.band_low;
    j["band_high"] = spec.band_high;
    j["datasets"] = nlohmann::json::array();
    for (const auto& d : spec.datasets) {
        j["datasets"].push_back({{"name", d.name},
                                 {"montage", d.montage},
                                 {"n_subjects", d.n_subjects},
                                 {"n_sessions", d.n_sessions},
                                 {"n_runs", d.n_runs},
                                 {"trials_per_run", d.trials_per_run},
                                 {"sfreq", d.sfreq},
                                 {"trial_sec", d.trial_sec},
                                 {"gain", d.gain},
                                 {"noise_std", d.noise_std},
                                 {"subject_shift_std", d.subject_shift_std}});
    }
    return j;
}

SimSpec bench6_spec(double erd_factor, std::uint64_t seed) {
    SimSpec spec;
    spec.erd_factor = erd_factor;
    spec.seed = seed;
    auto add = [&](std::string name, std::vector<std::string> montage, int subjects, int sessions, int runs,
                   int trials, double sfreq, double gain, double noise) {
        SimDataset d;
        d.name = std::move(name);
        d.montage = std::move(montage);
        d.n_subjects = subjects;
        d.n_sessions = sessions;
        d.n_runs = runs;
        d.trials_per_run = trials;
        d.sfreq = sfreq;
        d.gain = gain;
        d.noise_std = noise;
        spec.datasets.push_back(std::move(d));
    };
    add("ds1",
        {"Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz", "C2",
         "C4", "C6", "CP3", "CP1", "CPz", "CP2", "CP4", "P1", "Pz", "P2", "POz"},
        4, 2, 2, 12, 250.0, 1.0, 1.0e-6);
    add("ds2", {"C3", "Cz", "C4"}, 3, 3, 1, 16, 250.0, 0.8, 1.2e-6);
    add("ds3",
        {"FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "C5", "C3", "C1", "Cz", "C2", "C4", "C6",
         "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4",
         "AF8", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8", "FT7", "FT8", "T7", "T8",
         "T9", "T10", "TP7", "TP8", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PO7",
         "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2", "Iz"},
        8, 1, 1, 48, 160.0, 1.2, 1.5e-6);
    add("ds4",
        {"Cz", "F3", "F4", "F7", "F8", "T7", "T8", "P7", "P8", "P3", "P4", "Pz", "AF5", "AF1", "AF2",
         "AF6", "PO1", "PO2", "AF9", "AF10", "F9", "F10", "FT9", "FT10", "TP9", "TP10", "P9", "P10", "PO9", "PO10"},
        4, 3, 1, 16, 200.0, 1.5, 1.0e-6);
    add("ds5",
        {"Fp1", "Fpz", "Fp2", "AF3", "AF4", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
         "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "T7", "C5", "C3", "C1", "Cz",
         "C2", "C4", "C6", "T8", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "P7",
         "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PO7", "PO5", "PO3", "POz", "PO4", "PO6",
         "PO8", "O1", "Oz", "O2"},
        3, 1, 1, 48, 200.0, 0.9, 0.8e-6);
    add("ds6", {"Fp1", "Fp2", "FC3", "FCz", "FC4", "C3", "Cz", "C4", "CP3", "CPz", "CP4", "O1", "Oz", "O2"}, 2, 3,
        2, 8, 250.0, 1.1, 1.2e-6);
    return spec;
}

SubjectModel subject_model(const SimSpec& spec, std::size_t dataset, int subject) {
    const SimDataset& ds = spec.datasets.at(dataset);
    Rng rng = Rng::derive(spec.seed, {dataset, static_cast<std::uint64_t>(subject), kSubjectStream});
    Montage montage = Montage::from_names(ds.montage);
    const double radius = montage.head_radius();

    std::vector<Dipole> background;
    for (int k = 0; k < spec.n_background; ++k) {
        const Eigen::Vector3d dir = random_unit(rng);
        const double r = radius * (0.3 + (spec.source_fraction + 0.1 - 0.3) * rng.uniform());
        background.push_back({r * dir, random_unit(rng)});
    }

    const auto n = static_cast<Eigen::Index>(montage.size());
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            g(i, j) = rng.normal();
        }
    }
    const Matrix s = (g + g.transpose()) / std::sqrt(2.0 * static_cast<double>(n));
    Matrix shift = spd_exp(symmetrize(ds.subject_shift_std * s)).values();
    const double motor_scale = std::exp(0.25 * rng.normal());

    Leadfield bg_lf;
    if (!background.empty()) {
        bg_lf = leadfield(SourceSpace(std::move(background), spec.source_fraction + 0.1, radius), montage);
    } else {
        bg_lf.matrix = Matrix::Zero(n, 0);
        bg_lf.electrode_names = montage.names();
    }
    Leadfield motor = motor_leadfield(spec, montage);
    return SubjectModel{std::move(montage), std::move(motor), std::move(bg_lf), std::move(shift), motor_scale};
}

std::vector<int> run_labels(const SimSpec& spec, std::size_t dataset, int subject, int session, int run) {
    const SimDataset& ds = spec.datasets.at(dataset);
    Rng rng = Rng::derive(spec.seed, {dataset, static_cast<std::uint64_t>(subject), kLabelStream,
                                      static_cast<std::uint64_t>(session), static_cast<std::uint64_t>(run)});
    std::vector<int> labels(static_cast<std::size_t>(ds.trials_per_run));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = i < labels.size() / 2 ? 0 : 1;
    }
    for (std::size_t i = labels.size() - 1; i > 0; --i) {
        std::swap(labels[i], labels[rng.below(i + 1)]);
    }
    return labels;
}

TrialComponents simulate_trial(const SimSpec& spec, const SubjectModel& model, std::size_t dataset, int subject,
                               int session, int run, int trial, int label) {
    const SimDataset& ds = spec.datasets.at(dataset);
    Rng rng = Rng::derive(spec.seed, {dataset, static_cast<std::uint64_t>(subject), kTrialStream,
                                      static_cast<std::uint64_t>(session), static_cast<std::uint64_t>(run),
                                      static_cast<std::uint64_t>(trial)});
    const auto n_t = static_cast<Eigen::Index>(std::lround(ds.trial_sec * ds.sfreq));
    const auto n_ch = static_cast<Eigen::Index>(model.montage.size());
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<double> freqs;
    for (double f = spec.band_low; f <= spec.band_high + 1e-9; f += 0.5) {
        freqs.push_back(f);
    }
    const double norm = std::sqrt(2.0 / static_cast<double>(freqs.size()));

    TrialComponents out;
    out.motor_sources = Matrix::Zero(2, n_t);
    for (Eigen::Index h = 0; h < 2; ++h) {
        // source 0 sits over the left hemisphere (C3), source 1 over the right (C4)
        const bool attenuated = (label == 1 && h == 0) || (label == 0 && h == 1);
        const double amp = spec.motor_amplitude * model.motor_scale * norm * (attenuated ? spec.erd_factor : 1.0);
        for (double f : freqs) {
            const double a = rng.normal() * amp;
            const double phase = two_pi * rng.uniform();
            const double w = two_pi * f / ds.sfreq;
            for (Eigen::Index t = 0; t < n_t; ++t) {
                out.motor_sources(h, t) += a * std::cos(w * static_cast<double>(t) + phase);
            }
        }
    }

    const auto n_bg = static_cast<Eigen::Index>(spec.n_background);
    out.background_sources.resize(n_bg, n_t);
    const double bg_scale = spec.background_amplitude / pink_rms();
    for (Eigen::Index k = 0; k < n_bg; ++k) {
        PinkFilter f;
        for (int t = 0; t < kPinkWarmup; ++t) {
            f.step(rng.normal());
        }
        for (Eigen::Index t = 0; t < n_t; ++t) {
            out.background_sources(k, t) = bg_scale * f.step(rng.normal());
        }
    }

    out.sensor_noise.resize(n_ch, n_t);
    for (Eigen::Index c = 0; c < n_ch; ++c) {
        for (Eigen::Index t = 0; t < n_t; ++t) {
            out.sensor_noise(c, t) = ds.noise_std * rng.normal();
        }
    }

    Matrix brain = model.motor.matrix * out.motor_sources;
    if (n_bg > 0) {
        brain += model.background.matrix * out.background_sources;
    }
    out.data = ds.gain * (model.shift * brain) + out.sensor_noise;
    return out;
}

EpochSet simulate_run(const SimSpec& spec, const SubjectModel& model, std::size_t dataset, int subject, int session,
                      int run) {
    const SimDataset& ds = spec.datasets.at(dataset);
    EpochSet set;
    set.channels = model.montage.names();
    set.sfreq = ds.sfreq;
    set.labels = run_labels(spec, dataset, subject, session, run);
    set.epochs.resize(set.labels.size());
    parallel_for(set.labels.size(), [&](std::size_t i) {
        set.epochs[i] =
            simulate_trial(spec, model, dataset, subject, session, run, static_cast<int>(i), set.labels[i]).data;
    });
    return set;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : m.runs) {
        runs.push_back({{"subject", r.subject}, {"session", r.session}, {"run", r.run}, {"stem", r.stem}});
    }
    return {{"name", m.name},
            {"sfreq", m.sfreq},
            {"montage", montage_to_json(m.montage)},
            {"subjects", m.subjects},
            {"n_sessions", m.n_sessions},
            {"n_runs", m.n_runs},
            {"class_map", {{"0", "left_hand"}, {"1", "right_hand"}}},
            {"runs", runs}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    try {
        DatasetManifest m;
        m.name = j.at("name").get<std::string>();
        m.sfreq = j.at("sfreq").get<double>();
        m.montage = montage_from_json(j.at("montage"));
        m.subjects = j.at("subjects").get<std::vector<std::string>>();
        m.n_sessions = j.at("n_sessions").get<int>();
        m.n_runs = j.at("n_runs").get<int>();
        for (const auto& r : j.at("runs")) {
            m.runs.push_back({r.at("subject").get<std::string>(), r.at("session").get<int>(), r.at("run").get<int>(),
                              r.at("stem").get<std::string>()});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed manifest: ") + e.what());
    }
}

DatasetManifest read_manifest(const std::filesystem::path& dataset_dir) {
    const auto path = dataset_dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, "malformed " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

std::vector<DatasetManifest> generate(const SimSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::vector<DatasetManifest> manifests;
    for (std::size_t d = 0; d < spec.datasets.size(); ++d) {
        const SimDataset& ds = spec.datasets[d];
        const auto dir = out_dir / ds.name;
        std::filesystem::create_directories(dir);

        DatasetManifest m;
        m.name = ds.name;
        m.sfreq = ds.sfreq;
        m.montage = Montage::from_names(ds.montage);
        m.n_sessions = ds.n_sessions;
        m.n_runs = ds.n_runs;
        for (int s = 0; s < ds.n_subjects; ++s) {
            const std::string sub = numbered("sub", s + 1);
            m.subjects.push_back(sub);
            const SubjectModel model = subject_model(spec, d, s);
            for (int ses = 0; ses < ds.n_sessions; ++ses) {
                const std::string ses_name = numbered("ses", ses + 1);
                std::filesystem::create_directories(dir / sub / ses_name);
                for (int r = 0; r < ds.n_runs; ++r) {
                    const std::string stem = sub + "/" + ses_name + "/" + numbered("run", r + 1);
                    write_epoch_set(simulate_run(spec, model, d, s, ses, r), dir / stem);
                    m.runs.push_back({sub, ses, r, stem});
                }
            }
        }
        std::ofstream out(dir / "manifest.json");
        if (!out) {
            throw Error(Errc::Io, "cannot write manifest in " + dir.string());
        }
        out << manifest_to_json(m).dump(2) << '\n';
        manifests.push_back(std::move(m));
    }
    return manifests;
}

}  // namespace fieldharm
