#pragma once

#include "fieldharm/headmodel.hpp"
#include "fieldharm/montage.hpp"
#include "fieldharm/signal.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fieldharm {

struct SimDataset {
    std::string name;
    std::vector<std::string> montage;
    int n_subjects = 1;
    int n_sessions = 1;
    int n_runs = 1;
    int trials_per_run = 2;  // even, half per class
    double sfreq = 250.0;
    double trial_sec = 2.5;
    double gain = 1.0;
    double noise_std = 1e-6;  // volts
    double subject_shift_std = 0.1;
};

struct SimSpec {
    std::vector<SimDataset> datasets;
    double erd_factor = 0.5;
    std::uint64_t seed = 0;

    // Generator internals; defaults used by every shipped spec.
    int n_background = 20;
    double source_fraction = 0.7;
    double motor_amplitude = 1e-8;       // A m, rms of each motor source
    double background_amplitude = 4e-9;  // A m
    double band_low = 8.0;
    double band_high = 30.0;

    /// Throws InvalidSpec. erd_factor may equal 1 (no class effect).
    void validate() const;
};

SimSpec sim_spec_from_json(const nlohmann::json& j);
nlohmann::json sim_spec_to_json(const SimSpec& spec);

/// Six datasets sized {22, 3, 64, 30, 60, 14} channels sharing only Cz.
SimSpec bench6_spec(double erd_factor = 0.5, std::uint64_t seed = 20240607);

/// Fixed per-subject generative quantities.
struct SubjectModel {
    Montage montage;
    Leadfield motor;       // columns: left (C3 side), right (C4 side)
    Leadfield background;  // one column per background dipole
    Matrix shift;          // channel-space mixing exp(std * S)
    double motor_scale = 1.0;
};

SubjectModel subject_model(const SimSpec& spec, std::size_t dataset, int subject);

/// Every additive component of one trial; data = gain * shift * (motor + background) + noise.
struct TrialComponents {
    Matrix motor_sources;       // 2 x T, after the class-dependent attenuation
    Matrix background_sources;  // n_background x T
    Matrix sensor_noise;        // channels x T
    Matrix data;                // channels x T
};

TrialComponents simulate_trial(const SimSpec& spec, const SubjectModel& model, std::size_t dataset, int subject,
                               int session, int run, int trial, int label);

/// Balanced labels of one run in shuffled order.
std::vector<int> run_labels(const SimSpec& spec, std::size_t dataset, int subject, int session, int run);

/// One run of one subject, generated in memory.
EpochSet simulate_run(const SimSpec& spec, const SubjectModel& model, std::size_t dataset, int subject, int session,
                      int run);

struct RunEntry {
    std::string subject;
    int session = 0;
    int run = 0;
    std::string stem;  // relative to the dataset directory
};

struct DatasetManifest {
    std::string name;
    double sfreq = 0.0;
    Montage montage{std::vector<Electrode>{}};
    std::vector<std::string> subjects;
    int n_sessions = 1;
    int n_runs = 1;
    std::vector<RunEntry> runs;  // subject-major, then session, then run
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest read_manifest(const std::filesystem::path& dataset_dir);

/// Writes one directory per dataset: manifest.json plus sub-XX/ses-YY/run-ZZ.{f32,json}.
/// Output bytes depend only on the spec, never on the thread count.
std::vector<DatasetManifest> generate(const SimSpec& spec, const std::filesystem::path& out_dir);

}  // namespace fieldharm
