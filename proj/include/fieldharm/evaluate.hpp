#pragma once

#include "fieldharm/harmonize.hpp"
#include "fieldharm/model.hpp"
#include "fieldharm/simulate.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fieldharm {

enum class Method { Fi, Ssi, Dt, ComImp, Common, Calibration };

std::string to_string(Method m);
Method parse_method(const std::string& text);

/// Every knob of a benchmark run. Defaults follow the published setup:
/// 8-32 Hz band, 128 Hz, C = 1, 17-channel template.
struct RunConfig {
    std::filesystem::path data_root;
    Method method = Method::Fi;
    Alignment align = Alignment::Recenter;
    std::string template_montage = "builtin-17";  // or a montage JSON path
    double ssi_reg = kDefaultSsiReg;
    int ssi_stiffness = 4;
    int ssi_terms = 50;
    double fi_reg = kDefaultFiReg;
    std::size_t source_points = 642;
    double source_fraction = 0.7;
    ComImpOptions comimp;
    double band_low = 8.0;
    double band_high = 32.0;
    int filter_order = kDefaultFilterOrder;
    double resample_hz = 128.0;
    double C = 1.0;
    std::uint64_t seed = 20240607;
};

nlohmann::json config_to_json(const RunConfig& c);
/// Missing keys keep their defaults. Throws Config.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
/// FNV-1a of the configuration without the data location, as 16 hex digits.
std::string config_hash(const RunConfig& c);

Montage template_montage(const RunConfig& c);

/// A subject's preprocessed epochs. Labels are not loaded here: they are read
/// from disk only for training subjects and for scoring.
struct SubjectData {
    std::string dataset;
    std::string subject;
    EpochSet epochs;  // runs concatenated in recording order, labels empty
    std::vector<EpochOrigin> origins;
    std::vector<std::filesystem::path> stems;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SubjectData> subjects;
};

/// Reads a dataset directory, band-pass filters and resamples every run.
Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& config);
/// Every dataset directory under `root`, sorted by name.
std::vector<Dataset> load_datasets(const std::filesystem::path& root, const RunConfig& config);

/// Labels of a subject, read from its run files.
std::vector<int> load_labels(const SubjectData& subject);

struct SubjectScore {
    std::string id;  // "<dataset>/<subject>"
    double accuracy = 0.0;
    std::size_t n_epochs = 0;
    std::vector<int> predicted;  // per epoch, not serialized
};

struct StageTiming {
    double harmonize_s = 0.0;
    double mean_s = 0.0;
    double fit_s = 0.0;
    double predict_s = 0.0;
};

struct RunResult {
    Method method = Method::Fi;
    Alignment align = Alignment::Recenter;
    std::string target;
    std::string config_hash;
    std::vector<SubjectScore> subjects;  // sorted by id
    StageTiming timing;
    Eigen::Index feature_channels = 0;  // channel count of the harmonized space
    std::vector<std::string> retained_channels;  // common-channel method only
    std::vector<std::string> train_datasets;

    [[nodiscard]] double mean_accuracy() const;
    /// Method plus "-noalign" when re-centering is off.
    [[nodiscard]] std::string method_name() const;
};

nlohmann::json result_to_json(const RunResult& r);
RunResult result_from_json(const nlohmann::json& j);

/// Train on every subject of `train`, evaluate each subject of `target`.
RunResult evaluate_transfer(std::span<const Dataset* const> train, const Dataset& target, const RunConfig& config);

/// Held-out evaluation of `target_name` against all other datasets.
RunResult lodo(std::span<const Dataset> data, const std::string& target_name, const RunConfig& config);

/// First half of the subject's epochs trains, second half scores.
/// Throws TooFewEpochs when a half has fewer than 4 epochs of a class.
double calibration(const SubjectData& subject, const RunConfig& config);

struct CurvePoint {
    std::vector<std::string> included;
    std::size_t target_channels_seen = 0;
    RunResult result;
    RunResult reference;                 // FI with the same training pool
    std::vector<double> diff_vs_reference;  // per subject, result - reference
};

/// Adds the training datasets one at a time in `order`.
std::vector<CurvePoint> learning_curve(std::span<const Dataset> data, const std::string& target_name,
                                       const std::vector<std::string>& order, const RunConfig& config);

nlohmann::json curve_to_json(const std::vector<CurvePoint>& curve);

struct WilcoxonResult {
    double statistic = 0.0;  // W+ over the non-zero differences
    double p_value = 1.0;
    std::size_t n = 0;       // pairs after dropping zero differences
    bool exact = true;
    std::string stars;
};

/// Two-sided signed-rank test. Throws TooFewPairs when fewer than 5 non-zero
/// differences remain.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

/// ns, *, **, ***, **** at 5e-2, 1e-2, 1e-3, 1e-4.
std::string significance_stars(double p);

}  // namespace fieldharm
