#pragma once

#include "fieldharm/geometry.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace fieldharm {

/// Which target epochs feed the whitening mean.
enum class MeanScope { AllData, FirstSession, FirstRun, FirstHalf };
enum class Alignment { Recenter, None };

std::string to_string(MeanScope scope);
std::string to_string(Alignment align);
Alignment parse_alignment(const std::string& text);

/// Session and run an epoch was recorded in (0-based, in recording order).
struct EpochOrigin {
    int session = 0;
    int run = 0;
};

/// First session when several exist, else first run when several exist,
/// else first half of the epochs.
MeanScope calibration_scope(std::span<const EpochOrigin> origins);

/// Epoch indices belonging to `scope`; AllData returns every index.
std::vector<std::size_t> scope_indices(std::span<const EpochOrigin> origins, MeanScope scope);

struct DomainId {
    std::string dataset;
    std::string subject;
};

/// One subject's covariances together with the mean used to re-center them.
/// Target domains carry no labels.
struct DomainRecord {
    DomainId id;
    std::vector<SpdMatrix> covariances;
    std::vector<int> labels;
    SpdMatrix whitening_mean = SpdMatrix::identity(1);
    MeanScope mean_scope = MeanScope::AllData;
};

/// Builds a domain whose whitening mean is the geometric mean of the
/// covariances at `mean_indices`, or the identity when align is None.
DomainRecord make_domain(DomainId id, std::vector<SpdMatrix> covariances, std::vector<int> labels,
                         std::span<const std::size_t> mean_indices, MeanScope scope, Alignment align,
                         const MeanOptions& mean_options = {});

/// Tangent vectors at the identity of the whitened covariances (rows of the result).
Matrix domain_features(const DomainRecord& domain);

struct LogisticOptions {
    double C = 1.0;
    double tol = 1e-8;  // on the gradient norm
    int max_iter = 200;
};

// Objective: 0.5 |w|^2 + C sum_i log(1 + exp(-y_i (w . z_i + b))), y in {-1, +1}.
double logistic_objective(const Matrix& z, const std::vector<int>& labels, const Vector& w, double b, double C);

/// Gradient with respect to (w, b); the intercept is the last entry.
Vector logistic_gradient(const Matrix& z, const std::vector<int>& labels, const Vector& w, double b, double C);

struct Classifier {
    Vector weights;
    double intercept = 0.0;
    double C = 1.0;
    std::vector<std::string> channel_names;
    int iterations = 0;
    double gradient_norm = 0.0;
};

/// Deterministic Newton iterations with backtracking line search. Labels are
/// 0/1. Throws SingleClass or NoConvergence.
Classifier fit_logistic(const Matrix& z, const std::vector<int>& labels, const LogisticOptions& options = {});

Classifier fit_pipeline(std::span<const DomainRecord> train, const std::vector<std::string>& channel_names,
                        const LogisticOptions& options = {});

struct Prediction {
    std::vector<int> labels;
    std::vector<double> probabilities;  // of class 1
};

Prediction predict_features(const Classifier& clf, const Matrix& z);

/// Throws DimMismatch when the domain covariances do not match the classifier.
Prediction predict(const Classifier& clf, const DomainRecord& target);

nlohmann::json classifier_to_json(const Classifier& clf);
Classifier classifier_from_json(const nlohmann::json& j);

}  // namespace fieldharm
