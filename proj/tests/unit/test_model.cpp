#include "doctest.h"

#include "fieldharm/error.hpp"
#include "fieldharm/model.hpp"
#include "test_support.hpp"

#include <random>

using namespace fieldharm;
using fieldharm::testing::random_matrix;
using fieldharm::testing::random_spd;

namespace {

std::vector<int> alternating(std::size_t n) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
    }
    return y;
}

// Two-class covariance domain: class 1 inflates the first channel.
std::vector<SpdMatrix> class_covs(std::mt19937_64& rng, const std::vector<int>& labels, Eigen::Index dim,
                                  const Matrix& mix) {
    std::vector<SpdMatrix> out;
    for (int y : labels) {
        Matrix c = random_spd(rng, dim, 0.5).values();
        c(0, 0) += y == 1 ? 3.0 : 0.0;
        out.emplace_back(symmetrize(mix.transpose() * c * mix));
    }
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

}  // namespace

TEST_CASE("logistic gradient matches central differences") {
    std::mt19937_64 rng(1);
    const Matrix z = random_matrix(rng, 40, 6);
    const std::vector<int> y = alternating(40);
    const Vector w = random_matrix(rng, 6, 1).col(0) * 0.3;
    const double b = 0.2;
    const Vector g = logistic_gradient(z, y, w, b, 1.0);
    const double h = 1e-6;
    Vector fd(7);
    for (int k = 0; k < 6; ++k) {
        Vector wp = w, wm = w;
        wp[k] += h;
        wm[k] -= h;
        fd[k] = (logistic_objective(z, y, wp, b, 1.0) - logistic_objective(z, y, wm, b, 1.0)) / (2 * h);
    }
    fd[6] = (logistic_objective(z, y, w, b + h, 1.0) - logistic_objective(z, y, w, b - h, 1.0)) / (2 * h);
    CHECK((fd - g).norm() / g.norm() <= 1e-5);
}

TEST_CASE("separable data is fit perfectly and deterministically") {
    std::mt19937_64 rng(2);
    Matrix z = random_matrix(rng, 60, 5);
    const std::vector<int> y = alternating(60);
    for (Eigen::Index i = 0; i < 60; ++i) {
        z(i, 0) = y[static_cast<std::size_t>(i)] == 1 ? 2.0 + std::abs(z(i, 0)) : -2.0 - std::abs(z(i, 0));
    }
    const Classifier clf = fit_logistic(z, y);
    CHECK(clf.gradient_norm <= 1e-6);
    CHECK(predict_features(clf, z).labels == y);
    const Classifier again = fit_logistic(z, y);
    CHECK(again.weights == clf.weights);
    CHECK(again.intercept == clf.intercept);
}

TEST_CASE("swapping labels negates the solution") {
    std::mt19937_64 rng(3);
    const Matrix z = random_matrix(rng, 50, 4);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        y[i] = z(static_cast<Eigen::Index>(i), 1) + 0.5 * z(static_cast<Eigen::Index>(i), 2) > 0.3 ? 1 : 0;
    }
    std::vector<int> swapped(y.size());
    std::transform(y.begin(), y.end(), swapped.begin(), [](int v) { return 1 - v; });
    const Classifier a = fit_logistic(z, y);
    const Classifier b = fit_logistic(z, swapped);
    CHECK((a.weights + b.weights).norm() <= 1e-6);
    CHECK(std::abs(a.intercept + b.intercept) <= 1e-6);
}

TEST_CASE("high-dimensional problems use the iterative Newton solve") {
    std::mt19937_64 rng(4);
    const Matrix z = random_matrix(rng, 80, 700) * 0.1;
    std::vector<int> y(80);
    for (std::size_t i = 0; i < 80; ++i) {
        y[i] = z(static_cast<Eigen::Index>(i), 0) > 0.0 ? 1 : 0;
    }
    const Classifier clf = fit_logistic(z, y);
    CHECK(logistic_gradient(z, y, clf.weights, clf.intercept, 1.0).norm() <= 1e-6);
    std::vector<int> swapped(y.size());
    std::transform(y.begin(), y.end(), swapped.begin(), [](int v) { return 1 - v; });
    const Classifier neg = fit_logistic(z, swapped);
    CHECK((clf.weights + neg.weights).norm() <= 1e-6);
}

TEST_CASE("logistic errors") {
    const Matrix z = Matrix::Ones(4, 2);
    try {
        fit_logistic(z, {1, 1, 1, 1});
        FAIL("expected SingleClass");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SingleClass);
    }
    CHECK_THROWS_AS(fit_logistic(z, {0, 1}), Error);
}

TEST_CASE("zero classifier predicts one half") {
    Classifier clf;
    clf.weights = Vector::Zero(3);
    const Prediction p = predict_features(clf, Matrix::Ones(5, 3));
    for (double v : p.probabilities) {
        CHECK(v == 0.5);
    }
}

TEST_CASE("calibration scope selection") {
    std::vector<EpochOrigin> one_run(10);
    CHECK(calibration_scope(one_run) == MeanScope::FirstHalf);
    CHECK(scope_indices(one_run, MeanScope::FirstHalf) == std::vector<std::size_t>{0, 1, 2, 3, 4});

    std::vector<EpochOrigin> runs{{0, 0}, {0, 0}, {0, 1}, {0, 1}, {0, 2}};
    CHECK(calibration_scope(runs) == MeanScope::FirstRun);
    CHECK(scope_indices(runs, MeanScope::FirstRun) == std::vector<std::size_t>{0, 1});

    std::vector<EpochOrigin> sessions{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}};
    CHECK(calibration_scope(sessions) == MeanScope::FirstSession);
    CHECK(scope_indices(sessions, MeanScope::FirstSession) == std::vector<std::size_t>{0, 1});
    CHECK(scope_indices(sessions, MeanScope::AllData).size() == 5);
}

TEST_CASE("alignment off uses the identity") {
    std::mt19937_64 rng(5);
    const auto labels = alternating(6);
    auto covs = class_covs(rng, labels, 3, Matrix::Identity(3, 3));
    const auto idx = all_indices(6);
    const DomainRecord d = make_domain({"ds", "s1"}, covs, labels, idx, MeanScope::AllData, Alignment::None);
    CHECK(d.whitening_mean.values() == Matrix::Identity(3, 3));
    const Matrix z = domain_features(d);
    CHECK((z.row(2).transpose() - upper_weighted(covs[2].log())).norm() < 1e-12);
}

TEST_CASE("recentered pipeline transfers across shifted domains") {
    std::mt19937_64 rng(6);
    const Eigen::Index dim = 4;
    std::vector<DomainRecord> train;
    for (int s = 0; s < 3; ++s) {
        const auto labels = alternating(40);
        const Matrix mix = Matrix::Identity(dim, dim) + 0.4 * random_matrix(rng, dim, dim);
        auto covs = class_covs(rng, labels, dim, mix);
        train.push_back(make_domain({"ds", std::to_string(s)}, covs, labels, all_indices(40), MeanScope::AllData,
                                    Alignment::Recenter));
    }
    const Classifier clf = fit_pipeline(train, {"a", "b", "c", "d"});
    CHECK(clf.weights.size() == 10);

    const auto truth = alternating(40);
    const Matrix mix = Matrix::Identity(dim, dim) + 0.4 * random_matrix(rng, dim, dim);
    auto covs = class_covs(rng, truth, dim, mix);
    std::vector<EpochOrigin> origins(40);
    const auto scope = calibration_scope(origins);
    const auto idx = scope_indices(origins, scope);
    const DomainRecord target = make_domain({"tgt", "0"}, covs, {}, idx, scope, Alignment::Recenter);
    const Prediction p = predict(clf, target);
    double correct = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += p.labels[i] == truth[i] ? 1.0 : 0.0;
    }
    CHECK(correct / 40.0 >= 0.8);

    // target labels are never consulted
    std::vector<int> noise(40);
    std::mt19937_64 lrng(99);
    for (auto& v : noise) {
        v = static_cast<int>(lrng() % 2);
    }
    const DomainRecord noisy = make_domain({"tgt", "0"}, covs, noise, idx, scope, Alignment::Recenter);
    CHECK(predict(clf, noisy).probabilities == p.probabilities);

    const DomainRecord wrong =
        make_domain({"x", "0"}, {SpdMatrix::identity(3)}, {}, std::vector<std::size_t>{0}, scope, Alignment::None);
    try {
        predict(clf, wrong);
        FAIL("expected DimMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DimMismatch);
    }
}

TEST_CASE("prediction is invariant to a joint congruence of target and mean") {
    std::mt19937_64 rng(7);
    const Eigen::Index dim = 3;
    const auto labels = alternating(20);
    auto covs = class_covs(rng, labels, dim, Matrix::Identity(dim, dim) + 0.3 * random_matrix(rng, dim, dim));
    const auto idx = all_indices(20);
    const DomainRecord base = make_domain({"t", "0"}, covs, {}, idx, MeanScope::AllData, Alignment::Recenter);
    Classifier clf;
    clf.weights = random_matrix(rng, 6, 1).col(0);
    clf.intercept = 0.1;

    // Whitening with the symmetric inverse square root leaves the result
    // unchanged exactly when W^T M^{1/2} is SPD, e.g. W = M^{-1/2} P.
    const Matrix w = base.whitening_mean.inv_sqrt() * random_spd(rng, dim).values();
    std::vector<SpdMatrix> moved;
    for (const auto& c : covs) {
        moved.push_back(congruence(c, w));
    }
    const DomainRecord shifted = make_domain({"t", "0"}, moved, {}, idx, MeanScope::AllData, Alignment::Recenter);
    const Prediction a = predict(clf, base);
    const Prediction b = predict(clf, shifted);
    for (std::size_t i = 0; i < a.probabilities.size(); ++i) {
        CHECK(a.probabilities[i] == doctest::Approx(b.probabilities[i]).epsilon(1e-7));
    }

    // For a general W the whitened set is only rotated: distances to I agree.
    const Matrix general = random_matrix(rng, dim, dim);
    std::vector<SpdMatrix> rotated;
    for (const auto& c : covs) {
        rotated.push_back(congruence(c, general));
    }
    const DomainRecord other = make_domain({"t", "0"}, rotated, {}, idx, MeanScope::AllData, Alignment::Recenter);
    const Matrix za = domain_features(base);
    const Matrix zb = domain_features(other);
    for (Eigen::Index i = 0; i < za.rows(); ++i) {
        CHECK(za.row(i).norm() == doctest::Approx(zb.row(i).norm()).epsilon(1e-7));
    }
}

TEST_CASE("classifier json round trip") {
    Classifier clf;
    clf.weights = Vector::LinSpaced(6, -1.0, 1.0);
    clf.intercept = 0.25;
    clf.channel_names = {"C3", "C4", "Cz"};
    const Classifier back = classifier_from_json(nlohmann::json::parse(classifier_to_json(clf).dump()));
    CHECK(back.weights == clf.weights);
    CHECK(back.intercept == clf.intercept);
    CHECK(back.channel_names == clf.channel_names);
}
