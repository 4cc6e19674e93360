#include "fieldharm/model.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace fieldharm {

std::string to_string(MeanScope scope) {
    switch (scope) {
        case MeanScope::AllData: return "all_data";
        case MeanScope::FirstSession: return "first_session";
        case MeanScope::FirstRun: return "first_run";
        case MeanScope::FirstHalf: return "first_half";
    }
    return "unknown";
}

std::string to_string(Alignment align) { return align == Alignment::Recenter ? "recenter" : "none"; }

Alignment parse_alignment(const std::string& text) {
    if (text == "recenter") {
        return Alignment::Recenter;
    }
    if (text == "none") {
        return Alignment::None;
    }
    throw Error(Errc::Config, "align must be 'recenter' or 'none', got '" + text + "'");
}

MeanScope calibration_scope(std::span<const EpochOrigin> origins) {
    std::set<int> sessions;
    std::set<std::pair<int, int>> runs;
    for (const auto& o : origins) {
        sessions.insert(o.session);
        runs.insert({o.session, o.run});
    }
    if (sessions.size() > 1) {
        return MeanScope::FirstSession;
    }
    if (runs.size() > 1) {
        return MeanScope::FirstRun;
    }
    return MeanScope::FirstHalf;
}

std::vector<std::size_t> scope_indices(std::span<const EpochOrigin> origins, MeanScope scope) {
    std::vector<std::size_t> out;
    if (origins.empty()) {
        return out;
    }
    const int first_session =
        std::min_element(origins.begin(), origins.end(), [](auto& a, auto& b) { return a.session < b.session; })
            ->session;
    int first_run = std::numeric_limits<int>::max();
    for (const auto& o : origins) {
        if (o.session == first_session) {
            first_run = std::min(first_run, o.run);
        }
    }
    for (std::size_t i = 0; i < origins.size(); ++i) {
        bool keep = false;
        switch (scope) {
            case MeanScope::AllData: keep = true; break;
            case MeanScope::FirstSession: keep = origins[i].session == first_session; break;
            case MeanScope::FirstRun: keep = origins[i].session == first_session && origins[i].run == first_run; break;
            case MeanScope::FirstHalf: keep = i < origins.size() / 2; break;
        }
        if (keep) {
            out.push_back(i);
        }
    }
    return out;
}

DomainRecord make_domain(DomainId id, std::vector<SpdMatrix> covariances, std::vector<int> labels,
                         std::span<const std::size_t> mean_indices, MeanScope scope, Alignment align,
                         const MeanOptions& mean_options) {
    if (covariances.empty()) {
        throw Error(Errc::DegenerateInput, "domain has no covariances");
    }
    if (!labels.empty() && labels.size() != covariances.size()) {
        throw Error(Errc::DimMismatch, "label count differs from covariance count");
    }
    DomainRecord d;
    d.id = std::move(id);
    d.mean_scope = scope;
    if (align == Alignment::None) {
        d.whitening_mean = SpdMatrix::identity(covariances.front().dim());
    } else {
        if (mean_indices.empty()) {
            throw Error(Errc::DegenerateInput, "whitening mean scope selects no epochs");
        }
        std::vector<SpdMatrix> subset;
        subset.reserve(mean_indices.size());
        for (std::size_t i : mean_indices) {
            subset.push_back(covariances.at(i));
        }
        d.whitening_mean = geometric_mean(subset, mean_options).mean;
    }
    d.covariances = std::move(covariances);
    d.labels = std::move(labels);
    return d;
}

Matrix domain_features(const DomainRecord& domain) {
    const Eigen::Index dim = domain.whitening_mean.dim();
    const Matrix inv_root = domain.whitening_mean.inv_sqrt();
    Matrix z(static_cast<Eigen::Index>(domain.covariances.size()), TangentVector::length_for(dim));
    parallel_for(domain.covariances.size(), [&](std::size_t i) {
        const SpdMatrix& c = domain.covariances[i];
        if (c.dim() != dim) {
            throw Error(Errc::DimMismatch, "covariance size differs from the domain whitening mean");
        }
        const Matrix w = symmetrize(inv_root * c.values() * inv_root);
        const Matrix l = apply_spectral(eigh(w), [](double v) { return std::log(v); });
        z.row(static_cast<Eigen::Index>(i)) = upper_weighted(l).transpose();
    });
    return z;
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector signs(const std::vector<int>& labels) {
    Vector y(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        y[static_cast<Eigen::Index>(i)] = labels[i] == 1 ? 1.0 : -1.0;
    }
    return y;
}

void check_shapes(const Matrix& z, const std::vector<int>& labels) {
    if (z.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw Error(Errc::DimMismatch, "feature rows differ from label count");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw Error(Errc::InvalidSpec, "labels must be 0 or 1");
        }
    }
}

struct Problem {
    const Matrix& z;
    Vector y;
    double C;

    [[nodiscard]] double objective(const Vector& w, double b) const {
        const Vector m = (y.array() * ((z * w).array() + b)).matrix();
        double loss = 0.0;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            loss += softplus(-m[i]);
        }
        return 0.5 * w.squaredNorm() + C * loss;
    }

    // Gradient plus the per-sample Hessian weights sigma(m)(1 - sigma(m)).
    [[nodiscard]] Vector gradient(const Vector& w, double b, Vector* curvature) const {
        const Vector m = (y.array() * ((z * w).array() + b)).matrix();
        Vector coeff(m.size());
        if (curvature != nullptr) {
            curvature->resize(m.size());
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double s = sigmoid(-m[i]);
            coeff[i] = -C * y[i] * s;
            if (curvature != nullptr) {
                (*curvature)[i] = s * (1.0 - s);
            }
        }
        Vector g(w.size() + 1);
        g.head(w.size()) = w + z.transpose() * coeff;
        g[w.size()] = coeff.sum();
        return g;
    }
};

constexpr Eigen::Index kDirectSolveLimit = 512;

// Solves H p = rhs, H = diag(1,..,1,0) + C A^T D A with A = [z 1].
Vector newton_direction(const Matrix& z, const Vector& curvature, double C, const Vector& rhs, double forcing) {
    const Eigen::Index d = z.cols();
    const Vector cd = C * curvature;
    if (d + 1 <= kDirectSolveLimit) {
        Matrix h(d + 1, d + 1);
        const Matrix weighted = z.transpose() * cd.asDiagonal();
        h.topLeftCorner(d, d) = weighted * z;
        h.topLeftCorner(d, d).diagonal().array() += 1.0;
        const Vector col = weighted.rowwise().sum();
        h.topRightCorner(d, 1) = col;
        h.bottomLeftCorner(1, d) = col.transpose();
        h(d, d) = cd.sum();
        return h.ldlt().solve(rhs);
    }

    // Preconditioned conjugate gradients with Hessian-vector products.
    auto apply = [&](const Vector& v) {
        const Vector av = ((z * v.head(d)).array() + v[d]).matrix();
        const Vector t = cd.cwiseProduct(av);
        Vector out(d + 1);
        out.head(d) = v.head(d) + z.transpose() * t;
        out[d] = t.sum();
        return out;
    };
    Vector diag(d + 1);
    diag.head(d) = (z.array().square().colwise() * cd.array()).colwise().sum().transpose() + 1.0;
    diag[d] = std::max(cd.sum(), 1e-300);

    Vector x = Vector::Zero(d + 1);
    Vector r = rhs;
    Vector s = r.cwiseQuotient(diag);
    Vector p = s;
    double rs = r.dot(s);
    const double target = forcing * rhs.norm();
    const Eigen::Index limit = 2 * std::min<Eigen::Index>(d + 1, z.rows() + 2) + 10;
    for (Eigen::Index it = 0; it < limit && r.norm() > target; ++it) {
        const Vector hp = apply(p);
        const double curv = p.dot(hp);
        if (curv <= 0.0) {
            break;
        }
        const double alpha = rs / curv;
        x += alpha * p;
        r -= alpha * hp;
        s = r.cwiseQuotient(diag);
        const double rs_next = r.dot(s);
        p = s + (rs_next / rs) * p;
        rs = rs_next;
    }
    return x;
}

}  // namespace

double logistic_objective(const Matrix& z, const std::vector<int>& labels, const Vector& w, double b, double C) {
    check_shapes(z, labels);
    return Problem{z, signs(labels), C}.objective(w, b);
}

Vector logistic_gradient(const Matrix& z, const std::vector<int>& labels, const Vector& w, double b, double C) {
    check_shapes(z, labels);
    return Problem{z, signs(labels), C}.gradient(w, b, nullptr);
}

Classifier fit_logistic(const Matrix& z, const std::vector<int>& labels, const LogisticOptions& options) {
    check_shapes(z, labels);
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0 || positives == static_cast<long>(labels.size())) {
        throw Error(Errc::SingleClass, "training labels contain a single class");
    }
    if (!z.allFinite()) {
        throw Error(Errc::NonFinite, "non-finite training features");
    }
    const Problem prob{z, signs(labels), options.C};
    const Eigen::Index d = z.cols();

    Vector w = Vector::Zero(d);
    double b = 0.0;
    double f = prob.objective(w, b);
    Vector curvature;
    Vector g = prob.gradient(w, b, &curvature);

    Classifier clf;
    clf.C = options.C;
    for (int iter = 0; iter < options.max_iter; ++iter) {
        const double gnorm = g.norm();
        if (gnorm <= options.tol) {
            clf.iterations = iter;
            break;
        }
        const double forcing = std::min(0.5, std::sqrt(gnorm));
        const Vector step = newton_direction(z, curvature, options.C, -g, forcing);
        const double slope = g.dot(step);

        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            const Vector w_try = w + t * step.head(d);
            const double b_try = b + t * step[d];
            const double f_try = prob.objective(w_try, b_try);
            if (f_try <= f + 1e-4 * t * slope) {
                w = w_try;
                b = b_try;
                f = f_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        g = prob.gradient(w, b, &curvature);
        clf.iterations = iter + 1;
        if (!accepted) {
            // No representable decrease is left; accept when the gradient is
            // already small at this floating-point floor.
            if (g.norm() <= 1e-6) {
                break;
            }
            throw Error(Errc::NoConvergence, "logistic regression line search failed");
        }
    }
    clf.gradient_norm = g.norm();
    if (clf.gradient_norm > options.tol && clf.gradient_norm > 1e-6) {
        throw Error(Errc::NoConvergence, "logistic regression did not reach the gradient tolerance");
    }
    clf.weights = std::move(w);
    clf.intercept = b;
    return clf;
}

Classifier fit_pipeline(std::span<const DomainRecord> train, const std::vector<std::string>& channel_names,
                        const LogisticOptions& options) {
    if (train.empty()) {
        throw Error(Errc::DegenerateInput, "no training domains");
    }
    const Eigen::Index dim = train.front().whitening_mean.dim();
    std::vector<Matrix> blocks;
    std::vector<int> labels;
    Eigen::Index rows = 0;
    for (const auto& d : train) {
        if (d.whitening_mean.dim() != dim) {
            throw Error(Errc::DimMismatch, "training domains differ in channel count");
        }
        if (d.labels.size() != d.covariances.size()) {
            throw Error(Errc::DimMismatch, "training domain is missing labels");
        }
        blocks.push_back(domain_features(d));
        rows += blocks.back().rows();
        labels.insert(labels.end(), d.labels.begin(), d.labels.end());
    }
    Matrix z(rows, TangentVector::length_for(dim));
    Eigen::Index at = 0;
    for (const auto& blk : blocks) {
        z.middleRows(at, blk.rows()) = blk;
        at += blk.rows();
    }
    Classifier clf = fit_logistic(z, labels, options);
    clf.channel_names = channel_names;
    return clf;
}

Prediction predict_features(const Classifier& clf, const Matrix& z) {
    if (z.cols() != clf.weights.size()) {
        throw Error(Errc::DimMismatch, "feature length differs from the classifier");
    }
    Prediction p;
    const Vector score = (z * clf.weights).array() + clf.intercept;
    for (Eigen::Index i = 0; i < score.size(); ++i) {
        const double prob = sigmoid(score[i]);
        p.probabilities.push_back(prob);
        p.labels.push_back(prob > 0.5 ? 1 : 0);
    }
    return p;
}

Prediction predict(const Classifier& clf, const DomainRecord& target) {
    if (TangentVector::length_for(target.whitening_mean.dim()) != clf.weights.size()) {
        throw Error(Errc::DimMismatch, "target covariances do not match the classifier");
    }
    return predict_features(clf, domain_features(target));
}

nlohmann::json classifier_to_json(const Classifier& clf) {
    return {{"weights", std::vector<double>(clf.weights.data(), clf.weights.data() + clf.weights.size())},
            {"intercept", clf.intercept},
            {"C", clf.C},
            {"channel_names", clf.channel_names}};
}

Classifier classifier_from_json(const nlohmann::json& j) {
    try {
        Classifier clf;
        const auto w = j.at("weights").get<std::vector<double>>();
        clf.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        clf.intercept = j.at("intercept").get<double>();
        clf.C = j.at("C").get<double>();
        clf.channel_names = j.at("channel_names").get<std::vector<std::string>>();
        return clf;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed classifier json: ") + e.what());
    }
}

}  // namespace fieldharm
