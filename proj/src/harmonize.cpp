#include "fieldharm/harmonize.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

namespace fieldharm {

namespace {

std::vector<std::string> keys_of(const std::vector<std::string>& names) {
    std::vector<std::string> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        out.push_back(channel_key(n));
    }
    return out;
}

std::map<std::string, std::size_t> index_by_key(const std::vector<std::string>& names) {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        out.emplace(channel_key(names[i]), i);
    }
    return out;
}

}  // namespace

double spline_kernel(double cos_angle, int stiffness, int n_terms) {
    const double x = std::clamp(cos_angle, -1.0, 1.0);
    double p_prev = 1.0;
    double p_cur = x;
    double sum = 0.0;
    for (int n = 1; n <= n_terms; ++n) {
        const double dn = n;
        sum += (2.0 * dn + 1.0) / std::pow(dn * (dn + 1.0), stiffness) * p_cur;
        const double p_next = ((2.0 * dn + 1.0) * x * p_cur - dn * p_prev) / (dn + 1.0);
        p_prev = p_cur;
        p_cur = p_next;
    }
    return sum / (4.0 * std::numbers::pi);
}

InterpOperator ssi_operator(const Montage& src, const Montage& dst, const SsiOptions& options) {
    if (src.size() < 3) {
        throw Error(Errc::TooFewChannels, "spherical splines need at least 3 source channels");
    }
    const auto from = project_unit_sphere(src);
    const auto to = project_unit_sphere(dst);
    const auto n = static_cast<Eigen::Index>(from.size());
    const auto m = static_cast<Eigen::Index>(to.size());

    Matrix system = Matrix::Zero(n + 1, n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double g = spline_kernel(from[static_cast<std::size_t>(i)].dot(from[static_cast<std::size_t>(j)]),
                                           options.stiffness, options.n_terms);
            system(i, j) = g;
            system(j, i) = g;
        }
        system(i, i) += options.reg;
        system(i, n) = 1.0;
        system(n, i) = 1.0;
    }
    Matrix cross(m, n + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            cross(i, j) = spline_kernel(to[static_cast<std::size_t>(i)].dot(from[static_cast<std::size_t>(j)]),
                                        options.stiffness, options.n_terms);
        }
        cross(i, n) = 1.0;
    }

    Eigen::FullPivLU<Matrix> lu(system);
    if (!lu.isInvertible()) {
        throw Error(Errc::SingularSystem, "spherical spline system is singular (coincident electrodes?)");
    }
    // A = [G_ds 1] S^-1 restricted to the data columns
    const Matrix solved = lu.solve(Matrix::Identity(n + 1, n + 1));
    InterpOperator op;
    op.matrix = cross * solved.leftCols(n);
    if (!op.matrix.allFinite()) {
        throw Error(Errc::SingularSystem, "spherical spline operator is not finite");
    }
    op.source_names = src.names();
    op.target_names = dst.names();
    op.method = InterpMethod::Ssi;
    op.reg = options.reg;
    return op;
}

InterpOperator fi_operator(const Montage& src, const Montage& dst, const Leadfield& lf_src, const Leadfield& lf_dst,
                           double reg) {
    if (lf_src.source_fingerprint != lf_dst.source_fingerprint || lf_src.matrix.cols() != lf_dst.matrix.cols()) {
        throw Error(Errc::SourceSpaceMismatch, "leadfields were built from different source spaces");
    }
    if (keys_of(lf_src.electrode_names) != keys_of(src.names()) ||
        keys_of(lf_dst.electrode_names) != keys_of(dst.names())) {
        throw Error(Errc::ChannelOrderMismatch, "leadfield rows do not follow the montage channel order");
    }
    const Matrix& g_src = lf_src.matrix;
    Matrix gram = g_src * g_src.transpose();
    const double lambda = reg * gram.diagonal().mean();
    gram.diagonal().array() += lambda;
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success) {
        throw Error(Errc::SingularSystem, "regularized source Gram matrix is singular");
    }
    // A = G_dst G_src^T gram^-1 = (gram^-1 G_src G_dst^T)^T, gram symmetric
    InterpOperator op;
    op.matrix = ldlt.solve(g_src * lf_dst.matrix.transpose()).transpose();
    op.source_names = src.names();
    op.target_names = dst.names();
    op.method = InterpMethod::Fi;
    op.reg = reg;
    return op;
}

EpochSet apply_operator(const InterpOperator& op, const EpochSet& epochs) {
    if (keys_of(epochs.channels) != keys_of(op.source_names)) {
        throw Error(Errc::ChannelOrderMismatch, "epoch channels do not match the operator source channels");
    }
    EpochSet out;
    out.labels = epochs.labels;
    out.sfreq = epochs.sfreq;
    out.channels = op.target_names;
    out.epochs.resize(epochs.n_epochs());
    parallel_for(epochs.n_epochs(), [&](std::size_t e) { out.epochs[e] = op.matrix * epochs.epochs[e]; });
    return out;
}

nlohmann::json operator_to_json(const InterpOperator& op) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(op.matrix.size()));
    for (Eigen::Index i = 0; i < op.matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < op.matrix.cols(); ++j) {
            flat.push_back(op.matrix(i, j));
        }
    }
    return {{"method", op.method == InterpMethod::Fi ? "fi" : "ssi"},
            {"reg", op.reg},
            {"source_names", op.source_names},
            {"target_names", op.target_names},
            {"shape", {op.matrix.rows(), op.matrix.cols()}},
            {"matrix", flat}};
}

InterpOperator operator_from_json(const nlohmann::json& j) {
    try {
        InterpOperator op;
        const std::string method = j.at("method").get<std::string>();
        if (method != "fi" && method != "ssi") {
            throw Error(Errc::InvalidSpec, "unknown operator method " + method);
        }
        op.method = method == "fi" ? InterpMethod::Fi : InterpMethod::Ssi;
        op.reg = j.at("reg").get<double>();
        op.source_names = j.at("source_names").get<std::vector<std::string>>();
        op.target_names = j.at("target_names").get<std::vector<std::string>>();
        const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
        const auto flat = j.at("matrix").get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] != static_cast<Eigen::Index>(op.target_names.size()) ||
            shape[1] != static_cast<Eigen::Index>(op.source_names.size()) ||
            flat.size() != static_cast<std::size_t>(shape[0] * shape[1])) {
            throw Error(Errc::InvalidSpec, "operator shape does not match its channel lists");
        }
        op.matrix.resize(shape[0], shape[1]);
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < shape[0]; ++r) {
            for (Eigen::Index c = 0; c < shape[1]; ++c) {
                op.matrix(r, c) = flat[k++];
            }
        }
        return op;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("malformed operator json: ") + e.what());
    }
}

std::vector<std::string> union_channels(const std::vector<std::vector<std::string>>& name_lists,
                                        const std::vector<std::string>& reference) {
    std::set<std::string> present;
    for (const auto& list : name_lists) {
        for (const auto& n : list) {
            present.insert(channel_key(n));
        }
    }
    std::vector<std::string> out;
    std::set<std::string> placed;
    for (const auto& r : reference) {
        const std::string key = channel_key(r);
        if (present.contains(key) && placed.insert(key).second) {
            out.push_back(canonical_name(r));
        }
    }
    std::vector<std::string> rest;
    for (const auto& key : present) {
        if (!placed.contains(key)) {
            rest.push_back(canonical_name(key));
        }
    }
    std::sort(rest.begin(), rest.end());
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

ExpandedCov dt_expand(const SpdMatrix& c, const std::vector<std::string>& names,
                      const std::vector<std::string>& union_names) {
    if (static_cast<Eigen::Index>(names.size()) != c.dim()) {
        throw Error(Errc::DimMismatch, "channel list length differs from covariance size");
    }
    const auto index = index_by_key(union_names);
    std::vector<Eigen::Index> slot(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        auto it = index.find(channel_key(names[i]));
        if (it == index.end()) {
            throw Error(Errc::UnknownChannel, "channel " + names[i] + " is not in the union");
        }
        slot[i] = static_cast<Eigen::Index>(it->second);
    }
    const auto u = static_cast<Eigen::Index>(union_names.size());
    Matrix e = Matrix::Identity(u, u);
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            e(slot[i], slot[j]) = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return ExpandedCov{SpdMatrix(std::move(e)), union_names};
}

Montage common_channels(std::span<const Montage> montages, const std::vector<std::string>& reference) {
    if (montages.empty()) {
        throw Error(Errc::EmptyIntersection, "no montages given");
    }
    std::set<std::string> shared;
    for (const auto& e : montages.front().channels()) {
        shared.insert(channel_key(e.name));
    }
    for (const auto& m : montages.subspan(1)) {
        std::set<std::string> keep;
        for (const auto& e : m.channels()) {
            if (shared.contains(channel_key(e.name))) {
                keep.insert(channel_key(e.name));
            }
        }
        shared = std::move(keep);
    }
    if (shared.empty()) {
        throw Error(Errc::EmptyIntersection, "montages share no channel");
    }
    std::vector<std::string> ordered;
    for (const auto& r : reference) {
        if (shared.erase(channel_key(r)) > 0) {
            ordered.push_back(canonical_name(r));
        }
    }
    std::vector<std::string> rest;
    for (const auto& key : shared) {
        rest.push_back(canonical_name(key));
    }
    std::sort(rest.begin(), rest.end());
    ordered.insert(ordered.end(), rest.begin(), rest.end());

    std::vector<Electrode> channels;
    for (const auto& n : ordered) {
        channels.push_back({n, montages.front().position(n)});
    }
    return Montage(std::move(channels), montages.front().head_radius());
}

namespace {

// Training samples sharing one observed-channel pattern.
struct Block {
    Matrix x;                   // samples x union channels
    std::vector<bool> observed; // per union channel
    Matrix gram;                // x^T x
    Vector sums;                // x^T 1
};

struct Regression {
    Vector weights;  // union length, zero at the target channel
    double intercept = 0.0;
};

Regression fit_channel(const std::vector<Block>& blocks, std::size_t j, double ridge) {
    const auto u = blocks.front().x.cols();
    Matrix gram = Matrix::Zero(u, u);
    Vector sums = Vector::Zero(u);
    double n = 0.0;
    for (const auto& b : blocks) {
        if (b.observed[j]) {
            gram += b.gram;
            sums += b.sums;
            n += static_cast<double>(b.x.rows());
        }
    }
    const Vector mean = sums / n;
    const Matrix cov = gram / n - mean * mean.transpose();

    std::vector<Eigen::Index> pred;
    for (Eigen::Index k = 0; k < u; ++k) {
        if (k != static_cast<Eigen::Index>(j)) {
            pred.push_back(k);
        }
    }
    const auto p = static_cast<Eigen::Index>(pred.size());
    Regression r;
    r.weights = Vector::Zero(u);
    if (p == 0) {
        r.intercept = mean[static_cast<Eigen::Index>(j)];
        return r;
    }
    Matrix lhs(p, p);
    Vector rhs(p);
    for (Eigen::Index a = 0; a < p; ++a) {
        rhs[a] = cov(pred[static_cast<std::size_t>(a)], static_cast<Eigen::Index>(j));
        for (Eigen::Index b = 0; b < p; ++b) {
            lhs(a, b) = cov(pred[static_cast<std::size_t>(a)], pred[static_cast<std::size_t>(b)]);
        }
    }
    const double alpha = ridge * lhs.diagonal().mean();
    lhs.diagonal().array() += alpha > 0.0 ? alpha : 0.0;
    const Vector w = lhs.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < p; ++a) {
        r.weights[pred[static_cast<std::size_t>(a)]] = w[a];
    }
    r.intercept = mean[static_cast<Eigen::Index>(j)] - r.weights.dot(mean);
    return r;
}

void refresh_column(Block& b, Eigen::Index j) {
    const Vector g = b.x.transpose() * b.x.col(j);
    b.gram.row(j) = g.transpose();
    b.gram.col(j) = g;
    b.sums[j] = b.x.col(j).sum();
}

}  // namespace

ImputerModel comimp_fit(std::span<const EpochSet> training, const std::vector<std::string>& union_names,
                        const ComImpOptions& options) {
    const auto u = static_cast<Eigen::Index>(union_names.size());
    const auto index = index_by_key(union_names);

    // Group epoch sets by observed-channel pattern.
    std::map<std::vector<bool>, std::vector<std::pair<const EpochSet*, std::vector<Eigen::Index>>>> groups;
    for (const auto& set : training) {
        std::vector<bool> observed(static_cast<std::size_t>(u), false);
        std::vector<Eigen::Index> slots;
        for (const auto& ch : set.channels) {
            auto it = index.find(channel_key(ch));
            if (it == index.end()) {
                throw Error(Errc::UnknownChannel, "training channel " + ch + " is not in the union");
            }
            observed[it->second] = true;
            slots.push_back(static_cast<Eigen::Index>(it->second));
        }
        groups[observed].emplace_back(&set, std::move(slots));
    }

    std::vector<Block> blocks;
    for (auto& [observed, sets] : groups) {
        Eigen::Index rows = 0;
        for (const auto& [set, slots] : sets) {
            rows += static_cast<Eigen::Index>(set->n_epochs()) * set->n_times();
        }
        if (rows == 0) {
            continue;
        }
        Block b;
        b.observed = observed;
        b.x = Matrix::Zero(rows, u);
        Eigen::Index row = 0;
        for (const auto& [set, slots] : sets) {
            for (const auto& e : set->epochs) {
                for (std::size_t c = 0; c < slots.size(); ++c) {
                    b.x.col(slots[c]).segment(row, e.cols()) = e.row(static_cast<Eigen::Index>(c)).transpose();
                }
                row += e.cols();
            }
        }
        blocks.push_back(std::move(b));
    }
    if (blocks.empty()) {
        throw Error(Errc::DegenerateInput, "no training samples for the imputer");
    }

    ImputerModel model;
    model.union_names = union_names;
    model.options = options;
    model.means = Vector::Zero(u);
    model.observed_counts.assign(static_cast<std::size_t>(u), 0);
    double max_abs_observed = 0.0;
    for (Eigen::Index j = 0; j < u; ++j) {
        double sum = 0.0;
        for (const auto& b : blocks) {
            if (b.observed[static_cast<std::size_t>(j)]) {
                sum += b.x.col(j).sum();
                model.observed_counts[static_cast<std::size_t>(j)] += static_cast<std::size_t>(b.x.rows());
                max_abs_observed = std::max(max_abs_observed, b.x.col(j).cwiseAbs().maxCoeff());
            }
        }
        if (model.observed_counts[static_cast<std::size_t>(j)] == 0) {
            throw Error(Errc::UncoveredChannel, "union channel " + union_names[static_cast<std::size_t>(j)] +
                                                    " is never observed in training");
        }
        model.means[j] = sum / static_cast<double>(model.observed_counts[static_cast<std::size_t>(j)]);
    }
    for (auto& b : blocks) {
        for (Eigen::Index j = 0; j < u; ++j) {
            if (!b.observed[static_cast<std::size_t>(j)]) {
                b.x.col(j).setConstant(model.means[j]);
            }
        }
        b.gram = b.x.transpose() * b.x;
        b.sums = b.x.colwise().sum().transpose();
    }

    model.visit_order.resize(static_cast<std::size_t>(u));
    std::iota(model.visit_order.begin(), model.visit_order.end(), std::size_t{0});
    std::stable_sort(model.visit_order.begin(), model.visit_order.end(), [&](std::size_t a, std::size_t b) {
        return model.observed_counts[a] < model.observed_counts[b];
    });

    std::vector<std::size_t> missing_capable;
    for (std::size_t j : model.visit_order) {
        for (const auto& b : blocks) {
            if (!b.observed[j]) {
                missing_capable.push_back(j);
                break;
            }
        }
    }

    const double scale = max_abs_observed > 0.0 ? max_abs_observed : 1.0;
    model.converged = missing_capable.empty();
    for (int iter = 1; iter <= options.max_iter && !missing_capable.empty(); ++iter) {
        double max_change = 0.0;
        for (std::size_t j : missing_capable) {
            const Regression r = fit_channel(blocks, j, options.ridge);
            const auto col = static_cast<Eigen::Index>(j);
            for (auto& b : blocks) {
                if (b.observed[j]) {
                    continue;
                }
                Vector fresh = b.x * r.weights;
                fresh.array() += r.intercept;
                max_change = std::max(max_change, (fresh - b.x.col(col)).cwiseAbs().maxCoeff());
                b.x.col(col) = fresh;
                refresh_column(b, col);
            }
        }
        model.iterations = iter;
        if (max_change / scale < options.tol) {
            model.converged = true;
            break;
        }
    }

    model.weights = Matrix::Zero(u, u);
    model.intercepts = Vector::Zero(u);
    for (Eigen::Index j = 0; j < u; ++j) {
        const Regression r = fit_channel(blocks, static_cast<std::size_t>(j), options.ridge);
        model.weights.row(j) = r.weights.transpose();
        model.intercepts[j] = r.intercept;
    }
    return model;
}

EpochSet comimp_transform(const ImputerModel& model, const EpochSet& epochs) {
    const auto u = static_cast<Eigen::Index>(model.union_names.size());
    const auto index = index_by_key(model.union_names);
    std::vector<bool> observed(static_cast<std::size_t>(u), false);
    std::vector<Eigen::Index> slots;
    for (const auto& ch : epochs.channels) {
        auto it = index.find(channel_key(ch));
        if (it == index.end()) {
            throw Error(Errc::UnknownChannel, "channel " + ch + " is not in the imputer union");
        }
        observed[it->second] = true;
        slots.push_back(static_cast<Eigen::Index>(it->second));
    }

    EpochSet out;
    out.labels = epochs.labels;
    out.sfreq = epochs.sfreq;
    out.channels = model.union_names;
    const Eigen::Index n_t = epochs.n_times();
    const auto rows = static_cast<Eigen::Index>(epochs.n_epochs()) * n_t;
    if (rows == 0) {
        return out;
    }

    Matrix x(rows, u);
    for (Eigen::Index j = 0; j < u; ++j) {
        if (!observed[static_cast<std::size_t>(j)]) {
            x.col(j).setConstant(model.means[j]);
        }
    }
    double max_abs_observed = 0.0;
    for (std::size_t e = 0; e < epochs.n_epochs(); ++e) {
        for (std::size_t c = 0; c < slots.size(); ++c) {
            x.col(slots[c]).segment(static_cast<Eigen::Index>(e) * n_t, n_t) =
                epochs.epochs[e].row(static_cast<Eigen::Index>(c)).transpose();
        }
    }
    for (Eigen::Index slot : slots) {
        max_abs_observed = std::max(max_abs_observed, x.col(slot).cwiseAbs().maxCoeff());
    }
    const double scale = max_abs_observed > 0.0 ? max_abs_observed : 1.0;

    std::vector<std::size_t> missing;
    for (std::size_t j : model.visit_order) {
        if (!observed[j]) {
            missing.push_back(j);
        }
    }
    for (int iter = 1; iter <= model.options.max_iter && !missing.empty(); ++iter) {
        double max_change = 0.0;
        for (std::size_t j : missing) {
            const auto col = static_cast<Eigen::Index>(j);
            Vector fresh = x * model.weights.row(col).transpose();
            fresh.array() += model.intercepts[col];
            max_change = std::max(max_change, (fresh - x.col(col)).cwiseAbs().maxCoeff());
            x.col(col) = fresh;
        }
        if (max_change / scale < model.options.tol) {
            break;
        }
    }

    out.epochs.resize(epochs.n_epochs());
    for (std::size_t e = 0; e < epochs.n_epochs(); ++e) {
        out.epochs[e] = x.middleRows(static_cast<Eigen::Index>(e) * n_t, n_t).transpose();
        // observed channels are copied from the input, never re-derived
        for (std::size_t c = 0; c < slots.size(); ++c) {
            out.epochs[e].row(slots[c]) = epochs.epochs[e].row(static_cast<Eigen::Index>(c));
        }
    }
    return out;
}

}  // namespace fieldharm
