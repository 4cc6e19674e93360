#pragma once

#include "fieldharm/geometry.hpp"
#include "fieldharm/headmodel.hpp"
#include "fieldharm/montage.hpp"
#include "fieldharm/signal.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace fieldharm {

enum class InterpMethod { Ssi, Fi };

/// Dense map from source channels to target channels: X_hat = A X.
struct InterpOperator {
    Matrix matrix;  // target x source
    std::vector<std::string> source_names;
    std::vector<std::string> target_names;
    InterpMethod method = InterpMethod::Fi;
    double reg = 0.0;
};

inline constexpr double kDefaultSsiReg = 1e-7;
inline constexpr double kDefaultFiReg = 1e-3;

struct SsiOptions {
    int stiffness = 4;
    int n_terms = 50;
    double reg = kDefaultSsiReg;
};

/// Spherical-spline kernel g(x) = 1/(4 pi) sum_{n=1}^{N} (2n+1) / (n^m (n+1)^m) P_n(x).
double spline_kernel(double cos_angle, int stiffness, int n_terms);

/// Spherical-spline interpolation operator. Positions are projected on the
/// unit sphere; the spline system carries a constant term and `reg` on the
/// kernel diagonal. Throws TooFewChannels (< 3 sources) or SingularSystem.
InterpOperator ssi_operator(const Montage& src, const Montage& dst, const SsiOptions& options = {});

/// Field interpolation through a minimum-norm source estimate:
///   A = G_dst G_src^T (G_src G_src^T + lambda I)^-1,
///   lambda = reg * mean(diag(G_src G_src^T)).
/// Throws SourceSpaceMismatch when the leadfields come from different source
/// spaces, ChannelOrderMismatch when a leadfield's rows do not follow its montage.
InterpOperator fi_operator(const Montage& src, const Montage& dst, const Leadfield& lf_src, const Leadfield& lf_dst,
                           double reg = kDefaultFiReg);

/// Maps every epoch; labels and sampling rate carry over. The epoch channel
/// order must equal op.source_names (alias-insensitive).
EpochSet apply_operator(const InterpOperator& op, const EpochSet& epochs);

nlohmann::json operator_to_json(const InterpOperator& op);
InterpOperator operator_from_json(const nlohmann::json& j);

/// Covariance embedded in the union channel space.
struct ExpandedCov {
    SpdMatrix matrix;
    std::vector<std::string> union_names;
};

/// Canonical channel union: channels of `reference` first (in its order),
/// then every other channel alphabetically by canonical name.
std::vector<std::string> union_channels(const std::vector<std::vector<std::string>>& name_lists,
                                        const std::vector<std::string>& reference);

/// Block embedding [[C, 0], [0, I]] permuted so rows and columns follow
/// union_names. Throws UnknownChannel for names outside the union.
ExpandedCov dt_expand(const SpdMatrix& c, const std::vector<std::string>& names,
                      const std::vector<std::string>& union_names);

/// Channel intersection after alias normalization, ordered like `reference`
/// first, then alphabetically. Positions come from the first montage.
/// Throws EmptyIntersection.
Montage common_channels(std::span<const Montage> montages, const std::vector<std::string>& reference);

struct ComImpOptions {
    double ridge = 1e-3;  // times the mean predictor variance
    int max_iter = 10;
    double tol = 1e-3;
};

/// Per-channel ridge regressions over the union channel space, fitted by
/// round-robin iterative imputation on concatenated time samples.
struct ImputerModel {
    std::vector<std::string> union_names;
    Vector means;              // per union channel, over observed samples
    Matrix weights;            // row j regresses channel j on the others; weights(j, j) == 0
    Vector intercepts;
    std::vector<std::size_t> visit_order;
    std::vector<std::size_t> observed_counts;
    int iterations = 0;
    bool converged = false;
    ComImpOptions options;
};

/// Throws UncoveredChannel when a union channel is observed in no training set.
ImputerModel comimp_fit(std::span<const EpochSet> training, const std::vector<std::string>& union_names,
                        const ComImpOptions& options = {});

/// Expands epochs to the union channels. Observed channels are copied
/// unchanged; missing ones start at the training means and are re-predicted
/// in visit order until the imputed values settle. Throws UnknownChannel.
EpochSet comimp_transform(const ImputerModel& model, const EpochSet& epochs);

}  // namespace fieldharm
