#pragma once

#include "fieldharm/geometry.hpp"
#include "fieldharm/linalg.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace fieldharm {

/// Trials of equal shape. Each epoch is n_channels x n_times (volts).
/// `labels` is empty for unlabeled data (target domains) and otherwise holds
/// one class id in {0, 1} per epoch.
struct EpochSet {
    std::vector<Matrix> epochs;
    std::vector<int> labels;
    std::vector<std::string> channels;
    double sfreq = 0.0;

    [[nodiscard]] std::size_t n_epochs() const noexcept { return epochs.size(); }
    [[nodiscard]] Eigen::Index n_channels() const noexcept { return static_cast<Eigen::Index>(channels.size()); }
    [[nodiscard]] Eigen::Index n_times() const noexcept { return epochs.empty() ? 0 : epochs.front().cols(); }
    [[nodiscard]] bool labeled() const noexcept { return !labels.empty(); }

    /// Throws InvalidSpec on shape or label inconsistencies, NonFinite on NaN/inf.
    void validate() const;
};

/// One biquad: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

/// Digital Butterworth band-pass as second-order sections, unit gain at the
/// band center. `order` is the prototype order (2*order poles in total).
std::vector<Biquad> butterworth_bandpass(int order, double low_hz, double high_hz, double sfreq);

/// Cascade filtering of one sequence with initial state `zi` (2 per section).
Vector sosfilt(const std::vector<Biquad>& sos, const Vector& x, std::vector<double> zi);

/// Steady-state step-response state of the cascade (2 values per section).
std::vector<double> sosfilt_zi(const std::vector<Biquad>& sos);

/// Forward-backward filtering with odd (reflection) extension of
/// 3 * (2 * sections + 1) samples at both ends.
Vector sosfiltfilt(const std::vector<Biquad>& sos, const Vector& x);

inline constexpr int kDefaultFilterOrder = 4;

/// Zero-phase Butterworth band-pass applied to every channel of every epoch.
/// Throws InvalidBand unless 0 < low < high < sfreq / 2.
EpochSet bandpass_filtfilt(const EpochSet& x, double low_hz, double high_hz, int order = kDefaultFilterOrder);

/// Polyphase resampling by the reduced ratio target/sfreq with a Kaiser
/// (beta 5) windowed-sinc anti-alias filter of half length 10 * max(up, down).
/// Output length is floor(n_times * target / sfreq). Upsampling is rejected.
EpochSet resample(const EpochSet& x, double target_hz);

/// Same as above on a single channel-major block.
Matrix resample_poly(const Matrix& x, int up, int down);

/// Consecutive, non-overlapping windows of `samples` columns; a trailing
/// partial window is dropped.
std::vector<Matrix> segment_fixed(const Matrix& raw, Eigen::Index samples);

/// Ledoit-Wolf shrunk covariance per epoch, in epoch order.
std::vector<SpdMatrix> epochs_to_covs(const EpochSet& x);

// On-disk format: <stem>.f32 holds little-endian float32 samples in C order
// [n_epochs, n_channels, n_times]; <stem>.json holds
// {n_epochs, n_channels, n_times, sfreq, labels, channels}.

enum class LabelAccess { Drop, Load };

void write_epoch_set(const EpochSet& x, const std::filesystem::path& stem);

/// Reads data and metadata. With LabelAccess::Drop the labels in the sidecar
/// are never copied into the result.
EpochSet read_epoch_set(const std::filesystem::path& stem, LabelAccess labels = LabelAccess::Drop);

/// Labels only; the scoring path uses this.
std::vector<int> read_labels(const std::filesystem::path& stem);

}  // namespace fieldharm
