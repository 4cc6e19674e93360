#include "fieldharm/signal.hpp"

#include "fieldharm/error.hpp"
#include "fieldharm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace fieldharm {

namespace {

using Complex = std::complex<double>;

Complex biquad_response(const Biquad& s, Complex z) {
    const Complex zi = 1.0 / z;
    const Complex num = s.b[0] + s.b[1] * zi + s.b[2] * zi * zi;
    const Complex den = s.a[0] + s.a[1] * zi + s.a[2] * zi * zi;
    return num / den;
}

}  // namespace

void EpochSet::validate() const {
    if (!labels.empty() && labels.size() != epochs.size()) {
        throw Error(Errc::InvalidSpec, "label count differs from epoch count");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw Error(Errc::InvalidSpec, "labels must be 0 or 1");
        }
    }
    for (const auto& e : epochs) {
        if (e.rows() != n_channels() || e.cols() != n_times()) {
            throw Error(Errc::InvalidSpec, "epochs must share one channels x times shape");
        }
        if (!e.allFinite()) {
            throw Error(Errc::NonFinite, "epoch data contains NaN or infinite samples");
        }
    }
}

std::vector<Biquad> butterworth_bandpass(int order, double low_hz, double high_hz, double sfreq) {
    if (order < 1) {
        throw Error(Errc::InvalidBand, "filter order must be positive");
    }
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sfreq / 2.0)) {
        throw Error(Errc::InvalidBand, "band must satisfy 0 < low < high < sfreq/2");
    }
    const double fs2 = 2.0 * sfreq;
    const double w_lo = fs2 * std::tan(std::numbers::pi * low_hz / sfreq);
    const double w_hi = fs2 * std::tan(std::numbers::pi * high_hz / sfreq);
    const double bw = w_hi - w_lo;
    const double w0_sq = w_lo * w_hi;

    // analog prototype -> band-pass -> bilinear transform
    std::vector<Complex> poles;
    for (int m = -order + 1; m <= order - 1; m += 2) {
        const Complex proto = -std::exp(Complex(0.0, std::numbers::pi * m / (2.0 * order)));
        const Complex root = std::sqrt(proto * proto * bw * bw - 4.0 * w0_sq);
        for (const Complex s : {(proto * bw + root) / 2.0, (proto * bw - root) / 2.0}) {
            poles.push_back((fs2 + s) / (fs2 - s));
        }
    }

    // Pair conjugates; upper-half-plane poles define the sections.
    std::vector<Complex> upper;
    std::vector<double> real;
    for (const Complex& p : poles) {
        if (std::abs(p.imag()) <= 1e-12 * std::abs(p)) {
            real.push_back(p.real());
        } else if (p.imag() > 0.0) {
            upper.push_back(p);
        }
    }
    std::sort(upper.begin(), upper.end(), [](Complex x, Complex y) { return std::abs(x) < std::abs(y); });
    std::sort(real.begin(), real.end());

    std::vector<Biquad> sos;
    for (const Complex& p : upper) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -2.0 * p.real(), std::norm(p)};
        sos.push_back(s);
    }
    for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]};
        sos.push_back(s);
    }

    const double center = 2.0 * std::atan(std::sqrt(w0_sq) / fs2);
    const Complex z = std::exp(Complex(0.0, center));
    Complex h = 1.0;
    for (const auto& s : sos) {
        h *= biquad_response(s, z);
    }
    const double gain = 1.0 / std::abs(h);
    for (double& c : sos.front().b) {
        c *= gain;
    }
    return sos;
}

Vector sosfilt(const std::vector<Biquad>& sos, const Vector& x, std::vector<double> zi) {
    Vector y = x;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& [b, a] = sos[s];
        double z1 = zi[2 * s];
        double z2 = zi[2 * s + 1];
        for (Eigen::Index t = 0; t < y.size(); ++t) {
            const double in = y[t];
            const double out = b[0] * in + z1;
            z1 = b[1] * in - a[1] * out + z2;
            z2 = b[2] * in - a[2] * out;
            y[t] = out;
        }
    }
    return y;
}

std::vector<double> sosfilt_zi(const std::vector<Biquad>& sos) {
    std::vector<double> zi(2 * sos.size(), 0.0);
    double scale = 1.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& [b, a] = sos[s];
        Eigen::Matrix2d lhs;
        lhs << 1.0 + a[1], -1.0, a[2], 1.0;
        const Eigen::Vector2d rhs(b[1] - a[1] * b[0], b[2] - a[2] * b[0]);
        const Eigen::Vector2d state = lhs.partialPivLu().solve(rhs);
        zi[2 * s] = scale * state[0];
        zi[2 * s + 1] = scale * state[1];
        scale *= (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]);
    }
    return zi;
}

Vector sosfiltfilt(const std::vector<Biquad>& sos, const Vector& x) {
    const Eigen::Index n = x.size();
    if (n < 2) {
        return x;
    }
    const auto ntaps = static_cast<Eigen::Index>(2 * sos.size() + 1);
    const Eigen::Index pad = std::min<Eigen::Index>(3 * ntaps, n - 1);

    Vector ext(n + 2 * pad);
    for (Eigen::Index i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    ext.segment(pad, n) = x;

    const std::vector<double> zi = sosfilt_zi(sos);
    auto scaled = [&](double v) {
        std::vector<double> out(zi);
        for (double& z : out) {
            z *= v;
        }
        return out;
    };
    Vector fwd = sosfilt(sos, ext, scaled(ext[0]));
    Vector rev = fwd.reverse();
    Vector bwd = sosfilt(sos, rev, scaled(rev[0]));
    return bwd.reverse().segment(pad, n);
}

EpochSet bandpass_filtfilt(const EpochSet& x, double low_hz, double high_hz, int order) {
    const auto sos = butterworth_bandpass(order, low_hz, high_hz, x.sfreq);
    EpochSet out = x;
    parallel_for(x.n_epochs(), [&](std::size_t e) {
        for (Eigen::Index c = 0; c < x.epochs[e].rows(); ++c) {
            out.epochs[e].row(c) = sosfiltfilt(sos, x.epochs[e].row(c).transpose()).transpose();
        }
    });
    return out;
}

Matrix resample_poly(const Matrix& x, int up, int down) {
    if (up < 1 || down < 1) {
        throw Error(Errc::InvalidSpec, "resampling factors must be positive");
    }
    const int g = std::gcd(up, down);
    up /= g;
    down /= g;
    if (up == 1 && down == 1) {
        return x;
    }
    const int max_rate = std::max(up, down);
    const double cutoff = 1.0 / max_rate;
    const int half_len = 10 * max_rate;
    const int taps = 2 * half_len + 1;
    constexpr double kBeta = 5.0;

    std::vector<double> h(static_cast<std::size_t>(taps));
    double sum = 0.0;
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
    for (int i = 0; i < taps; ++i) {
        const double m = i - half_len;
        const double arg = cutoff * m;
        const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
        const double ratio = 2.0 * i / (taps - 1) - 1.0;
        const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / i0_beta;
        h[static_cast<std::size_t>(i)] = cutoff * sinc * window;
        sum += h[static_cast<std::size_t>(i)];
    }
    for (double& v : h) {
        v *= up / sum;
    }

    const Eigen::Index n_in = x.cols();
    const Eigen::Index n_out = (n_in * up) / down;
    Matrix y = Matrix::Zero(x.rows(), n_out);
    for (Eigen::Index k = 0; k < n_out; ++k) {
        const long long t = static_cast<long long>(k) * down + half_len;
        long long m_lo = t - 2LL * half_len;
        m_lo = m_lo <= 0 ? 0 : (m_lo + up - 1) / up;
        const long long m_hi = std::min<long long>(t / up, n_in - 1);
        for (long long m = m_lo; m <= m_hi; ++m) {
            y.col(k) += h[static_cast<std::size_t>(t - m * up)] * x.col(static_cast<Eigen::Index>(m));
        }
    }
    return y;
}

EpochSet resample(const EpochSet& x, double target_hz) {
    if (!(target_hz > 0.0)) {
        throw Error(Errc::InvalidSpec, "target rate must be positive");
    }
    if (target_hz > x.sfreq) {
        throw Error(Errc::UpsamplingUnsupported, "resampling only reduces the sampling rate");
    }
    const long long up = std::llround(target_hz);
    const long long down = std::llround(x.sfreq);
    if (std::abs(static_cast<double>(up) - target_hz) > 1e-9 || std::abs(static_cast<double>(down) - x.sfreq) > 1e-9) {
        throw Error(Errc::InvalidSpec, "resampling needs integer sampling rates");
    }
    EpochSet out = x;
    out.sfreq = target_hz;
    if (up == down) {
        return out;
    }
    parallel_for(x.n_epochs(), [&](std::size_t e) {
        out.epochs[e] = resample_poly(x.epochs[e], static_cast<int>(up), static_cast<int>(down));
    });
    return out;
}

std::vector<Matrix> segment_fixed(const Matrix& raw, Eigen::Index samples) {
    if (samples < 1) {
        throw Error(Errc::InvalidSpec, "epoch length must be positive");
    }
    std::vector<Matrix> out;
    for (Eigen::Index start = 0; start + samples <= raw.cols(); start += samples) {
        out.emplace_back(raw.middleCols(start, samples));
    }
    return out;
}

std::vector<SpdMatrix> epochs_to_covs(const EpochSet& x) {
    std::vector<std::optional<SpdMatrix>> slots(x.n_epochs());
    parallel_for(x.n_epochs(), [&](std::size_t e) { slots[e] = shrink_covariance(x.epochs[e]); });
    std::vector<SpdMatrix> out;
    out.reserve(slots.size());
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

}  // namespace fieldharm
