#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fieldharm {

/// Failure categories raised by the library. Every throw site uses one of these
/// so callers (and the CLI exit-code mapping) can branch on the kind.
enum class Errc {
    NonFinite,
    DegenerateInput,
    NotSpd,
    DimMismatch,
    NoConvergence,
    ZeroPosition,
    DipoleOutsideSphere,
    TooFewChannels,
    SingularSystem,
    SourceSpaceMismatch,
    ChannelOrderMismatch,
    UnknownChannel,
    UncoveredChannel,
    EmptyIntersection,
    InvalidBand,
    UpsamplingUnsupported,
    SingleClass,
    InvalidSpec,
    TooFewEpochs,
    TooFewPairs,
    Io,
    Config,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace fieldharm
