#include "fieldharm/error.hpp"

namespace fieldharm {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::NonFinite: return "NonFinite";
        case Errc::DegenerateInput: return "DegenerateInput";
        case Errc::NotSpd: return "NotSpd";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::NoConvergence: return "NoConvergence";
        case Errc::ZeroPosition: return "ZeroPosition";
        case Errc::DipoleOutsideSphere: return "DipoleOutsideSphere";
        case Errc::TooFewChannels: return "TooFewChannels";
        case Errc::SingularSystem: return "SingularSystem";
        case Errc::SourceSpaceMismatch: return "SourceSpaceMismatch";
        case Errc::ChannelOrderMismatch: return "ChannelOrderMismatch";
        case Errc::UnknownChannel: return "UnknownChannel";
        case Errc::UncoveredChannel: return "UncoveredChannel";
        case Errc::EmptyIntersection: return "EmptyIntersection";
        case Errc::InvalidBand: return "InvalidBand";
        case Errc::UpsamplingUnsupported: return "UpsamplingUnsupported";
        case Errc::SingleClass: return "SingleClass";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::TooFewEpochs: return "TooFewEpochs";
        case Errc::TooFewPairs: return "TooFewPairs";
        case Errc::Io: return "Io";
        case Errc::Config: return "Config";
    }
    return "Unknown";
}

}  // namespace fieldharm
