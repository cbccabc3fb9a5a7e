#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccar {

enum class Errc {
    InvalidDimensions,
    ClassOutOfRange,
    LengthMismatch,
    ShapeMismatch,
    NonFiniteInput,
    LabelOutOfRange,
    StaleTape,
    NonFiniteGradient,
    NonFiniteLoss,
    DegenerateNorm,
    InsufficientSamples,
    NoLiveNeurons,
    DegenerateScatter,
    SingleClass,
    AllDead,
    DegenerateWeights,
    ConditionViolated,
    MinTrials,
    BadMagic,
    TruncatedFile,
    LabelRangeError,
    VersionMismatch,
    CorruptCheckpoint,
    IncompatibleShapes,
    Config,
    Io,
};

constexpr std::string_view errc_name(Errc e) noexcept {
    switch (e) {
    case Errc::InvalidDimensions: return "InvalidDimensions";
    case Errc::ClassOutOfRange: return "ClassOutOfRange";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::StaleTape: return "StaleTape";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::DegenerateNorm: return "DegenerateNorm";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NoLiveNeurons: return "NoLiveNeurons";
    case Errc::DegenerateScatter: return "DegenerateScatter";
    case Errc::SingleClass: return "SingleClass";
    case Errc::AllDead: return "AllDead";
    case Errc::DegenerateWeights: return "DegenerateWeights";
    case Errc::ConditionViolated: return "ConditionViolated";
    case Errc::MinTrials: return "MinTrials";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::LabelRangeError: return "LabelRangeError";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::IncompatibleShapes: return "IncompatibleShapes";
    case Errc::Config: return "ConfigError";
    case Errc::Io: return "IoError";
    }
    return "Unknown";
}

/// Every failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

} // namespace ccar
