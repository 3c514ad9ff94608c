#pragma once

#include <stdexcept>
#include <string>

namespace trishare {

enum class ErrorCode {
    InvalidArgument,
    ShapeMismatch,
    BackendMismatch,
    ScaleMismatch,
    OverflowBound,
    MissingTriple,
    ModeUnsupported,
    UnresolvedShape,
    ProtocolDesync,
    ChannelClosed,
    ConnectFailed,
    Timeout,
    BadMagic,
    TruncatedFile,
    MissingWeights,
    DegreeTooLow,
    NegativeVariance,
    BadConfig,
    IoError,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::BackendMismatch: return "BackendMismatch";
        case ErrorCode::ScaleMismatch: return "ScaleMismatch";
        case ErrorCode::OverflowBound: return "OverflowBound";
        case ErrorCode::MissingTriple: return "MissingTriple";
        case ErrorCode::ModeUnsupported: return "ModeUnsupported";
        case ErrorCode::UnresolvedShape: return "UnresolvedShape";
        case ErrorCode::ProtocolDesync: return "ProtocolDesync";
        case ErrorCode::ChannelClosed: return "ChannelClosed";
        case ErrorCode::ConnectFailed: return "ConnectFailed";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::MissingWeights: return "MissingWeights";
        case ErrorCode::DegreeTooLow: return "DegreeTooLow";
        case ErrorCode::NegativeVariance: return "NegativeVariance";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

}  // namespace trishare
