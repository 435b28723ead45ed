#include "xlid/errors.hpp"

namespace xlid {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyAfterTrim: return "EmptyAfterTrim";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::FactorOutOfRange: return "FactorOutOfRange";
    case ErrorCode::ShiftOutOfRange: return "ShiftOutOfRange";
    case ErrorCode::SilentSignal: return "SilentSignal";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonScalarRoot: return "NonScalarRoot";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicatePath: return "DuplicatePath";
    case ErrorCode::UnknownLanguage: return "UnknownLanguage";
    case ErrorCode::EmptyLanguage: return "EmptyLanguage";
    case ErrorCode::MissingSpeakerId: return "MissingSpeakerId";
    case ErrorCode::NoUsableClips: return "NoUsableClips";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::InvalidCell: return "InvalidCell";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

}  // namespace xlid
