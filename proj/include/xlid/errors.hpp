#pragma once

#include <stdexcept>
#include <string>

namespace xlid {

enum class ErrorCode {
  // audio_io
  MalformedHeader,
  UnsupportedEncoding,
  EmptyAudio,
  IoFailure,
  EmptyAfterTrim,
  // dsp_features
  TooShort,
  DimensionMismatch,
  // augmentation
  FactorOutOfRange,
  ShiftOutOfRange,
  SilentSignal,
  // autodiff / model
  ShapeMismatch,
  SequenceTooShort,
  LabelOutOfRange,
  NonScalarRoot,
  NonFinite,
  InvalidConfig,
  // dataset
  ParseError,
  DuplicatePath,
  UnknownLanguage,
  EmptyLanguage,
  MissingSpeakerId,
  NoUsableClips,
  // training
  DivergedLoss,
  InvalidCell,
  CheckpointMismatch,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the toolkit. The code identifies the contract that
/// was violated; the message carries the offending value, path or line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace xlid
