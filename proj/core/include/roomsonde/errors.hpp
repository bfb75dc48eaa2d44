#pragma once

#include <stdexcept>
#include <string>

namespace roomsonde {

enum class Errc {
  UnsupportedFormat,
  CorruptHeader,
  CorruptPayload,
  SampleRateMismatch,
  LengthMismatch,
  ShapeMismatch,
  EmptySignal,
  EmptySourceList,
  AllZeroRir,
  InsufficientDecayRange,
  DegenerateFit,
  ZeroLateEnergy,
  BandSilent,
  SilentSpeech,
  SilentNoise,
  SilentSignal,
  ChunkTooShort,
  SignalTooShort,
  EmptySplit,
  NonMonotoneTable,
  NonFiniteValue,
  NonFiniteLoss,
  FingerprintMismatch,
  InvalidArgument,
  IoFailure,
};

const char* errc_name(Errc c);

// Single exception type for everything the toolkit can reject; the code makes
// failures machine-checkable, the message is for humans.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::UnsupportedFormat: return "unsupported format";
    case Errc::CorruptHeader: return "corrupt header";
    case Errc::CorruptPayload: return "corrupt payload";
    case Errc::SampleRateMismatch: return "sample rate mismatch";
    case Errc::LengthMismatch: return "length mismatch";
    case Errc::ShapeMismatch: return "shape mismatch";
    case Errc::EmptySignal: return "empty signal";
    case Errc::EmptySourceList: return "empty source list";
    case Errc::AllZeroRir: return "all-zero rir";
    case Errc::InsufficientDecayRange: return "insufficient decay range";
    case Errc::DegenerateFit: return "degenerate fit";
    case Errc::ZeroLateEnergy: return "zero late energy";
    case Errc::BandSilent: return "band silent";
    case Errc::SilentSpeech: return "silent speech";
    case Errc::SilentNoise: return "silent noise";
    case Errc::SilentSignal: return "silent signal";
    case Errc::ChunkTooShort: return "chunk too short";
    case Errc::SignalTooShort: return "signal too short";
    case Errc::EmptySplit: return "empty split";
    case Errc::NonMonotoneTable: return "non-monotone table";
    case Errc::NonFiniteValue: return "non-finite value";
    case Errc::NonFiniteLoss: return "non-finite loss";
    case Errc::FingerprintMismatch: return "fingerprint mismatch";
    case Errc::InvalidArgument: return "invalid argument";
    case Errc::IoFailure: return "io failure";
  }
  return "unknown error";
}

}  // namespace roomsonde
