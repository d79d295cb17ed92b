#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cwm {

enum class ErrorCode {
  kFileNotFound,
  kMalformedHeader,
  kUnsupportedEncoding,
  kWriteFailed,
  kInvalidArgument,
  kInvalidGeometry,
  kClipTooShort,
  kBandTooNarrow,
  kSilentNoise,
  kRateMismatch,
  kEmptySplit,
  kShapeMismatch,
  kNonFiniteLoss,
  kParse,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound: return "file not found";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kUnsupportedEncoding: return "unsupported encoding";
    case ErrorCode::kWriteFailed: return "write failed";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kInvalidGeometry: return "invalid geometry";
    case ErrorCode::kClipTooShort: return "clip too short";
    case ErrorCode::kBandTooNarrow: return "band too narrow";
    case ErrorCode::kSilentNoise: return "silent noise";
    case ErrorCode::kRateMismatch: return "sample rate mismatch";
    case ErrorCode::kEmptySplit: return "empty split";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNonFiniteLoss: return "non-finite loss";
    case ErrorCode::kParse: return "parse error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can tell error kinds apart without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace cwm
