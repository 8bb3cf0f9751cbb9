#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lsalign {

enum class ErrorCode {
  MissingFile,
  BadMagic,
  DimMismatch,
  NonFiniteEntry,
  NotNormalized,
  EmptyPromptList,
  ZeroRow,
  ZeroVector,
  IoError,
  DuplicateLabel,
  DuplicateDataset,
  EmptyInput,
  UnknownDataset,
  IndexOutOfRange,
  InvalidSpec,
  HoldoutLeak,
  EmptyCorpus,
  ChecksumMismatch,
  NonFiniteLoss,
  EmptyLabelSpace,
  LabelSpaceMismatch,
  MalformedBox,
  BadConfig,
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures are reported through this type; `code()` is stable and
// machine-readable, `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace lsalign
