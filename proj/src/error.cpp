#include "lsalign/error.hpp"

namespace lsalign {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::EmptyPromptList: return "EmptyPromptList";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateLabel: return "DuplicateLabel";
    case ErrorCode::DuplicateDataset: return "DuplicateDataset";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::HoldoutLeak: return "HoldoutLeak";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyLabelSpace: return "EmptyLabelSpace";
    case ErrorCode::LabelSpaceMismatch: return "LabelSpaceMismatch";
    case ErrorCode::MalformedBox: return "MalformedBox";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

}  // namespace lsalign
