#include "lsalign/embedding_store.hpp"

#include <cmath>
#include <set>

#include "lsalign/error.hpp"
#include "lsalign/io.hpp"

namespace lsalign {
namespace {

constexpr const char* kMetaFile = "meta.json";
constexpr const char* kDefaultEmbeddingFile = "embeddings.bin";

nlohmann::json to_json(const LabelSet& ls, const std::string& embedding_file) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& entry : ls.labels) {
    labels.push_back({{"id", entry.id}, {"display", entry.display}, {"prompts", entry.prompts}});
  }
  return {{"name", ls.name},
          {"dim", ls.dim},
          {"normalized", ls.normalized},
          {"embedding_file", embedding_file},
          {"labels", std::move(labels)}};
}

template <typename T>
T field(const nlohmann::json& doc, const char* key, const std::string& origin) {
  if (!doc.contains(key)) {
    fail(ErrorCode::ParseError, origin + ": missing field '" + key + "'");
  }
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, origin + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorCode::DimMismatch, "matrix data has " + std::to_string(data_.size()) +
                                     " entries, expected " + std::to_string(rows_ * cols_));
  }
}

void validate_labelset(const LabelSet& labels, const EmbeddingMatrix& emb) {
  if (labels.dim < 1) {
    fail(ErrorCode::DimMismatch, labels.name + ": dim must be >= 1");
  }
  if (emb.rows() != labels.size() || emb.cols() != labels.dim) {
    fail(ErrorCode::DimMismatch,
         labels.name + ": embeddings are " + std::to_string(emb.rows()) + "x" +
             std::to_string(emb.cols()) + " but label set has " + std::to_string(labels.size()) +
             " labels of dim " + std::to_string(labels.dim));
  }
  std::set<std::string> seen;
  for (const auto& entry : labels.labels) {
    if (entry.id.empty() || entry.display.empty()) {
      fail(ErrorCode::ParseError, labels.name + ": label id and display must be non-empty");
    }
    if (!seen.insert(entry.id).second) {
      fail(ErrorCode::DuplicateLabel, labels.name + ": duplicate label id '" + entry.id + "'");
    }
  }
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    double sq = 0.0;
    for (float x : emb.row(i)) {
      if (!std::isfinite(x)) {
        fail(ErrorCode::NonFiniteEntry, labels.name + ": row " + std::to_string(i) +
                                            " contains a non-finite value");
      }
      sq += static_cast<double>(x) * x;
    }
    if (labels.normalized && std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
      fail(ErrorCode::NotNormalized, labels.name + ": row " + std::to_string(i) +
                                         " is not unit norm (|t|=" +
                                          std::to_string(std::sqrt(sq)) + ")");
    }
  }
}

LabeledEmbeddings load_labelset(const std::filesystem::path& dir) {
  const auto meta_path = dir / kMetaFile;
  if (!std::filesystem::exists(meta_path)) {
    fail(ErrorCode::MissingFile, meta_path.string());
  }
  const auto meta = io::read_json(meta_path);
  const std::string origin = meta_path.string();

  LabelSet ls;
  ls.name = field<std::string>(meta, "name", origin);
  ls.dim = field<std::size_t>(meta, "dim", origin);
  ls.normalized = field<bool>(meta, "normalized", origin);
  const auto emb_file = meta.contains("embedding_file")
                            ? field<std::string>(meta, "embedding_file", origin)
                            : std::string(kDefaultEmbeddingFile);
  for (const auto& item : field<nlohmann::json>(meta, "labels", origin)) {
    LabelEntry entry;
    entry.id = field<std::string>(item, "id", origin);
    entry.display = field<std::string>(item, "display", origin);
    if (item.contains("prompts")) {
      entry.prompts = field<std::vector<std::string>>(item, "prompts", origin);
    }
    ls.labels.push_back(std::move(entry));
  }

  const auto bin_path = dir / emb_file;
  if (!std::filesystem::exists(bin_path)) {
    fail(ErrorCode::MissingFile, bin_path.string());
  }
  auto block = io::read_lseb(bin_path);
  if (block.rows != ls.size() || block.cols != ls.dim) {
    fail(ErrorCode::DimMismatch, bin_path.string() + ": header " + std::to_string(block.rows) +
                                     "x" + std::to_string(block.cols) + " disagrees with " +
                                     std::to_string(ls.size()) + " labels of dim " +
                                     std::to_string(ls.dim));
  }
  EmbeddingMatrix emb(block.rows, block.cols, std::move(block.data));
  validate_labelset(ls, emb);
  return {std::move(ls), std::move(emb)};
}

void save_labelset(const LabelSet& labels, const EmbeddingMatrix& emb,
                   const std::filesystem::path& dir) {
  validate_labelset(labels, emb);
  io::ensure_directory(dir);
  io::write_lseb(dir / kDefaultEmbeddingFile, static_cast<std::uint32_t>(emb.rows()),
                 static_cast<std::uint32_t>(emb.cols()), emb.data());
  io::write_json(dir / kMetaFile, to_json(labels, kDefaultEmbeddingFile));
}

std::vector<float> average_prompt_embeddings(std::span<const std::vector<float>> per_prompt) {
  if (per_prompt.empty()) {
    fail(ErrorCode::EmptyPromptList, "no prompt embeddings to average");
  }
  const std::size_t dim = per_prompt.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& vec : per_prompt) {
    if (vec.size() != dim) {
      fail(ErrorCode::DimMismatch, "prompt embeddings have inconsistent dimensions");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::isfinite(vec[j])) {
        fail(ErrorCode::NonFiniteEntry, "prompt embedding contains a non-finite value");
      }
      mean[j] += vec[j];
    }
  }
  double sq = 0.0;
  for (double& x : mean) {
    x /= static_cast<double>(per_prompt.size());
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm == 0.0) {
    fail(ErrorCode::ZeroVector, "prompt embeddings average to the zero vector");
  }
  std::vector<float> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(mean[j] / norm);
  return out;
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (float x : m.row(i)) sq += static_cast<double>(x) * x;
    if (sq == 0.0) {
      fail(ErrorCode::ZeroRow, "row " + std::to_string(i) + " is all zeros");
    }
    const double norm = std::sqrt(sq);
    auto dst = out.row(i);
    auto src = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = static_cast<float>(src[j] / norm);
  }
  return out;
}

std::string embedding_checksum(const EmbeddingMatrix& m) {
  return io::fnv1a_hex(io::encode_lseb(static_cast<std::uint32_t>(m.rows()),
                                       static_cast<std::uint32_t>(m.cols()), m.data()));
}

}  // namespace lsalign
