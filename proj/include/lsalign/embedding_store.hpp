#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lsalign {

struct LabelEntry {
  std::string id;
  std::string display;
  std::vector<std::string> prompts;  // may be empty for fixture data

  bool operator==(const LabelEntry&) const = default;
};

// One dataset's label set. Label order is the canonical row order of the
// matching EmbeddingMatrix.
struct LabelSet {
  std::string name;
  std::vector<LabelEntry> labels;
  std::size_t dim = 0;
  bool normalized = false;

  std::size_t size() const { return labels.size(); }
  bool operator==(const LabelSet&) const = default;
};

// Row-major n x D float32 matrix; row i is the text embedding of label i.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols);
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  const std::vector<float>& data() const { return data_; }
  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

using LabeledEmbeddings = std::pair<LabelSet, EmbeddingMatrix>;

inline constexpr double kUnitNormTolerance = 1e-5;

// Checks the label-set/matrix invariants (unique non-empty ids, finite rows,
// unit rows when `normalized`, consistent dimensions). Throws Error.
void validate_labelset(const LabelSet& labels, const EmbeddingMatrix& emb);

LabeledEmbeddings load_labelset(const std::filesystem::path& dir);
void save_labelset(const LabelSet& labels, const EmbeddingMatrix& emb,
                   const std::filesystem::path& dir);

// Mean of the prompt embeddings, then rescaled to unit L2 norm.
std::vector<float> average_prompt_embeddings(std::span<const std::vector<float>> per_prompt);

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m);

// Checksum of the `LSEB` encoding of a matrix; equal to the checksum of the
// embeddings.bin file it would be written to.
std::string embedding_checksum(const EmbeddingMatrix& m);

}  // namespace lsalign
