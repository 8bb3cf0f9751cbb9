#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lsalign/embedding_store.hpp"

namespace lsalign {

// Range below which a row's cosines are considered identical.
inline constexpr double kDegenerateRowRange = 1e-8;

// Per-row min-max normalized label similarities. Row i maps cos(t_i, t_j)
// affinely onto [0, 1] with the row minimum at 0 and cos(t_i, t_i) = 1 at 1.
// Rows are normalized independently, so the matrix is generally asymmetric.
struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<float> data;
  std::vector<double> row_min;           // alpha_i actually used
  std::vector<std::size_t> epsilon_rows;  // degenerate rows, set to all ones
  std::string source_checksum;           // embedding_checksum of the input

  std::span<const float> row(std::size_t i) const { return {data.data() + i * n, n}; }
  float operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);

struct SimilarityRow {
  std::vector<float> values;
  double row_min = 0.0;
  bool degenerate = false;
};

SimilarityRow similarity_row(std::size_t i, const EmbeddingMatrix& emb);
// Applies the row normalization to a precomputed cosine row whose own entry
// sits at position `self`.
SimilarityRow normalize_cosine_row(std::span<const double> cos_row, std::size_t self);

SimilarityMatrix build_similarity_matrix(const EmbeddingMatrix& emb);

// Writes `path` (LSEB n x n) and simmeta.json beside it.
void save_similarity(const SimilarityMatrix& sim, const std::filesystem::path& path);
SimilarityMatrix load_similarity(const std::filesystem::path& path);

}  // namespace lsalign
