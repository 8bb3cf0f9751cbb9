#include "lsalign/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "lsalign/error.hpp"
#include "lsalign/io.hpp"
#include "lsalign/parallel.hpp"

namespace lsalign {
namespace {

constexpr const char* kMetaFile = "simmeta.json";

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimMismatch, "cosine of vectors with lengths " + std::to_string(a.size()) +
                                     " and " + std::to_string(b.size()));
  }
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a[k], y = b[k];
    if (!std::isfinite(x) || !std::isfinite(y)) {
      fail(ErrorCode::NonFiniteEntry, "cosine input contains a non-finite value");
    }
    dot += x * y;
    aa += x * x;
    bb += y * y;
  }
  if (aa == 0.0 || bb == 0.0) {
    fail(ErrorCode::ZeroVector, "cosine of a zero vector");
  }
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

SimilarityRow normalize_cosine_row(std::span<const double> cos_row, std::size_t self) {
  SimilarityRow out;
  out.values.assign(cos_row.size(), 1.0f);
  out.row_min = *std::min_element(cos_row.begin(), cos_row.end());
  // beta_i = cos(t_i, t_i) = 1
  const double range = 1.0 - out.row_min;
  if (range < kDegenerateRowRange) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t j = 0; j < cos_row.size(); ++j) {
    if (j == self) continue;
    const double s = (cos_row[j] - out.row_min) / range;
    out.values[j] = static_cast<float>(std::clamp(s, 0.0, 1.0));
  }
  return out;
}

SimilarityRow similarity_row(std::size_t i, const EmbeddingMatrix& emb) {
  if (i >= emb.rows()) {
    fail(ErrorCode::IndexOutOfRange, "row " + std::to_string(i) + " >= " +
                                         std::to_string(emb.rows()));
  }
  std::vector<double> cos_row(emb.rows());
  for (std::size_t j = 0; j < emb.rows(); ++j) {
    cos_row[j] = (j == i) ? 1.0 : cosine(emb.row(i), emb.row(j));
  }
  return normalize_cosine_row(cos_row, i);
}

SimilarityMatrix build_similarity_matrix(const EmbeddingMatrix& emb) {
  if (emb.rows() == 0) {
    fail(ErrorCode::EmptyInput, "similarity matrix of an empty label space");
  }
  for (float x : emb.data()) {
    if (!std::isfinite(x)) {
      fail(ErrorCode::NonFiniteEntry, "embedding matrix contains a non-finite value");
    }
  }
  const std::size_t n = emb.rows();
  SimilarityMatrix sim;
  sim.n = n;
  sim.data.resize(n * n);
  sim.row_min.resize(n);
  std::vector<char> degenerate(n, 0);
  parallel_for(n, [&](std::size_t i) {
    auto row = similarity_row(i, emb);
    std::copy(row.values.begin(), row.values.end(), sim.data.begin() + i * n);
    sim.row_min[i] = row.row_min;
    degenerate[i] = row.degenerate ? 1 : 0;
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (degenerate[i]) sim.epsilon_rows.push_back(i);
  }
  sim.source_checksum = embedding_checksum(emb);
  return sim;
}

void save_similarity(const SimilarityMatrix& sim, const std::filesystem::path& path) {
  if (path.has_parent_path()) io::ensure_directory(path.parent_path());
  io::write_lseb(path, static_cast<std::uint32_t>(sim.n), static_cast<std::uint32_t>(sim.n),
                 sim.data);
  const auto bytes = io::read_bytes(path);
  io::write_json(path.parent_path() / kMetaFile,
                 {{"n", sim.n},
                  {"matrix_file", path.filename().string()},
                  {"matrix_checksum", io::fnv1a_hex(bytes)},
                  {"embedding_checksum", sim.source_checksum},
                  {"epsilon_rows", sim.epsilon_rows},
                  {"row_min", sim.row_min}});
}

SimilarityMatrix load_similarity(const std::filesystem::path& path) {
  auto block = io::read_lseb(path);
  if (block.rows != block.cols) {
    fail(ErrorCode::DimMismatch, path.string() + ": similarity matrix is not square");
  }
  const auto meta = io::read_json(path.parent_path() / kMetaFile);
  SimilarityMatrix sim;
  sim.n = block.rows;
  sim.data = std::move(block.data);
  try {
    sim.source_checksum = meta.at("embedding_checksum").get<std::string>();
    sim.epsilon_rows = meta.at("epsilon_rows").get<std::vector<std::size_t>>();
    sim.row_min = meta.at("row_min").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "simmeta.json: " + std::string(e.what()));
  }
  if (sim.row_min.size() != sim.n) {
    fail(ErrorCode::DimMismatch, "simmeta.json row_min has the wrong length");
  }
  return sim;
}

}  // namespace lsalign
