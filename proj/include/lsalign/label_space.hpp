#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsalign/embedding_store.hpp"

namespace lsalign {

struct SourceInfo {
  std::string dataset;
  std::size_t count = 0;
  std::size_t offset = 0;

  bool operator==(const SourceInfo&) const = default;
};

struct UnifiedLabel {
  std::size_t global_index = 0;
  std::string dataset;
  std::size_t local_index = 0;
  std::string id;
  std::string display;

  bool operator==(const UnifiedLabel&) const = default;
};

// Disjoint union of K label sets. Labels are never merged: two datasets that
// both name a class "person" contribute two distinct entries.
struct UnifiedLabelSpace {
  std::vector<SourceInfo> sources;
  std::vector<UnifiedLabel> entries;
  std::size_t dim = 0;
  EmbeddingMatrix embeddings;

  std::size_t size() const { return entries.size(); }
  const SourceInfo& source(const std::string& dataset) const;
  // Checksum of the label layout and the embedding payload.
  std::string checksum() const;
};

UnifiedLabelSpace concat_label_spaces(std::span<const LabeledEmbeddings> sets);
// Concatenates already-unified spaces, keeping every source block in order.
UnifiedLabelSpace concat_unified(std::span<const UnifiedLabelSpace> spaces);

// A test-time label space. Seen-label views carry the global indices they
// select from a unified space; external views carry fresh embeddings only.
// Embedding rows are copied bit-exactly from their origin.
struct SubspaceView {
  std::string name;
  std::vector<std::size_t> selected;  // empty for external views
  std::vector<std::string> label_ids;
  EmbeddingMatrix embeddings;
  bool external = false;

  std::size_t size() const { return label_ids.size(); }
};

SubspaceView subspace(const UnifiedLabelSpace& space, const std::string& dataset);
SubspaceView full_view(const UnifiedLabelSpace& space);
// Builds a view from arbitrary global indices (in the given order).
SubspaceView select_labels(const UnifiedLabelSpace& space, std::span<const std::size_t> indices,
                           std::string name);
SubspaceView external_subspace(const LabelSet& labels, const EmbeddingMatrix& emb,
                               std::size_t model_dim);

// Persisted as a labelset directory (ids qualified as "<dataset>/<id>" so they
// stay unique) plus sources.json with (dataset, count, offset) triples.
void save_unified(const UnifiedLabelSpace& space, const std::filesystem::path& dir);
UnifiedLabelSpace load_unified(const std::filesystem::path& dir);

}  // namespace lsalign
