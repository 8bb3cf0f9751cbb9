#include "lsalign/label_space.hpp"

#include <set>

#include "lsalign/error.hpp"
#include "lsalign/io.hpp"

namespace lsalign {
namespace {

constexpr const char* kSourcesFile = "sources.json";
constexpr const char* kUnifiedName = "unified";

void check_unique_datasets(const std::vector<SourceInfo>& sources) {
  std::set<std::string> names;
  for (const auto& src : sources) {
    if (!names.insert(src.dataset).second) {
      fail(ErrorCode::DuplicateDataset, "dataset '" + src.dataset + "' appears twice");
    }
  }
}

}  // namespace

const SourceInfo& UnifiedLabelSpace::source(const std::string& dataset) const {
  for (const auto& src : sources) {
    if (src.dataset == dataset) return src;
  }
  fail(ErrorCode::UnknownDataset, "no dataset named '" + dataset + "' in the unified space");
}

std::string UnifiedLabelSpace::checksum() const {
  std::string layout;
  for (const auto& src : sources) {
    layout += src.dataset + ":" + std::to_string(src.count) + ";";
  }
  for (const auto& e : entries) layout += e.id + "\n";
  return io::fnv1a_hex(layout + embedding_checksum(embeddings));
}

UnifiedLabelSpace concat_label_spaces(std::span<const LabeledEmbeddings> sets) {
  if (sets.empty()) {
    fail(ErrorCode::EmptyInput, "at least one label set is required");
  }
  UnifiedLabelSpace out;
  out.dim = sets.front().first.dim;
  std::size_t total = 0;
  for (const auto& [labels, emb] : sets) {
    validate_labelset(labels, emb);
    if (labels.dim != out.dim) {
      fail(ErrorCode::DimMismatch, "label set '" + labels.name + "' has dim " +
                                       std::to_string(labels.dim) + ", expected " +
                                       std::to_string(out.dim));
    }
    out.sources.push_back({labels.name, labels.size(), total});
    total += labels.size();
  }
  check_unique_datasets(out.sources);

  std::vector<float> data;
  data.reserve(total * out.dim);
  out.entries.reserve(total);
  for (const auto& [labels, emb] : sets) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto& entry = labels.labels[i];
      out.entries.push_back({out.entries.size(), labels.name, i, entry.id, entry.display});
    }
    data.insert(data.end(), emb.data().begin(), emb.data().end());
  }
  out.embeddings = EmbeddingMatrix(total, out.dim, std::move(data));
  return out;
}

UnifiedLabelSpace concat_unified(std::span<const UnifiedLabelSpace> spaces) {
  if (spaces.empty()) {
    fail(ErrorCode::EmptyInput, "at least one unified space is required");
  }
  UnifiedLabelSpace out;
  out.dim = spaces.front().dim;
  std::vector<float> data;
  for (const auto& space : spaces) {
    if (space.dim != out.dim) {
      fail(ErrorCode::DimMismatch, "unified spaces disagree on embedding dim");
    }
    const std::size_t base = out.entries.size();
    for (const auto& src : space.sources) {
      out.sources.push_back({src.dataset, src.count, src.offset + base});
    }
    for (const auto& entry : space.entries) {
      UnifiedLabel copy = entry;
      copy.global_index += base;
      out.entries.push_back(std::move(copy));
    }
    data.insert(data.end(), space.embeddings.data().begin(), space.embeddings.data().end());
  }
  check_unique_datasets(out.sources);
  out.embeddings = EmbeddingMatrix(out.entries.size(), out.dim, std::move(data));
  return out;
}

SubspaceView select_labels(const UnifiedLabelSpace& space, std::span<const std::size_t> indices,
                           std::string name) {
  SubspaceView view;
  view.name = std::move(name);
  std::set<std::size_t> seen;
  std::vector<float> data;
  data.reserve(indices.size() * space.dim);
  for (std::size_t g : indices) {
    if (g >= space.size()) {
      fail(ErrorCode::IndexOutOfRange, "global index " + std::to_string(g) + " >= " +
                                           std::to_string(space.size()));
    }
    if (!seen.insert(g).second) {
      fail(ErrorCode::DuplicateLabel, "global index " + std::to_string(g) + " selected twice");
    }
    view.selected.push_back(g);
    view.label_ids.push_back(space.entries[g].id);
    auto row = space.embeddings.row(g);
    data.insert(data.end(), row.begin(), row.end());
  }
  view.embeddings = EmbeddingMatrix(indices.size(), space.dim, std::move(data));
  return view;
}

SubspaceView subspace(const UnifiedLabelSpace& space, const std::string& dataset) {
  const auto& src = space.source(dataset);
  std::vector<std::size_t> indices(src.count);
  for (std::size_t i = 0; i < src.count; ++i) indices[i] = src.offset + i;
  return select_labels(space, indices, dataset);
}

SubspaceView full_view(const UnifiedLabelSpace& space) {
  std::vector<std::size_t> indices(space.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return select_labels(space, indices, kUnifiedName);
}

SubspaceView external_subspace(const LabelSet& labels, const EmbeddingMatrix& emb,
                               std::size_t model_dim) {
  validate_labelset(labels, emb);
  if (labels.dim != model_dim) {
    fail(ErrorCode::DimMismatch, "external label set '" + labels.name + "' has dim " +
                                     std::to_string(labels.dim) + ", model expects " +
                                     std::to_string(model_dim));
  }
  SubspaceView view;
  view.name = labels.name;
  view.external = true;
  for (const auto& entry : labels.labels) view.label_ids.push_back(entry.id);
  view.embeddings = emb;
  return view;
}

void save_unified(const UnifiedLabelSpace& space, const std::filesystem::path& dir) {
  LabelSet flat;
  flat.name = kUnifiedName;
  flat.dim = space.dim;
  for (const auto& e : space.entries) {
    flat.labels.push_back({e.dataset + "/" + e.id, e.display, {}});
  }
  save_labelset(flat, space.embeddings, dir);

  nlohmann::json sources = nlohmann::json::array();
  for (const auto& src : space.sources) {
    sources.push_back({{"dataset", src.dataset}, {"count", src.count}, {"offset", src.offset}});
  }
  io::write_json(dir / kSourcesFile, {{"n", space.size()}, {"sources", std::move(sources)}});
}

UnifiedLabelSpace load_unified(const std::filesystem::path& dir) {
  auto [flat, emb] = load_labelset(dir);
  const auto doc = io::read_json(dir / kSourcesFile);

  UnifiedLabelSpace out;
  out.dim = flat.dim;
  std::size_t expected_offset = 0;
  try {
    for (const auto& item : doc.at("sources")) {
      SourceInfo src{item.at("dataset").get<std::string>(), item.at("count").get<std::size_t>(),
                     item.at("offset").get<std::size_t>()};
      if (src.offset != expected_offset) {
        fail(ErrorCode::DimMismatch, "sources.json offsets are not contiguous");
      }
      expected_offset += src.count;
      out.sources.push_back(std::move(src));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, (dir / kSourcesFile).string() + ": " + e.what());
  }
  if (expected_offset != flat.size()) {
    fail(ErrorCode::DimMismatch, "sources.json covers " + std::to_string(expected_offset) +
                                     " labels, labelset has " + std::to_string(flat.size()));
  }
  check_unique_datasets(out.sources);

  for (const auto& src : out.sources) {
    const std::string prefix = src.dataset + "/";
    for (std::size_t i = 0; i < src.count; ++i) {
      const auto& entry = flat.labels[src.offset + i];
      if (entry.id.compare(0, prefix.size(), prefix) != 0) {
        fail(ErrorCode::ParseError, "label '" + entry.id + "' is not qualified by dataset '" +
                                        src.dataset + "'");
      }
      out.entries.push_back(
          {src.offset + i, src.dataset, i, entry.id.substr(prefix.size()), entry.display});
    }
  }
  out.embeddings = std::move(emb);
  return out;
}

}  // namespace lsalign
