#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "lsalign/embedding_store.hpp"
#include "lsalign/error.hpp"
#include "lsalign/random.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lsalign_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

template <class F>
lsalign::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const lsalign::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected lsalign::Error, nothing was thrown");
}

inline std::vector<double> random_vector(lsalign::StreamRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline lsalign::EmbeddingMatrix random_embeddings(lsalign::StreamRng& rng, std::size_t n,
                                                  std::size_t dim, bool unit = true) {
  std::vector<float> data(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    std::vector<double> row(dim);
    for (auto& x : row) {
      x = rng.normal();
      sq += x * x;
    }
    const double scale = unit ? 1.0 / std::sqrt(sq) : 1.0;
    for (std::size_t j = 0; j < dim; ++j) data[i * dim + j] = static_cast<float>(row[j] * scale);
  }
  return lsalign::EmbeddingMatrix(n, dim, std::move(data));
}

inline lsalign::LabelSet make_labels(const std::string& name, std::size_t n, std::size_t dim,
                                     bool normalized = true, const std::string& prefix = "l") {
  lsalign::LabelSet ls;
  ls.name = name;
  ls.dim = dim;
  ls.normalized = normalized;
  for (std::size_t i = 0; i < n; ++i) {
    ls.labels.push_back({prefix + std::to_string(i), prefix + " " + std::to_string(i), {}});
  }
  return ls;
}

inline lsalign::LabeledEmbeddings random_labelset(const std::string& name, std::size_t n,
                                                  std::size_t dim, std::uint64_t seed) {
  lsalign::StreamRng rng{seed, n, dim};
  return {make_labels(name, n, dim), random_embeddings(rng, n, dim)};
}

}  // namespace testutil
