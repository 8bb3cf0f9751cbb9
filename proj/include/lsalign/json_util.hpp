#pragma once

#include <set>
#include <string>
#include <utility>

#include "json.hpp"
#include "lsalign/error.hpp"

namespace lsalign {

// Reads fields from a JSON object and rejects any key that was never asked
// for. `path` prefixes error messages, e.g. "synth.datasets[1]".
class StrictObject {
 public:
  StrictObject(const nlohmann::json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) {
      fail(ErrorCode::BadConfig, "'" + path_ + "' must be a JSON object");
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    known_.insert(key);
    if (!doc_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    known_.insert(key);
    if (!doc_.contains(key)) {
      fail(ErrorCode::BadConfig, "missing key '" + qualified(key) + "'");
    }
    return convert<T>(key);
  }

  const nlohmann::json& child(const std::string& key) {
    known_.insert(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return doc_.contains(key) ? doc_.at(key) : kEmpty;
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Call after all reads.
  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!known_.count(key)) {
        fail(ErrorCode::BadConfig, "unknown key '" + qualified(key) + "'");
      }
    }
  }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    try {
      return doc_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::BadConfig, "key '" + qualified(key) + "': " + e.what());
    }
  }

  const nlohmann::json& doc_;
  std::string path_;
  std::set<std::string> known_;
};

}  // namespace lsalign
