#pragma once

#include <optional>
#include <set>
#include <string>

#include "json.hpp"

#include "cagsr/common/error.hpp"

namespace cagsr {

using Json = nlohmann::ordered_json;

// Reads fields out of a JSON object and rejects keys nobody asked for.
// `path` prefixes error messages ("train.ppo_epsilon").
class StrictReader {
 public:
  StrictReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where("") + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& field) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& field) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      field.reset();
      return;
    }
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string child_path(const std::string& key) const { return where(key); }

  // Throws ConfigError naming the first key that was never read.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where(it.key()) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace cagsr
