#pragma once

#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "advedit/common.hpp"

namespace advedit {

/// Reads named fields out of a JSON object, checking types, and rejects any
/// key that was never asked for once `finish()` is called.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  /// Marks `key` as known and returns its value, or nullptr when absent.
  const nlohmann::json* take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const nlohmann::json* v = take(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) fail(key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) fail(key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v->is_number_unsigned()) {
          out = v->get<T>();
          return;
        }
        if (v->get<long long>() < 0) fail(key, "a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) fail(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v->is_string()) fail(key, "a string");
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v->is_array()) fail(key, "an array of integers");
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(key, "an array of integers");
      }
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v->is_array()) fail(key, "an array of numbers");
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "an array of numbers");
      }
    }
    try {
      v->get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(ctx_ + ": unknown key '" + key + "'");
    }
  }

  const std::string& context() const { return ctx_; }

 private:
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError(ctx_ + "." + key + " must be " + what);
  }

  const nlohmann::json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

}  // namespace advedit
