#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

// Eigen must come before httplib: a system header pulled in by httplib
// defines a macro that collides with Eigen parameter names.
#include "advedit/editor/editor.hpp"

#include <httplib.h>

namespace advedit::editor {

using nlohmann::json;

void RemoteEditorConfig::validate() const {
  if (!(timeout_s > 0.0)) throw ConfigError("remote editor: timeout must be > 0");
  if (retries < 0) throw ConfigError("remote editor: retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("remote editor: max_in_flight must be >= 1");
  for (double b : backoff_s) {
    if (b < 0.0) throw ConfigError("remote editor: backoff entries must be >= 0");
  }
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw ConfigError("remote editor: endpoint must start with http:// or https://");
  }
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const size_t scheme_end = url.find("://");
  const size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string chat_body(const RemoteEditorConfig& cfg, const std::string& prompt,
                      const std::optional<scene::BevRaster>& bev) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  if (bev) {
    const auto png = bev->to_png();
    const std::string raw(png.begin(), png.end());
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + httplib::detail::base64_encode(raw)}}}});
  }
  const json body = {{"model", cfg.model},
                     {"temperature", cfg.temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  return body.dump();
}

// Message text of a chat-completion reply, or the raw body for other shapes.
std::string reply_text(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("choices") && j["choices"].is_array() &&
      !j["choices"].empty()) {
    const json& msg = j["choices"][0].value("message", json::object());
    if (msg.contains("content") && msg["content"].is_string()) return msg["content"].get<std::string>();
  }
  return body;
}

}  // namespace

VlmEditor::VlmEditor(RemoteEditorConfig cfg, PromptMode mode) : cfg_(std::move(cfg)), mode_(mode) {
  cfg_.validate();
  if (!cfg_.api_key_env.empty()) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("remote editor: credential variable " + cfg_.api_key_env + " is not set");
    }
    api_key_ = key;
  }
}

EditorResponse VlmEditor::edit(const EditorRequest& req) {
  ++calls_;
  req.validate();
  const std::string prompt = build_prompt(req, mode_);
  const std::string body = chat_body(cfg_, prompt, req.scene.bev);
  const Url url = split_url(cfg_.endpoint);

  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0 && !cfg_.backoff_s.empty()) {
      const double wait = cfg_.backoff_s[std::min(static_cast<size_t>(attempt - 1), cfg_.backoff_s.size() - 1)];
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    ++requests_;
    const auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) continue;  // transport failure or timeout
    if (res->status >= 500) continue;
    if (res->status >= 400) break;  // client errors will not improve on retry
    try {
      EditorResponse r = parse_response(reply_text(res->body), req.n);
      last_body_ = res->body;
      ++successes_;
      return r;
    } catch (const ValidationError&) {
      continue;
    }
  }
  return mode_ == PromptMode::Edit ? fallback_response(req) : ctrv_response(req);
}

// ------------------------------------------------------------------ fixtures

std::string FixtureStore::canonical_request(const std::string& prompt, PromptMode mode) {
  return json{{"mode", mode == PromptMode::Edit ? "edit" : "generate"}, {"prompt", prompt}}.dump();
}

std::string FixtureStore::key_of(const std::string& canonical) {
  return hex64(fnv1a64(canonical));
}

void FixtureStore::put(const std::string& canonical, const std::string& body) {
  entries_[key_of(canonical)] = {canonical, body};
}

std::optional<std::string> FixtureStore::find(const std::string& canonical) const {
  const auto it = entries_.find(key_of(canonical));
  // The full request is compared, so a hash collision can only miss.
  if (it != entries_.end() && it->second.request == canonical) return it->second.body;
  return default_;
}

json FixtureStore::to_json() const {
  json entries = json::array();
  for (const auto& [key, e] : entries_) {
    entries.push_back({{"key", key}, {"request", json::parse(e.request)}, {"response", e.body}});
  }
  json out = {{"version", "vlmfix/v1"}, {"entries", entries}};
  if (default_) out["default"] = *default_;
  return out;
}

FixtureStore FixtureStore::from_json(const json& j) {
  try {
    if (j.at("version").get<std::string>() != "vlmfix/v1") {
      throw ParseError("vlmfix/v1: unsupported version '" + j.at("version").get<std::string>() + "'");
    }
    FixtureStore store;
    for (const auto& e : j.at("entries")) {
      const std::string canonical = e.at("request").dump();
      const std::string key = e.at("key").get<std::string>();
      if (key != key_of(canonical)) throw ParseError("vlmfix/v1: key does not match request " + key);
      store.entries_[key] = {canonical, e.at("response").get<std::string>()};
    }
    if (j.contains("default")) store.default_ = j.at("default").get<std::string>();
    return store;
  } catch (const json::exception& e) {
    throw ParseError(std::string("vlmfix/v1: ") + e.what());
  }
}

FixtureStore FixtureStore::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("vlmfix/v1: cannot open " + path);
  const json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ParseError("vlmfix/v1: " + path + " is not valid JSON");
  return from_json(j);
}

void FixtureStore::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("vlmfix/v1: cannot write " + path);
  f << to_json().dump(2) << "\n";
}

EditorResponse FixtureEditor::edit(const EditorRequest& req) {
  ++calls_;
  req.validate();
  const auto body = store_.find(FixtureStore::canonical_request(build_prompt(req, mode_), mode_));
  if (body) {
    try {
      return parse_response(reply_text(*body), req.n);
    } catch (const ValidationError&) {
    }
  }
  ++misses_;
  return mode_ == PromptMode::Edit ? fallback_response(req) : ctrv_response(req);
}

}  // namespace advedit::editor
