#include "llmdmd/generator.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace llmdmd {

namespace {

void render_signal(std::ostringstream& os, const SignalInfo& s) {
  os << "- " << s.name;
  if (!s.unit.empty()) os << " [" << s.unit << "]";
  if (!s.description.empty()) os << ": " << s.description;
  os << " (" << to_string(s.kind) << ")\n";
}

// Finds the body of the first fenced block whose info string is one of
// `labels`. Returns false if there is none.
bool find_fence(std::string_view text, std::initializer_list<std::string_view> labels, std::string& body) {
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    const std::size_t info_start = pos + 3;
    std::size_t info_end = text.find('\n', info_start);
    if (info_end == std::string_view::npos) return false;
    std::string_view info = text.substr(info_start, info_end - info_start);
    while (!info.empty() && (info.back() == '\r' || info.back() == ' ' || info.back() == '\t')) info.remove_suffix(1);
    while (!info.empty() && (info.front() == ' ' || info.front() == '\t')) info.remove_prefix(1);
    const std::size_t close = text.find("```", info_end + 1);
    bool wanted = false;
    for (auto l : labels) wanted = wanted || info == l;
    if (wanted) {
      const std::size_t stop = close == std::string_view::npos ? text.size() : close;
      std::string_view inner = text.substr(info_end + 1, stop - info_end - 1);
      while (!inner.empty() && std::isspace(static_cast<unsigned char>(inner.back()))) inner.remove_suffix(1);
      body = std::string(inner);
      return true;
    }
    if (close == std::string_view::npos) return false;
    pos = close + 3;
  }
  return false;
}

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

UrlParts split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const std::size_t slash = url.find('/', host_start);
  UrlParts parts;
  parts.origin = slash == std::string::npos ? url : url.substr(0, slash);
  parts.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  return parts;
}

}  // namespace

std::string render_contract(const PromptContract& contract) {
  std::ostringstream os;
  const bool de = contract.loop == TargetKind::Differential;
  os << "## Role\n";
  os << "You are a power-system dynamic modeling agent. ";
  if (de) {
    os << "Complete the differential equations dx/dt = f(x, y, u, p) that govern the state trajectories of the "
          "component described below.\n";
  } else {
    os << "Complete explicit algebraic relations y = g(x, u, p) that reproduce the algebraic variables identified "
          "for the component described below.\n";
  }
  os << "\n## Completion rules\n";
  if (de) {
    os << "- Write exactly one line per target, of the form `d<state>/dt = <expression>`.\n";
  } else {
    os << "- Write exactly one line per target, of the form `<variable> = <expression>`.\n";
  }
  os << "- Expressions may use numbers, + - * /, ^ with an integer exponent between -4 and 4, parentheses,\n"
        "  the functions sin cos tan exp log sqrt tanh abs, the symbols listed below and parameter placeholders.\n";
  os << "- Put the equations in a fenced block labelled `skeleton`.\n";
  os << "\n## States\n";
  for (const auto& s : contract.states) render_signal(os, s);
  os << "\n## Variable library\n";
  if (contract.library.empty()) {
    os << "(empty)\n";
  } else {
    for (const auto& s : contract.library.entries()) render_signal(os, s);
  }
  os << "\n## Parameters\n";
  os << "Replace every unknown numeric coefficient with a trainable placeholder p0, p1, p2, ... "
        "Placeholder values are fitted to data after you answer.\n";
  os << "\n## Requirements\n";
  os << "If the listed symbols are not enough to describe the dynamics, request additional algebraic or input "
        "variables in a fenced block labelled `requirements` holding a JSON array of objects "
        "{\"name\": ..., \"justification\": ...}.\n";
  return os.str();
}

std::string build_prompt(const PromptContract& contract, const std::vector<ScoredSkeleton>& examples,
                         const std::vector<std::string>& targets) {
  std::ostringstream os;
  os << render_contract(contract);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    os << "\n## Example " << (i + 1) << " (score " << format_number(ex.score) << ")\n";
    os << "```skeleton\n" << (ex.canonical.empty() ? serialize(ex.skeleton) : ex.canonical) << "\n```\n";
  }
  os << "\n## Target\n";
  if (contract.loop == TargetKind::Differential) {
    os << "Improve on the examples. Complete:\n";
  } else {
    os << "Improve on the examples. Give an explicit expression for each algebraic variable:\n";
  }
  os << "```skeleton\n";
  for (const auto& t : targets) os << lhs_text(contract.loop, t) << " =\n";
  os << "```\n";
  return os.str();
}

void GenerationRequest::validate() const {
  if (n < 1) throw std::invalid_argument("n_b must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (attempts < 1) throw std::invalid_argument("attempts must be >= 1");
}

Completion parse_completion(std::string_view raw) {
  Completion c;
  c.raw = std::string(raw);
  std::string body;
  if (find_fence(raw, {"skeleton"}, body)) c.skeleton_text = body;
  if (find_fence(raw, {"requirements", "json"}, body)) {
    try {
      const auto j = nlohmann::json::parse(body);
      if (!j.is_array()) throw std::runtime_error("not an array");
      for (const auto& item : j) {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) continue;
        Requirement r;
        r.name = item["name"].get<std::string>();
        if (r.name.empty()) continue;
        if (item.contains("justification") && item["justification"].is_string()) {
          r.justification = item["justification"].get<std::string>();
        }
        if (item.contains("kind") && item["kind"].is_string()) r.kind_hint = item["kind"].get<std::string>();
        c.requirements.push_back(std::move(r));
      }
    } catch (const std::exception&) {
      c.requirements.clear();
      c.requirements_malformed = true;
    }
  }
  return c;
}

MockBackend MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mock script " + path.string());
  const auto j = nlohmann::json::parse(in);
  std::vector<std::vector<std::string>> batches;
  for (const auto& batch : j) batches.push_back(batch.get<std::vector<std::string>>());
  return MockBackend(std::move(batches));
}

std::vector<std::string> MockBackend::complete(const GenerationRequest& req) {
  if (next_ >= batches_.size()) throw BackendUnavailable("mock script exhausted");
  std::vector<std::string> out = batches_[next_++];
  if (out.size() > static_cast<std::size_t>(req.n)) out.resize(static_cast<std::size_t>(req.n));
  return out;
}

OpenAIBackend::OpenAIBackend(Options options) : options_(std::move(options)) {}

std::string OpenAIBackend::request_body(const Options& options, const GenerationRequest& req) {
  nlohmann::json body = {
      {"model", options.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
      {"n", req.n},
      {"max_tokens", req.max_tokens},
  };
  return body.dump();
}

std::vector<std::string> OpenAIBackend::parse_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const std::exception& e) {
    throw TransportError(std::string("malformed response: ") + e.what());
  }
  if (!j.contains("choices") || !j["choices"].is_array()) throw TransportError("response has no choices");
  std::vector<std::string> out;
  for (const auto& choice : j["choices"]) {
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      out.push_back(choice["message"]["content"].get<std::string>());
    }
  }
  return out;
}

std::vector<std::string> OpenAIBackend::complete(const GenerationRequest& req) {
  const UrlParts url = split_url(options_.base_url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(url.path + "/chat/completions", headers, request_body(options_, req), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status >= 400 && res->status < 500) {
    throw BackendUnavailable("HTTP status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
  auto out = parse_response(res->body);
  if (out.size() > static_cast<std::size_t>(req.n)) out.resize(static_cast<std::size_t>(req.n));
  return out;
}

std::vector<Completion> generate(const GenerationRequest& req, GeneratorBackend& backend, const Sleeper& sleep) {
  req.validate();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < req.attempts; ++attempt) {
    try {
      std::vector<Completion> out;
      for (const auto& raw : backend.complete(req)) out.push_back(parse_completion(raw));
      if (out.empty()) throw BackendUnavailable("backend returned no completions");
      return out;
    } catch (const TransportError& e) {
      last_error = e.what();
      if (attempt + 1 < req.attempts) {
        const auto wait = req.backoff * (1 << attempt);
        if (sleep) {
          sleep(wait);
        } else {
          std::this_thread::sleep_for(wait);
        }
      }
    }
  }
  throw BackendUnavailable("all " + std::to_string(req.attempts) + " attempts failed: " + last_error);
}

}  // namespace llmdmd
