#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "llmdmd/fitting.hpp"
#include "llmdmd/variables.hpp"

namespace llmdmd {

/// Everything the prompt's task contract is rendered from.
struct PromptContract {
  TargetKind loop = TargetKind::Differential;
  std::vector<SignalInfo> states;
  VariableLibrary library;
};

std::string render_contract(const PromptContract& contract);

/// Contract, then each example (canonical text and score) in the given
/// order, then an empty stub naming the targets.
std::string build_prompt(const PromptContract& contract, const std::vector<ScoredSkeleton>& examples,
                         const std::vector<std::string>& targets);

struct GenerationRequest {
  std::string prompt;
  int n = 4;
  double temperature = 1.2;
  std::chrono::milliseconds timeout{60000};
  int max_tokens = 1024;
  int attempts = 3;
  std::chrono::milliseconds backoff{500};

  void validate() const;
};

struct Completion {
  std::string skeleton_text;
  std::vector<Requirement> requirements;
  std::string raw;
  bool requirements_malformed = false;
};

/// Extracts the first ```skeleton fenced block and the first ```requirements
/// (or ```json) block. Never throws.
Completion parse_completion(std::string_view raw);

/// Retryable failure (network error, 5xx, malformed response body).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No completions could be obtained.
class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  /// Returns up to `req.n` raw completion strings.
  virtual std::vector<std::string> complete(const GenerationRequest& req) = 0;
};

/// Replays a script of batches, one batch per call. Not thread-safe.
class MockBackend : public GeneratorBackend {
 public:
  explicit MockBackend(std::vector<std::vector<std::string>> batches) : batches_(std::move(batches)) {}
  /// Script file: JSON array of batches, each an array of raw completions.
  static MockBackend from_file(const std::filesystem::path& path);

  std::vector<std::string> complete(const GenerationRequest& req) override;
  std::size_t calls() const { return next_; }

 private:
  std::vector<std::vector<std::string>> batches_;
  std::size_t next_ = 0;
};

/// OpenAI-compatible chat-completions client.
class OpenAIBackend : public GeneratorBackend {
 public:
  struct Options {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
  };

  explicit OpenAIBackend(Options options);
  std::vector<std::string> complete(const GenerationRequest& req) override;

  /// Request body for the chat-completions endpoint.
  static std::string request_body(const Options& options, const GenerationRequest& req);
  /// Message contents of every choice in a response body. Throws TransportError.
  static std::vector<std::string> parse_response(std::string_view body);

 private:
  Options options_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Calls the backend, retrying transport failures with exponential backoff.
/// Throws BackendUnavailable when nothing could be obtained.
std::vector<Completion> generate(const GenerationRequest& req, GeneratorBackend& backend, const Sleeper& sleep = {});

}  // namespace llmdmd
