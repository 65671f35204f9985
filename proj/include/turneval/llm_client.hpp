#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "turneval/retry.hpp"

namespace turneval {

struct CompletionRequest {
  std::string prompt;
  int max_output_tokens = 16;
  double temperature = 0.0;
  std::string backend;
};

struct CompletionResult {
  std::string text;
  std::int64_t latency_ms = 0;
  int attempt_count = 1;
  std::string backend;
};

/// A single completion attempt. Implementations signal failures with the
/// BackendError family; retry policy lives in LlmClient.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string complete_once(const CompletionRequest& request) = 0;
  /// Whether calls count against the client's in-flight limit.
  virtual bool rate_limited() const { return false; }
};

/// Deterministic offline backend: looks up sha256(prompt) (lower-case hex)
/// and falls back to `default_text`.
class OracleMockBackend final : public CompletionBackend {
 public:
  OracleMockBackend(std::map<std::string, std::string> lookup, std::string default_text);
  std::string name() const override { return "mock"; }
  std::string complete_once(const CompletionRequest& request) override;

 private:
  std::map<std::string, std::string> lookup_;
  std::string default_;
};

std::shared_ptr<CompletionBackend> make_oracle_mock(std::map<std::string, std::string> lookup,
                                                    std::string default_text);

/// Remote chat-completion service. Sends
/// {"model", "messages": [{"role": "user", "content"}], "temperature", "max_tokens"}
/// and reads choices[0].message.content.
class ChatCompletionBackend final : public CompletionBackend {
 public:
  ChatCompletionBackend(std::string url, std::string model, std::string api_key);
  std::string name() const override { return "chat:" + model_; }
  std::string complete_once(const CompletionRequest& request) override;
  bool rate_limited() const override { return true; }

 private:
  std::string url_;
  std::string model_;
  std::string api_key_;
};

/// Backend from a CLI spec:
///   mock:const:<text>
///   mock:oracle:<lookup.json>   ({"default": str, "responses": {sha256: str}})
///   chat:<model>@<url>          (key from LLM_API_KEY)
std::shared_ptr<CompletionBackend> make_backend(std::string_view spec);

/// One JSON line per successful call:
/// {"prompt_sha256", "response", "latency_ms", "attempts"}.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void append(std::string_view prompt, const CompletionResult& result);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

class LlmClient {
 public:
  struct Options {
    BackoffPolicy backoff{};
    Sleeper sleeper = real_sleeper();
    int max_in_flight = 4;
    RunLog* run_log = nullptr;
  };

  LlmClient(std::shared_ptr<CompletionBackend> backend, Options options);
  explicit LlmClient(std::shared_ptr<CompletionBackend> backend)
      : LlmClient(std::move(backend), Options{}) {}

  /// Retries transient failures with exponential backoff; throws
  /// RetriesExhaustedError, AuthError or RequestTooLongError.
  CompletionResult complete(const CompletionRequest& request);

  const CompletionBackend& backend() const { return *backend_; }
  int peak_in_flight() const { return limiter_.peak(); }

 private:
  std::shared_ptr<CompletionBackend> backend_;
  Options options_;
  ConcurrencyLimiter limiter_;
};

}  // namespace turneval
