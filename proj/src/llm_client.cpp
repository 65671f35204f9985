#include "turneval/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "turneval/binary_io.hpp"
#include "turneval/errors.hpp"
#include "turneval/http.hpp"

namespace turneval {

using nlohmann::json;

OracleMockBackend::OracleMockBackend(std::map<std::string, std::string> lookup,
                                     std::string default_text)
    : lookup_(std::move(lookup)), default_(std::move(default_text)) {}

std::string OracleMockBackend::complete_once(const CompletionRequest& request) {
  const auto it = lookup_.find(to_hex(sha256(request.prompt)));
  return it == lookup_.end() ? default_ : it->second;
}

std::shared_ptr<CompletionBackend> make_oracle_mock(std::map<std::string, std::string> lookup,
                                                    std::string default_text) {
  return std::make_shared<OracleMockBackend>(std::move(lookup), std::move(default_text));
}

ChatCompletionBackend::ChatCompletionBackend(std::string url, std::string model,
                                             std::string api_key)
    : url_(std::move(url)), model_(std::move(model)), api_key_(std::move(api_key)) {}

std::string ChatCompletionBackend::complete_once(const CompletionRequest& request) {
  const json body = {
      {"model", model_},
      {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  std::map<std::string, std::string> headers;
  if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;
  const auto res = post_json(url_, body.dump(), headers);

  const std::string status = "HTTP " + std::to_string(res.status);
  if (res.status == 401 || res.status == 403) throw AuthError(name() + ": " + status);
  if (res.status == 429 || res.status >= 500) throw TransientError(name() + ": " + status);
  if (res.status == 413 ||
      (res.status == 400 && res.body.find("context_length") != std::string::npos)) {
    throw RequestTooLongError(name() + ": prompt rejected as too long");
  }
  if (res.status != 200) throw BackendError(name() + ": " + status + ": " + res.body, false);
  try {
    return json::parse(res.body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(name() + ": unexpected response: " + e.what(), false);
  }
}

std::shared_ptr<CompletionBackend> make_backend(std::string_view spec) {
  constexpr std::string_view kConst = "mock:const:";
  constexpr std::string_view kOracle = "mock:oracle:";
  constexpr std::string_view kChat = "chat:";
  if (spec.starts_with(kConst)) return make_oracle_mock({}, std::string(spec.substr(kConst.size())));
  if (spec.starts_with(kOracle)) {
    const std::filesystem::path path(spec.substr(kOracle.size()));
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mock lookup " + path.string());
    try {
      const auto j = json::parse(in);
      std::map<std::string, std::string> lookup;
      const auto responses = j.value("responses", json::object());
      for (const auto& [k, v] : responses.items()) {
        lookup.emplace(k, v.get<std::string>());
      }
      return make_oracle_mock(std::move(lookup), j.value("default", std::string("3.0")));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  if (spec.starts_with(kChat)) {
    const auto rest = spec.substr(kChat.size());
    const auto at = rest.find('@');
    if (at == std::string_view::npos) throw DataError("chat backend needs chat:<model>@<url>");
    const char* key = std::getenv("LLM_API_KEY");
    return std::make_shared<ChatCompletionBackend>(std::string(rest.substr(at + 1)),
                                                   std::string(rest.substr(0, at)),
                                                   key ? key : "");
  }
  throw DataError("unknown backend `" + std::string(spec) + "`");
}

RunLog::RunLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw DataError("cannot open run log " + path.string());
}

void RunLog::append(std::string_view prompt, const CompletionResult& result) {
  const json line = {
      {"prompt_sha256", to_hex(sha256(prompt))},
      {"response", result.text},
      {"latency_ms", result.latency_ms},
      {"attempts", result.attempt_count},
  };
  std::lock_guard lock(mu_);
  out_ << line.dump() << '\n';
  out_.flush();
}

LlmClient::LlmClient(std::shared_ptr<CompletionBackend> backend, Options options)
    : backend_(std::move(backend)), options_(std::move(options)), limiter_(options_.max_in_flight) {
  if (!backend_) throw DataError("LlmClient needs a backend");
}

CompletionResult LlmClient::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw DataError("empty prompt");
  if (request.max_output_tokens < 1) throw DataError("max_output_tokens must be >= 1");
  if (request.temperature < 0.0) throw DataError("temperature must be >= 0");

  const auto start = std::chrono::steady_clock::now();
  CompletionResult result;
  result.backend = backend_->name();
  result.text = with_retries(
      options_.backoff, options_.sleeper,
      [&] {
        if (!backend_->rate_limited()) return backend_->complete_once(request);
        ConcurrencyLimiter::Guard guard(limiter_);
        return backend_->complete_once(request);
      },
      result.attempt_count);
  result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  if (options_.run_log) options_.run_log->append(request.prompt, result);
  return result;
}

}  // namespace turneval
