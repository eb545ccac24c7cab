#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "orca/llm/openai_provider.h"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "orca/common/error.h"

namespace orca::llm {

OpenAiProvider::OpenAiProvider(ProviderConfig config) : config_(std::move(config)) {}

std::string OpenAiProvider::api_key() const {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (!key || !*key) fail(ErrorCode::ProviderUnavailable, "environment variable " + config_.api_key_env + " is not set");
  return key;
}

nlohmann::json OpenAiProvider::post(const std::string& path, const nlohmann::json& body) const {
  const std::string key = api_key();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::seconds(1 << (attempt - 1)));
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers = {{"Authorization", "Bearer " + key}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      fail(ErrorCode::ProviderUnavailable, "authentication rejected (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) fail(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(res->status) + ": " + res->body);
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::ProviderUnavailable, "malformed provider response");
    return j;
  }
  fail(ErrorCode::ProviderUnavailable, "request failed after retries: " + last_error);
}

std::string OpenAiProvider::complete(const ChatRequest& request) const {
  nlohmann::json body = {
      {"model", config_.model_id},
      {"temperature", request.temperature},
      {"messages",
       {{{"role", "system"}, {"content", request.system_text}}, {{"role", "user"}, {"content", request.render_user()}}}},
  };
  auto j = post("/v1/chat/completions", body);
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ProviderUnavailable, std::string("unexpected chat response shape: ") + e.what());
  }
}

std::vector<EmbeddingVector> OpenAiProvider::embed_texts(const std::vector<std::string>& texts) const {
  nlohmann::json body = {{"model", config_.embedding_model_id}, {"input", texts}};
  auto j = post("/v1/embeddings", body);
  std::vector<EmbeddingVector> out(texts.size());
  try {
    for (const auto& item : j.at("data")) {
      auto idx = item.at("index").get<std::size_t>();
      if (idx >= out.size()) continue;
      out[idx] = {item.at("embedding").get<std::vector<double>>(), config_.embedding_model_id};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ProviderUnavailable, std::string("unexpected embedding response shape: ") + e.what());
  }
  return out;
}

}  // namespace orca::llm
