#pragma once

#include "orca/llm/provider.h"

namespace orca::llm {

/// Chat-completions / embeddings client for OpenAI-compatible endpoints.
/// Each call times out after config.timeout_seconds and is retried
/// config.max_retries times with exponential backoff.
class OpenAiProvider final : public Provider {
 public:
  explicit OpenAiProvider(ProviderConfig config);

  std::string id() const override { return "openai:" + config_.model_id; }
  std::size_t embedding_dimension() const override { return config_.embedding_dimension; }

 protected:
  std::string complete(const ChatRequest& request) const override;
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  std::string api_key() const;

  ProviderConfig config_;
};

}  // namespace orca::llm
