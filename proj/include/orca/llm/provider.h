#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace orca::llm {

struct ContextBlock {
  std::string label;
  std::string body;
};

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  std::vector<ContextBlock> context_blocks;
  /// Name of the structured shape expected back, e.g. "RouterVerdict".
  std::optional<std::string> output_schema_hint;
  double temperature = 0.0;

  ChatRequest& add_context(std::string label, std::string body);
  const ContextBlock* find_context(std::string_view label) const;

  /// Single-string rendering used for scripted matching and for transports
  /// that accept one user message.
  std::string render() const;
  std::string render_user() const;
};

struct ChatResponse {
  std::string text;
  std::optional<nlohmann::json> parsed;
  std::string provider_id;
  std::int64_t latency_ms = 0;
  /// 2 when the first reply failed to parse and a repair retry was issued.
  int calls = 1;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;

  bool operator==(const EmbeddingVector&) const = default;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Uniform boundary for model calls. Subclasses supply the transport;
/// this class owns validation, structured parsing, and the repair retry.
class Provider {
 public:
  virtual ~Provider() = default;

  ChatResponse chat(const ChatRequest& request) const;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const;

  virtual std::string id() const = 0;
  virtual std::size_t embedding_dimension() const = 0;

 protected:
  virtual std::string complete(const ChatRequest& request) const = 0;
  virtual std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const = 0;
  virtual bool reports_latency() const { return true; }
};

struct ProviderConfig {
  std::string kind = "mock";  // mock | real
  std::string model_id = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string embedding_model_id = "text-embedding-3-small";
  std::string mock_script_path;
  std::string base_url = "https://api.openai.com";
  std::size_t embedding_dimension = 1536;
  int timeout_seconds = 60;
  int max_retries = 2;
};

ProviderConfig provider_config_from_json(const nlohmann::json& j);
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

}  // namespace orca::llm
