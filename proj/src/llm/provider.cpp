#include "orca/llm/provider.h"

#include <chrono>
#include <cmath>

#include "orca/common/error.h"
#include "orca/common/text.h"
#include "orca/llm/mock_provider.h"
#include "orca/llm/openai_provider.h"
#include "orca/llm/structured.h"

namespace orca::llm {

ChatRequest& ChatRequest::add_context(std::string label, std::string body) {
  for (auto& block : context_blocks) {
    if (block.label == label) {
      block.body = std::move(body);
      return *this;
    }
  }
  context_blocks.push_back({std::move(label), std::move(body)});
  return *this;
}

const ContextBlock* ChatRequest::find_context(std::string_view label) const {
  for (const auto& block : context_blocks)
    if (block.label == label) return &block;
  return nullptr;
}

std::string ChatRequest::render_user() const {
  std::string out;
  for (const auto& block : context_blocks) {
    out += "### " + block.label + "\n" + block.body + "\n\n";
  }
  out += user_text;
  return out;
}

std::string ChatRequest::render() const { return system_text + "\n\n" + render_user(); }

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  double dot = 0, na = 0, nb = 0;
  std::size_t n = std::min(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ChatResponse Provider::chat(const ChatRequest& request) const {
  require(!text::trim(request.user_text).empty(), "chat: user_text must be non-empty");
  require(request.temperature >= 0.0 && request.temperature <= 1.0, "chat: temperature outside [0,1]");
  for (std::size_t i = 0; i < request.context_blocks.size(); ++i)
    for (std::size_t j = i + 1; j < request.context_blocks.size(); ++j)
      require(request.context_blocks[i].label != request.context_blocks[j].label,
              "chat: duplicate context label '" + request.context_blocks[i].label + "'");

  auto start = std::chrono::steady_clock::now();
  ChatResponse response;
  response.provider_id = id();
  response.text = complete(request);

  if (request.output_schema_hint) {
    const std::string& hint = *request.output_schema_hint;
    std::string why = "no JSON object found";
    auto parsed = extract_json(response.text);
    if (parsed && conforms(*parsed, hint, &why)) {
      response.parsed = std::move(parsed);
    } else {
      ChatRequest repair = request;
      repair.add_context("previous_reply", response.text);
      repair.user_text += "\n\nYour previous reply could not be used as a " + hint + " object (" + why +
                          "). Reply again with only the JSON object inside a ```json fenced block.";
      response.text = complete(repair);
      response.calls = 2;
      parsed = extract_json(response.text);
      if (!parsed || !conforms(*parsed, hint, &why)) {
        fail(ErrorCode::ParseFailure, hint + ": " + why);
      }
      response.parsed = std::move(parsed);
    }
  }
  if (reports_latency()) {
    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start).count();
  }
  return response;
}

std::vector<EmbeddingVector> Provider::embed(const std::vector<std::string>& texts) const {
  require(!texts.empty(), "embed: texts must be non-empty");
  auto out = embed_texts(texts);
  if (out.size() != texts.size()) fail(ErrorCode::ProviderUnavailable, "embedding count mismatch");
  for (const auto& v : out) {
    if (v.values.size() != embedding_dimension())
      fail(ErrorCode::ProviderUnavailable, "embedding dimension mismatch");
    for (double x : v.values)
      if (!std::isfinite(x)) fail(ErrorCode::ProviderUnavailable, "non-finite embedding value");
  }
  return out;
}

ProviderConfig provider_config_from_json(const nlohmann::json& j) {
  ProviderConfig c;
  c.kind = j.value("kind", c.kind);
  c.model_id = j.value("model_id", c.model_id);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.embedding_model_id = j.value("embedding_model_id", c.embedding_model_id);
  c.mock_script_path = j.value("mock_script", c.mock_script_path);
  c.base_url = j.value("base_url", c.base_url);
  c.embedding_dimension = j.value("embedding_dimension", c.embedding_dimension);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_retries = j.value("max_retries", c.max_retries);
  return c;
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  if (config.kind == "mock") {
    MockScript script;
    if (!config.mock_script_path.empty()) script = MockScript::load(config.mock_script_path);
    return std::make_shared<MockProvider>(std::move(script));
  }
  if (config.kind == "real") return std::make_shared<OpenAiProvider>(config);
  fail(ErrorCode::InvalidConfig, "unknown provider kind '" + config.kind + "'");
}

}  // namespace orca::llm
