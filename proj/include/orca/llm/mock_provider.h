#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "orca/llm/provider.h"

namespace orca::llm {

struct MockEntry {
  /// Substring of the rendered prompt, or "*" to match anything.
  std::string matcher;
  std::string response;
};

/// Scripted replies for MockProvider.
///
/// File format (line oriented):
///
///     # comment
///     SEED 42
///     DELAY 50                 (milliseconds slept per chat call)
///     MATCH task:router
///     RESPOND {"kind": "causal"}
///     MATCH *
///     RESPOND <<<
///     multi-line body
///     >>>
///     DEFAULT <<<              (reply used when nothing in the queue matches;
///     not json                  never consumed)
///     >>>
struct MockScript {
  std::vector<MockEntry> queue;
  std::uint64_t embedding_seed = 0;
  std::optional<std::string> default_response;
  int delay_ms = 0;

  MockScript& add(std::string matcher, std::string response);

  static MockScript parse(const std::string& script_text);
  static MockScript load(const std::string& path);
};

struct MockCall {
  std::string prompt;
  std::string response;
};

/// Deterministic provider for tests and offline runs. The reply queue is
/// consumed front-to-back: each call takes the first entry whose matcher
/// occurs in the rendered prompt.
class MockProvider final : public Provider {
 public:
  static constexpr std::size_t kDimension = 64;

  explicit MockProvider(MockScript script = {});

  std::string id() const override { return "mock"; }
  std::size_t embedding_dimension() const override { return kDimension; }

  void push(std::string matcher, std::string response);
  std::size_t remaining() const;
  std::vector<MockCall> calls() const;
  std::size_t call_count() const;

  /// The deterministic hash embedding used by embed().
  static EmbeddingVector hash_embedding(const std::string& text, std::uint64_t seed);

 protected:
  std::string complete(const ChatRequest& request) const override;
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const override;
  bool reports_latency() const override { return false; }

 private:
  mutable std::mutex mutex_;
  mutable std::deque<MockEntry> queue_;
  mutable std::vector<MockCall> calls_;
  std::uint64_t seed_;
  std::optional<std::string> default_response_;
  int delay_ms_;
};

}  // namespace orca::llm
