#include "orca/llm/mock_provider.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "orca/common/error.h"
#include "orca/common/rng.h"
#include "orca/common/text.h"

namespace orca::llm {

MockScript& MockScript::add(std::string matcher, std::string response) {
  queue.push_back({std::move(matcher), std::move(response)});
  return *this;
}

MockScript MockScript::parse(const std::string& script_text) {
  MockScript script;
  std::istringstream in(script_text);
  std::string line;
  std::optional<std::string> matcher;
  int line_no = 0;

  auto read_body = [&](const std::string& rest) -> std::string {
    if (text::trim(rest) != "<<<") return text::trim(rest);
    std::string body;
    bool closed = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line) == ">>>") {
        closed = true;
        break;
      }
      body += line + "\n";
    }
    if (!closed) fail(ErrorCode::InvalidConfig, "mock script: unterminated <<< block");
    if (!body.empty()) body.pop_back();
    return body;
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string t = text::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto space = t.find(' ');
    std::string keyword = t.substr(0, space);
    std::string rest = space == std::string::npos ? "" : t.substr(space + 1);
    if (keyword == "SEED") {
      script.embedding_seed = std::stoull(rest);
    } else if (keyword == "DELAY") {
      script.delay_ms = std::stoi(rest);
    } else if (keyword == "MATCH") {
      matcher = text::trim(rest);
    } else if (keyword == "RESPOND") {
      if (!matcher) fail(ErrorCode::InvalidConfig, "mock script line " + std::to_string(line_no) + ": RESPOND without MATCH");
      script.add(*matcher, read_body(rest));
      matcher.reset();
    } else if (keyword == "DEFAULT") {
      script.default_response = read_body(rest);
    } else {
      fail(ErrorCode::InvalidConfig, "mock script line " + std::to_string(line_no) + ": unknown directive '" + keyword + "'");
    }
  }
  return script;
}

MockScript MockScript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read mock script " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

MockProvider::MockProvider(MockScript script)
    : queue_(script.queue.begin(), script.queue.end()),
      seed_(script.embedding_seed),
      default_response_(std::move(script.default_response)),
      delay_ms_(script.delay_ms) {}

void MockProvider::push(std::string matcher, std::string response) {
  std::lock_guard lock(mutex_);
  queue_.push_back({std::move(matcher), std::move(response)});
}

std::size_t MockProvider::remaining() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<MockCall> MockProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockProvider::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_.size();
}

std::string MockProvider::complete(const ChatRequest& request) const {
  if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
  std::string prompt = request.render();
  std::lock_guard lock(mutex_);
  for (auto it = queue_.begin(); it != queue_.end(); ++it) {
    if (it->matcher == "*" || prompt.find(it->matcher) != std::string::npos) {
      std::string response = std::move(it->response);
      queue_.erase(it);
      calls_.push_back({prompt, response});
      return response;
    }
  }
  if (default_response_) {
    calls_.push_back({prompt, *default_response_});
    return *default_response_;
  }
  if (queue_.empty()) fail(ErrorCode::ScriptExhausted, "mock script has no replies left");
  fail(ErrorCode::MockUnmatched, "no scripted reply matches the prompt");
}

EmbeddingVector MockProvider::hash_embedding(const std::string& input, std::uint64_t seed) {
  auto tokens = text::word_tokens(input);
  if (tokens.empty()) tokens.emplace_back();
  std::vector<double> acc(kDimension, 0.0);
  for (const auto& token : tokens) {
    std::uint64_t state = seed ^ fnv1a64(token);
    for (std::size_t d = 0; d < kDimension; ++d) {
      std::uint64_t x = splitmix64(state);
      acc[d] += static_cast<double>(x >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
  }
  double norm = 0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (double& v : acc) v /= norm;
  return {std::move(acc), "mock-hash-64"};
}

std::vector<EmbeddingVector> MockProvider::embed_texts(const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embedding(t, seed_));
  return out;
}

}  // namespace orca::llm
