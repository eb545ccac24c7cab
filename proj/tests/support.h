#pragma once

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "orca/common/error.h"

namespace orca::testing {

/// Error code thrown by `fn`, or nullopt when it returns normally.
inline std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("orca-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace orca::testing

#define CHECK_CODE(expr, expected) CHECK(::orca::testing::code_of([&] { (void)(expr); }) == (expected))
