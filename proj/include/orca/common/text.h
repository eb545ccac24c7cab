#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace orca::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);
bool icontains(std::string_view haystack, std::string_view needle);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Lowercase alphanumeric word tokens; underscores and punctuation split words.
std::vector<std::string> word_tokens(std::string_view s);

/// Truncates to at most max_bytes without cutting a UTF-8 code point.
std::string utf8_truncate(std::string_view s, std::size_t max_bytes);

/// Sentences are segments terminated by '.', '?' or '!'. A trailing
/// unterminated fragment counts as a sentence when it contains letters.
std::vector<std::string> sentences(std::string_view s);

/// Formats a double with up to `digits` significant digits, no trailing zeros.
std::string fmt_num(double value, int digits = 6);

}  // namespace orca::text
