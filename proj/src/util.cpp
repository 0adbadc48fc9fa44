#include "evolgym/util.hpp"

#include <cctype>

namespace evolgym::util {

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string lower(std::string_view text) {
  std::string result(text);
  for (char& c : result) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return result;
}

std::string normalize_ws(std::string_view text) {
  std::string result;
  bool pending_space = false;
  for (const char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !result.empty();
      continue;
    }
    if (pending_space) {
      result.push_back(' ');
      pending_space = false;
    }
    result.push_back(c);
  }
  return result;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::vector<bool> numeric;
  std::string current;
  bool current_numeric = true;
  auto flush = [&] {
    if (current.empty()) return;
    tokens.push_back(current);
    numeric.push_back(current_numeric);
    current.clear();
    current_numeric = true;
  };
  for (const char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
      if (!std::isdigit(c)) current_numeric = false;
    } else {
      flush();
    }
  }
  flush();

  std::vector<std::string> fused;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!fused.empty() && numeric[i] && !tokens[i].empty()) {
      // Fuse "8, 6" style coordinate runs into "8_6".
      const std::size_t prev = i - 1;
      if (numeric[prev] && fused.back().find_first_not_of("0123456789_") == std::string::npos) {
        fused.back() += "_" + tokens[i];
        continue;
      }
    }
    fused.push_back(tokens[i]);
  }
  return fused;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string result;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) result += sep;
    result += parts[i];
  }
  return result;
}

}  // namespace evolgym::util
