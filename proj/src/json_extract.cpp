#include "damagepipe/json_extract.hpp"

namespace damagepipe {

namespace {

// End (exclusive) of the brace-balanced span starting at text[start] == '{'.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      return i + 1;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<nlohmann::json> extract_first_json_object(std::string_view text) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    auto end = balanced_end(text, pos);
    if (!end) continue;
    auto doc = nlohmann::json::parse(text.substr(pos, *end - pos), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
  }
  return std::nullopt;
}

}  // namespace damagepipe
