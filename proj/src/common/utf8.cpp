#include "rar/utf8.hpp"

namespace rar::utf8 {

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0U) == 0x80U; }

}  // namespace

std::size_t sequence_length(std::string_view text, std::size_t pos) {
  const auto at = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const std::size_t remaining = text.size() - pos;
  const unsigned char c = at(pos);
  if (c < 0x80U) return 1;
  if (c >= 0xC2U && c <= 0xDFU) {
    return remaining >= 2 && is_continuation(at(pos + 1)) ? 2 : 0;
  }
  if (c >= 0xE0U && c <= 0xEFU) {
    if (remaining < 3 || !is_continuation(at(pos + 1)) || !is_continuation(at(pos + 2))) return 0;
    const unsigned char c1 = at(pos + 1);
    if (c == 0xE0U && c1 < 0xA0U) return 0;   // overlong
    if (c == 0xEDU && c1 >= 0xA0U) return 0;  // surrogates
    return 3;
  }
  if (c >= 0xF0U && c <= 0xF4U) {
    if (remaining < 4 || !is_continuation(at(pos + 1)) || !is_continuation(at(pos + 2)) ||
        !is_continuation(at(pos + 3))) {
      return 0;
    }
    const unsigned char c1 = at(pos + 1);
    if (c == 0xF0U && c1 < 0x90U) return 0;
    if (c == 0xF4U && c1 >= 0x90U) return 0;
    return 4;
  }
  return 0;
}

std::string repair(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  while (i < bytes.size()) {
    const std::size_t len = sequence_length(bytes, i);
    if (len == 0) {
      append(out, U'�');
      ++i;
    } else {
      out.append(bytes.substr(i, len));
      i += len;
    }
  }
  return out;
}

void append(std::string& out, char32_t cp) {
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = U'�';
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::size_t code_point_count(std::string_view text) {
  std::size_t n = 0;
  for (char c : text) {
    if (!is_continuation(static_cast<unsigned char>(c))) ++n;
  }
  return n;
}

std::string_view truncate(std::string_view text, std::size_t max_code_points) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_continuation(static_cast<unsigned char>(text[i]))) continue;
    if (seen == max_code_points) return text.substr(0, i);
    ++seen;
  }
  return text;
}

}  // namespace rar::utf8
