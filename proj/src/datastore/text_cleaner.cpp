#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rar/datastore.hpp"
#include "rar/error.hpp"
#include "rar/utf8.hpp"

namespace rar::datastore {

namespace {

constexpr std::string_view kNbsp = "\xC2\xA0";

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

// Accumulates text into paragraphs, collapsing whitespace as it goes.
class ParagraphBuilder {
 public:
  void append_text(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
      if (is_ascii_space(text[i])) {
        pending_space_ = true;
        ++i;
        continue;
      }
      if (text.substr(i, kNbsp.size()) == kNbsp) {
        pending_space_ = true;
        i += kNbsp.size();
        continue;
      }
      if (pending_space_ && !current_.empty()) current_.push_back(' ');
      pending_space_ = false;
      current_.push_back(text[i]);
      ++i;
    }
  }

  void soft_break() { pending_space_ = true; }

  void paragraph_break() {
    if (!current_.empty()) paragraphs_.push_back(std::move(current_));
    current_.clear();
    pending_space_ = false;
  }

  std::string finish() {
    paragraph_break();
    std::string out;
    for (std::size_t i = 0; i < paragraphs_.size(); ++i) {
      if (i > 0) out.push_back('\n');
      out += paragraphs_[i];
    }
    return out;
  }

 private:
  std::vector<std::string> paragraphs_;
  std::string current_;
  bool pending_space_ = false;
};

const std::map<std::string_view, char32_t>& named_entities() {
  static const std::map<std::string_view, char32_t> table = {
      {"amp", U'&'},      {"lt", U'<'},       {"gt", U'>'},       {"quot", U'"'},
      {"apos", U'\''},    {"nbsp", 0xA0},     {"ensp", 0x2002},   {"emsp", 0x2003},
      {"thinsp", 0x2009}, {"ndash", 0x2013},  {"mdash", 0x2014},  {"hellip", 0x2026},
      {"lsquo", 0x2018},  {"rsquo", 0x2019},  {"sbquo", 0x201A},  {"ldquo", 0x201C},
      {"rdquo", 0x201D},  {"bdquo", 0x201E},  {"laquo", 0xAB},    {"raquo", 0xBB},
      {"bull", 0x2022},   {"middot", 0xB7},   {"copy", 0xA9},     {"reg", 0xAE},
      {"trade", 0x2122},  {"deg", 0xB0},      {"plusmn", 0xB1},   {"times", 0xD7},
      {"divide", 0xF7},   {"micro", 0xB5},    {"para", 0xB6},     {"sect", 0xA7},
      {"cent", 0xA2},     {"pound", 0xA3},    {"yen", 0xA5},      {"euro", 0x20AC},
      {"frac12", 0xBD},   {"frac14", 0xBC},   {"frac34", 0xBE},   {"sup1", 0xB9},
      {"sup2", 0xB2},     {"sup3", 0xB3},     {"iexcl", 0xA1},    {"iquest", 0xBF},
      {"prime", 0x2032},  {"Prime", 0x2033},  {"larr", 0x2190},   {"rarr", 0x2192},
      {"uarr", 0x2191},   {"darr", 0x2193},   {"minus", 0x2212},  {"le", 0x2264},
      {"ge", 0x2265},     {"ne", 0x2260},     {"asymp", 0x2248},  {"infin", 0x221E},
      {"Agrave", 0xC0},   {"Aacute", 0xC1},   {"Acirc", 0xC2},    {"Atilde", 0xC3},
      {"Auml", 0xC4},     {"Aring", 0xC5},    {"AElig", 0xC6},    {"Ccedil", 0xC7},
      {"Egrave", 0xC8},   {"Eacute", 0xC9},   {"Ecirc", 0xCA},    {"Euml", 0xCB},
      {"Igrave", 0xCC},   {"Iacute", 0xCD},   {"Icirc", 0xCE},    {"Iuml", 0xCF},
      {"Ntilde", 0xD1},   {"Ograve", 0xD2},   {"Oacute", 0xD3},   {"Ocirc", 0xD4},
      {"Otilde", 0xD5},   {"Ouml", 0xD6},     {"Oslash", 0xD8},   {"Ugrave", 0xD9},
      {"Uacute", 0xDA},   {"Ucirc", 0xDB},    {"Uuml", 0xDC},     {"Yacute", 0xDD},
      {"szlig", 0xDF},    {"agrave", 0xE0},   {"aacute", 0xE1},   {"acirc", 0xE2},
      {"atilde", 0xE3},   {"auml", 0xE4},     {"aring", 0xE5},    {"aelig", 0xE6},
      {"ccedil", 0xE7},   {"egrave", 0xE8},   {"eacute", 0xE9},   {"ecirc", 0xEA},
      {"euml", 0xEB},     {"igrave", 0xEC},   {"iacute", 0xED},   {"icirc", 0xEE},
      {"iuml", 0xEF},     {"ntilde", 0xF1},   {"ograve", 0xF2},   {"oacute", 0xF3},
      {"ocirc", 0xF4},    {"otilde", 0xF5},   {"ouml", 0xF6},     {"oslash", 0xF8},
      {"ugrave", 0xF9},   {"uacute", 0xFA},   {"ucirc", 0xFB},    {"uuml", 0xFC},
      {"yacute", 0xFD},   {"yuml", 0xFF},
  };
  return table;
}

// Decodes character references. Unknown or unterminated references are kept
// verbatim; soft hyphens and zero-width characters are dropped.
std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out.push_back(text[i++]);
      continue;
    }
    const std::size_t semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 32) {
      out.push_back(text[i++]);
      continue;
    }
    const std::string_view body = text.substr(i + 1, semi - i - 1);
    std::optional<char32_t> cp;
    if (!body.empty() && body[0] == '#') {
      const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      const std::string_view digits = body.substr(hex ? 2 : 1);
      if (!digits.empty() && digits.size() <= 8 &&
          std::all_of(digits.begin(), digits.end(),
                      [hex](char c) { return hex ? std::isxdigit(static_cast<unsigned char>(c)) != 0
                                                 : std::isdigit(static_cast<unsigned char>(c)) != 0; })) {
        const unsigned long value = std::stoul(std::string(digits), nullptr, hex ? 16 : 10);
        cp = (value == 0 || value > 0x10FFFF) ? U'�' : static_cast<char32_t>(value);
      }
    } else {
      const auto& table = named_entities();
      if (auto it = table.find(body); it != table.end()) {
        cp = it->second;
      } else if (body == "shy" || body == "zwj" || body == "zwnj" || body == "lrm" || body == "rlm") {
        i = semi + 1;
        continue;
      }
    }
    if (!cp) {
      out.push_back(text[i++]);
      continue;
    }
    utf8::append(out, *cp);
    i = semi + 1;
  }
  return out;
}

// Elements whose entire subtree is dropped.
bool is_skipped_element(std::string_view name) {
  static constexpr std::array<std::string_view, 13> kSkipped = {
      "script", "style",  "noscript", "template", "head",   "nav",   "header",
      "footer", "aside", "svg",      "iframe",   "button", "select"};
  return std::find(kSkipped.begin(), kSkipped.end(), name) != kSkipped.end();
}

// Elements whose content is raw text (no nested markup).
bool is_raw_text_element(std::string_view name) {
  return name == "script" || name == "style" || name == "textarea" || name == "title" ||
         name == "xmp";
}

bool is_block_element(std::string_view name) {
  static constexpr std::array<std::string_view, 42> kBlock = {
      "p",       "div",     "br",      "hr",      "li",       "ul",      "ol",
      "dl",      "dt",      "dd",      "h1",      "h2",       "h3",      "h4",
      "h5",      "h6",      "table",   "tr",      "thead",    "tbody",   "tfoot",
      "caption", "section", "article", "main",    "blockquote", "pre",   "figure",
      "figcaption", "address", "body",  "html",   "title",    "option",  "form",
      "fieldset", "details", "summary", "center", "legend",   "textarea", "menu"};
  return std::find(kBlock.begin(), kBlock.end(), name) != kBlock.end();
}

bool is_cell_element(std::string_view name) { return name == "td" || name == "th"; }

bool is_void_element(std::string_view name) {
  static constexpr std::array<std::string_view, 14> kVoid = {
      "area", "base", "br",   "col",  "embed",  "hr",    "img",
      "input", "link", "meta", "param", "source", "track", "wbr"};
  return std::find(kVoid.begin(), kVoid.end(), name) != kVoid.end();
}

bool looks_like_markup(std::string_view s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] != '<') continue;
    const char c = s[i + 1];
    if (is_ascii_alpha(c) || c == '/' || c == '!' || c == '?') return true;
  }
  return false;
}

// Case-insensitive search for `</name` starting at `from`.
std::size_t find_closing_tag(std::string_view s, std::string_view name, std::size_t from) {
  for (std::size_t i = from; i + 2 + name.size() <= s.size(); ++i) {
    if (s[i] != '<' || s[i + 1] != '/') continue;
    bool match = true;
    for (std::size_t k = 0; k < name.size(); ++k) {
      if (lower(s[i + 2 + k]) != name[k]) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

// Index one past the '>' closing a tag that opens at `from`, honouring quoted
// attribute values.
std::size_t skip_tag_body(std::string_view s, std::size_t from) {
  char quote = 0;
  for (std::size_t i = from; i < s.size(); ++i) {
    const char c = s[i];
    if (quote != 0) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      return i + 1;
    }
  }
  return s.size();
}

class HtmlTextExtractor {
 public:
  explicit HtmlTextExtractor(std::string_view html) : s_(html) {}

  std::string run() {
    std::size_t i = 0;
    while (i < s_.size()) {
      if (s_[i] == '<') {
        i = consume_markup(i);
      } else {
        std::size_t next = i + 1;
        while (next < s_.size() && !starts_markup(next)) ++next;
        emit_text(s_.substr(i, next - i));
        i = next;
      }
    }
    return out_.finish();
  }

 private:
  bool starts_markup(std::size_t i) const {
    if (s_[i] != '<' || i + 1 >= s_.size()) return false;
    const char c = s_[i + 1];
    return is_ascii_alpha(c) || c == '/' || c == '!' || c == '?';
  }

  void emit_text(std::string_view raw) {
    if (skip_depth_ > 0) return;
    out_.append_text(decode_entities(raw));
  }

  std::size_t consume_markup(std::size_t i) {
    if (!starts_markup(i)) {
      emit_text(s_.substr(i, 1));
      return i + 1;
    }
    if (s_.compare(i, 4, "<!--") == 0) {
      const std::size_t end = s_.find("-->", i + 4);
      return end == std::string_view::npos ? s_.size() : end + 3;
    }
    if (s_[i + 1] == '!' || s_[i + 1] == '?') return skip_tag_body(s_, i + 2);

    const bool closing = s_[i + 1] == '/';
    std::size_t p = i + (closing ? 2 : 1);
    std::string name;
    while (p < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p])) != 0 ||
                             s_[p] == '-' || s_[p] == ':')) {
      name.push_back(lower(s_[p]));
      ++p;
    }
    const std::size_t end = skip_tag_body(s_, p);
    const bool self_closing = end >= 2 && s_[end - 2] == '/' && s_[end - 1] == '>';
    if (name.empty()) return end;

    if (closing) {
      close_element(name);
      return end;
    }
    open_element(name);
    if (self_closing || is_void_element(name)) {
      if (is_skipped_element(name)) close_element(name);
      return end;
    }
    if (is_raw_text_element(name)) {
      const std::size_t close = find_closing_tag(s_, name, end);
      const std::size_t content_end = close == std::string_view::npos ? s_.size() : close;
      emit_text(s_.substr(end, content_end - end));
      if (close == std::string_view::npos) return s_.size();
      close_element(name);
      return skip_tag_body(s_, close + 2);
    }
    return end;
  }

  void open_element(const std::string& name) {
    if (name == "body") {
      // An unterminated <head> ends where the body starts.
      skip_depth_ -= std::exchange(open_skipped_["head"], 0);
    }
    if (is_skipped_element(name)) {
      ++open_skipped_[name];
      ++skip_depth_;
      return;
    }
    layout(name);
  }

  void close_element(const std::string& name) {
    if (is_skipped_element(name)) {
      if (auto& count = open_skipped_[name]; count > 0) {
        --count;
        --skip_depth_;
      }
      return;
    }
    layout(name);
  }

  void layout(const std::string& name) {
    if (skip_depth_ > 0) return;
    if (is_block_element(name)) {
      out_.paragraph_break();
    } else if (is_cell_element(name)) {
      out_.soft_break();
    }
  }

  std::string_view s_;
  ParagraphBuilder out_;
  std::map<std::string, int> open_skipped_;
  int skip_depth_ = 0;
};

std::string normalize_plain_text(std::string_view text) {
  ParagraphBuilder out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    out.append_text(text.substr(start, nl - start));
    out.paragraph_break();
    start = nl + 1;
  }
  return out.finish();
}

}  // namespace

std::string clean_document(std::string_view raw_html) {
  const std::string input = utf8::repair(raw_html);
  std::string text = looks_like_markup(input) ? HtmlTextExtractor(input).run()
                                              : normalize_plain_text(input);
  if (text.empty()) throw Error(ErrorCode::kEmptyAfterCleaning, "no visible text remains");
  return text;
}

}  // namespace rar::datastore
