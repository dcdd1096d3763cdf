#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "webguard/error.hpp"
#include "webguard/html/dom.hpp"

namespace webguard::html {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Replaces every invalid UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::span<const std::uint8_t> in) {
  std::string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    const std::uint8_t b = in[i];
    if (b < 0x80) {
      out += static_cast<char>(b);
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    std::uint32_t min_cp = 0;
    if ((b & 0xE0) == 0xC0) {
      len = 2, cp = b & 0x1F, min_cp = 0x80;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3, cp = b & 0x0F, min_cp = 0x800;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4, cp = b & 0x07, min_cp = 0x10000;
    }
    bool ok = len != 0 && i + len <= in.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((in[i + k] & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (in[i + k] & 0x3F);
    }
    if (ok && (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      append_utf8(out, 0xFFFD);
      ++i;
      continue;
    }
    out.append(reinterpret_cast<const char*>(in.data() + i), len);
    i += len;
  }
  return out;
}

struct NamedEntity {
  std::string_view name;
  std::uint32_t cp;
};

constexpr std::array<NamedEntity, 24> kEntities{{
    {"amp", '&'},     {"lt", '<'},       {"gt", '>'},       {"quot", '"'},
    {"apos", '\''},   {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},
    {"trade", 0x2122}, {"hellip", 0x2026}, {"mdash", 0x2014}, {"ndash", 0x2013},
    {"laquo", 0xAB},  {"raquo", 0xBB},   {"middot", 0xB7},  {"bull", 0x2022},
    {"euro", 0x20AC}, {"pound", 0xA3},   {"yen", 0xA5},     {"cent", 0xA2},
    {"sect", 0xA7},   {"deg", 0xB0},     {"times", 0xD7},   {"divide", 0xF7},
}};

// Decodes numeric references and a small set of named ones; unknown
// references are left as literal text.
std::string decode_entities(std::string_view s) {
  if (s.find('&') == std::string_view::npos) return std::string(s);
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out += s[i++];
      continue;
    }
    std::size_t j = i + 1;
    if (j < s.size() && s[j] == '#') {
      ++j;
      bool hex = j < s.size() && (s[j] == 'x' || s[j] == 'X');
      if (hex) ++j;
      std::size_t start = j;
      std::uint64_t value = 0;
      while (j < s.size() && j - start < 8) {
        char c = s[j];
        int digit = -1;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        if (digit < 0) break;
        value = value * (hex ? 16 : 10) + static_cast<std::uint64_t>(digit);
        ++j;
      }
      if (j == start) {
        out += s[i++];
        continue;
      }
      if (j < s.size() && s[j] == ';') ++j;
      append_utf8(out, value > 0x10FFFF ? 0xFFFD : static_cast<std::uint32_t>(value));
      i = j;
      continue;
    }
    std::size_t start = j;
    while (j < s.size() && j - start < 8 && (is_alpha(s[j]) || (s[j] >= '0' && s[j] <= '9'))) ++j;
    std::string_view name = s.substr(start, j - start);
    auto it = std::find_if(kEntities.begin(), kEntities.end(),
                           [&](const NamedEntity& e) { return e.name == name; });
    if (it == kEntities.end() || name.empty()) {
      out += s[i++];
      continue;
    }
    if (j < s.size() && s[j] == ';') ++j;
    append_utf8(out, it->cp);
    i = j;
  }
  return out;
}

const std::unordered_set<std::string>& void_elements() {
  static const std::unordered_set<std::string> s{
      "area", "base", "br",    "col",   "embed",  "hr",    "img",   "input",
      "link", "meta", "param", "source", "track", "wbr",   "keygen"};
  return s;
}

// Start tags that close an open <p> (HTML5 "in button scope" rule).
const std::unordered_set<std::string>& closes_p() {
  static const std::unordered_set<std::string> s{
      "address", "article", "aside", "blockquote", "details", "dialog", "div",  "dl",
      "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3",  "h4",
      "h5", "h6", "header", "hgroup", "hr", "main", "menu", "nav", "ol", "p", "pre",
      "section", "table", "ul", "li", "dd", "dt", "summary"};
  return s;
}

const std::unordered_set<std::string>& scope_boundaries() {
  static const std::unordered_set<std::string> s{
      "html", "table", "td", "th", "caption", "marquee", "object", "applet", "template"};
  return s;
}

// HTML5 "special" elements, minus address/div/p, which stop the li/dd/dt search.
const std::unordered_set<std::string>& list_item_barriers() {
  static const std::unordered_set<std::string> s{
      "applet", "area", "article", "aside", "base", "blockquote", "body", "button",
      "caption", "center", "col", "colgroup", "dl", "fieldset", "figure", "footer",
      "form", "header", "html", "iframe", "main", "marquee", "menu", "nav", "object",
      "ol", "section", "select", "table", "tbody", "td", "template", "textarea", "tfoot",
      "th", "thead", "tr", "ul"};
  return s;
}

bool is_heading(std::string_view t) {
  return t.size() == 2 && t[0] == 'h' && t[1] >= '1' && t[1] <= '6';
}

struct BuildNode {
  std::string tag;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string text;
  std::vector<std::size_t> children;
};

void append_text(std::string& dst, std::string_view raw) {
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(raw[i])) ++i;
    std::size_t start = i;
    while (i < raw.size() && !is_space(raw[i])) ++i;
    if (i > start) {
      if (!dst.empty()) dst += ' ';
      dst.append(raw.substr(start, i - start));
    }
  }
}

class TreeBuilder {
 public:
  TreeBuilder() {
    nodes_.push_back({"#document", {}, {}, {}});
    stack_.push_back(0);
  }

  void text(std::string_view raw) { append_text(nodes_[stack_.back()].text, raw); }

  // Returns true when the element was pushed (not void / self-closed).
  bool start(const std::string& tag, std::vector<std::pair<std::string, std::string>> attrs,
             bool self_closing) {
    if ((tag == "html" || tag == "body") && has_open(tag)) {
      merge_attributes(open_index(tag), attrs);
      return false;
    }
    apply_implied_end_tags(tag);
    std::size_t idx = nodes_.size();
    nodes_.push_back({tag, std::move(attrs), {}, {}});
    nodes_[stack_.back()].children.push_back(idx);
    if (self_closing || void_elements().count(tag)) return false;
    stack_.push_back(idx);
    return true;
  }

  void end(const std::string& tag) {
    // The document keeps html/body open so trailing content lands inside them.
    if (tag == "html" || tag == "body") return;
    for (std::size_t k = stack_.size(); k-- > 1;) {
      const std::string& open = nodes_[stack_[k]].tag;
      if (open == tag) {
        stack_.resize(k);
        return;
      }
      if (scope_boundaries().count(open) && !is_table_part(tag)) return;
    }
  }

  std::vector<BuildNode>& nodes() { return nodes_; }

 private:
  static bool is_table_part(std::string_view t) {
    return t == "table" || t == "tbody" || t == "thead" || t == "tfoot" || t == "tr" ||
           t == "td" || t == "th" || t == "caption";
  }

  bool has_open(const std::string& tag) const { return open_index(tag) != 0; }

  std::size_t open_index(const std::string& tag) const {
    for (std::size_t k = stack_.size(); k-- > 1;)
      if (nodes_[stack_[k]].tag == tag) return stack_[k];
    return 0;
  }

  void merge_attributes(std::size_t idx, const std::vector<std::pair<std::string, std::string>>& attrs) {
    if (idx == 0) return;
    auto& dst = nodes_[idx].attributes;
    for (const auto& kv : attrs) {
      bool present = std::any_of(dst.begin(), dst.end(), [&](const auto& e) { return e.first == kv.first; });
      if (!present) dst.push_back(kv);
    }
  }

  const std::string& current() const { return nodes_[stack_.back()].tag; }

  // Pops up to and including the nearest open `tag` if it is found before a
  // scope boundary (or a member of `barriers`, when given).
  bool close_in_scope(std::string_view tag, const std::unordered_set<std::string>* barriers) {
    for (std::size_t k = stack_.size(); k-- > 1;) {
      const std::string& open = nodes_[stack_[k]].tag;
      if (open == tag) {
        stack_.resize(k);
        return true;
      }
      if (scope_boundaries().count(open) || open == "button") return false;
      if (barriers && barriers->count(open)) return false;
    }
    return false;
  }

  void close_table_cells() {
    for (std::size_t k = stack_.size(); k-- > 1;) {
      const std::string& open = nodes_[stack_[k]].tag;
      if (open == "td" || open == "th") {
        stack_.resize(k);
        return;
      }
      if (open == "table" || open == "tr" || open == "html") return;
    }
  }

  void apply_implied_end_tags(const std::string& tag) {
    if (tag == "li") {
      close_in_scope("li", &list_item_barriers());
    } else if (tag == "dd" || tag == "dt") {
      for (std::size_t k = stack_.size(); k-- > 1;) {
        const std::string& open = nodes_[stack_[k]].tag;
        if (open == "dd" || open == "dt") {
          stack_.resize(k);
          break;
        }
        if (list_item_barriers().count(open)) break;
      }
    } else if (tag == "option") {
      if (current() == "option") stack_.pop_back();
    } else if (tag == "optgroup") {
      if (current() == "option") stack_.pop_back();
      if (current() == "optgroup") stack_.pop_back();
    } else if (tag == "td" || tag == "th") {
      close_table_cells();
    } else if (tag == "tr") {
      close_table_cells();
      if (current() == "tr") stack_.pop_back();
    } else if (tag == "tbody" || tag == "thead" || tag == "tfoot") {
      close_table_cells();
      if (current() == "tr") stack_.pop_back();
      const std::string& cur = current();
      if (cur == "tbody" || cur == "thead" || cur == "tfoot") stack_.pop_back();
    } else if (tag == "a") {
      close_in_scope("a", nullptr);
    }
    if (closes_p().count(tag)) close_in_scope("p", nullptr);
    if (is_heading(tag) && is_heading(current())) stack_.pop_back();
  }

  std::vector<BuildNode> nodes_;
  std::vector<std::size_t> stack_;
};

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < needle.size() && eq; ++k) eq = lower(hay[i + k]) == needle[k];
    if (eq) return i;
  }
  return std::string_view::npos;
}

class Tokenizer {
 public:
  Tokenizer(std::string_view src, TreeBuilder& builder) : s_(src), b_(builder) {}

  void run() {
    std::size_t text_start = 0;
    while (pos_ < s_.size()) {
      if (s_[pos_] != '<') {
        ++pos_;
        continue;
      }
      std::size_t lt = pos_;
      if (!starts_markup(lt)) {
        ++pos_;
        continue;
      }
      flush_text(text_start, lt);
      pos_ = markup(lt);
      if (!raw_tag_.empty()) raw_text();
      text_start = pos_;
    }
    flush_text(text_start, s_.size());
  }

 private:
  void flush_text(std::size_t begin, std::size_t end) {
    if (end > begin) b_.text(decode_entities(s_.substr(begin, end - begin)));
  }

  std::size_t skip_to(char c, std::size_t from) const {
    std::size_t p = s_.find(c, from);
    return p == std::string_view::npos ? s_.size() : p + 1;
  }

  // Anything else after "<" is literal text.
  bool starts_markup(std::size_t lt) const {
    if (lt + 1 >= s_.size()) return false;
    char c = s_[lt + 1];
    return c == '!' || c == '?' || c == '/' || is_alpha(c);
  }

  // Parses the construct at `lt` and returns the position after it.
  std::size_t markup(std::size_t lt) {
    std::size_t p = lt + 1;
    char c = s_[p];
    if (c == '!') {
      if (s_.substr(p, 3) == "!--") {
        std::size_t close = s_.find("-->", p + 3);
        return close == std::string_view::npos ? s_.size() : close + 3;
      }
      return skip_to('>', p);
    }
    if (c == '?') return skip_to('>', p);
    if (c == '/') {
      ++p;
      if (p < s_.size() && s_[p] == '>') return p + 1;  // "</>" is dropped
      if (p >= s_.size() || !is_alpha(s_[p])) return skip_to('>', p);
      std::size_t start = p;
      while (p < s_.size() && !is_space(s_[p]) && s_[p] != '/' && s_[p] != '>') ++p;
      std::string name = lowercase(s_.substr(start, p - start));
      b_.end(name);
      return skip_to('>', p);
    }
    std::size_t start = p;
    while (p < s_.size() && !is_space(s_[p]) && s_[p] != '/' && s_[p] != '>') ++p;
    std::string name = lowercase(s_.substr(start, p - start));
    std::vector<std::pair<std::string, std::string>> attrs;
    bool self_closing = false;
    while (p < s_.size()) {
      while (p < s_.size() && (is_space(s_[p]) || s_[p] == '/')) {
        if (s_[p] == '/') self_closing = p + 1 < s_.size() && s_[p + 1] == '>';
        ++p;
      }
      if (p >= s_.size()) break;
      if (s_[p] == '>') {
        ++p;
        break;
      }
      self_closing = false;
      std::size_t ks = p;
      // A leading '=' is part of the name, as in HTML5.
      ++p;
      while (p < s_.size() && !is_space(s_[p]) && s_[p] != '/' && s_[p] != '>' && s_[p] != '=') ++p;
      std::string key = lowercase(s_.substr(ks, p - ks));
      std::string value;
      std::size_t q = p;
      while (q < s_.size() && is_space(s_[q])) ++q;
      if (q < s_.size() && s_[q] == '=') {
        p = q + 1;
        while (p < s_.size() && is_space(s_[p])) ++p;
        if (p < s_.size() && (s_[p] == '"' || s_[p] == '\'')) {
          char quote = s_[p++];
          std::size_t vs = p;
          std::size_t ve = s_.find(quote, p);
          if (ve == std::string_view::npos) ve = s_.size();
          value = decode_entities(s_.substr(vs, ve - vs));
          p = ve < s_.size() ? ve + 1 : ve;
        } else {
          std::size_t vs = p;
          while (p < s_.size() && !is_space(s_[p]) && s_[p] != '>') ++p;
          value = decode_entities(s_.substr(vs, p - vs));
        }
      }
      bool dup = std::any_of(attrs.begin(), attrs.end(), [&](const auto& kv) { return kv.first == key; });
      if (!dup) attrs.emplace_back(std::move(key), std::move(value));
    }
    bool pushed = b_.start(name, std::move(attrs), self_closing);
    if (pushed && (name == "script" || name == "style" || name == "textarea" || name == "title" ||
                   name == "xmp" || name == "noscript" || name == "iframe" || name == "noembed")) {
      raw_tag_ = name;
    }
    return p;
  }

  // Consumes the body of a raw-text element up to its closing tag.
  void raw_text() {
    std::string close = "</" + raw_tag_;
    std::size_t end = pos_;
    for (;;) {
      end = find_ci(s_, close, end);
      if (end == std::string_view::npos) break;
      std::size_t after = end + close.size();
      if (after >= s_.size() || is_space(s_[after]) || s_[after] == '>' || s_[after] == '/') break;
      end = after;
    }
    if (end == std::string_view::npos) end = s_.size();
    std::string_view body = s_.substr(pos_, end - pos_);
    bool rcdata = raw_tag_ == "textarea" || raw_tag_ == "title";
    b_.text(rcdata ? decode_entities(body) : std::string(body));
    if (end < s_.size()) {
      b_.end(raw_tag_);
      pos_ = skip_to('>', end + close.size());
    } else {
      pos_ = s_.size();
    }
    raw_tag_.clear();
  }

  std::string_view s_;
  TreeBuilder& b_;
  std::size_t pos_ = 0;
  std::string raw_tag_;
};

}  // namespace

DomGraph parse_html(std::span<const std::uint8_t> document) {
  if (document.empty()) throw InputError("parse_html: empty document");
  std::string text = sanitize_utf8(document);
  TreeBuilder builder;
  Tokenizer(text, builder).run();
  auto& nodes = builder.nodes();

  // A single top-level element with no stray text becomes the root; anything
  // else keeps the synthetic document node.
  std::size_t root = 0;
  if (nodes[0].children.size() == 1 && nodes[0].text.empty()) root = nodes[0].children[0];

  DomGraph g;
  g.nodes.reserve(nodes.size());
  struct Frame {
    std::size_t build;
    std::string id;
    std::size_t parent;  // dfs index of parent, or SIZE_MAX
  };
  std::vector<Frame> todo{{root, "0", SIZE_MAX}};
  while (!todo.empty()) {
    Frame f = std::move(todo.back());
    todo.pop_back();
    const std::size_t dfs = g.nodes.size();
    BuildNode& bn = nodes[f.build];
    g.nodes.push_back({f.id, bn.tag, std::move(bn.attributes), std::move(bn.text), dfs});
    if (f.parent != SIZE_MAX) g.edges.push_back({f.parent, dfs});
    for (std::size_t c = bn.children.size(); c-- > 0;)
      todo.push_back({bn.children[c], f.id + "/" + std::to_string(c), dfs});
  }
  g.rebuild_adjacency();
  return g;
}

DomGraph parse_html(std::string_view document) {
  return parse_html(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(document.data()),
                                                  document.size()));
}

}  // namespace webguard::html
