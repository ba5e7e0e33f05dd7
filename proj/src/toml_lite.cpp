#include "pseudolabel/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Drops a trailing comment, respecting string literals.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

int bracket_balance(std::string_view s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (!in_string && c == '[') {
      ++depth;
    } else if (!in_string && c == ']') {
      --depth;
    }
  }
  return depth;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  json parse() {
    json v = value();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(fmt::format("TOML line {}: {}", line_, what), line_);
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  json value() {
    skip_ws();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '[') return array();
    if (c == '"') return string();
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  json array() {
    ++pos_;  // '['
    json arr = json::array();
    while (true) {
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
      else if (pos_ < text_.size() && text_[pos_] != ']') fail("expected ',' or ']' in array");
    }
  }

  json string() {
    ++pos_;  // '"'
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("dangling escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(fmt::format("unsupported escape \\{}", e));
        }
      }
      out.push_back(c);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    std::string token(text_.substr(start, pos_ - start));
    std::erase(token, '_');
    if (token.empty()) fail("missing value");
    const bool is_float = token.find_first_of(".eE") != std::string::npos ||
                          token == "inf" || token == "+inf" || token == "-inf" || token == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* first = token.data() + (token.front() == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size())
        fail(fmt::format("invalid value '{}'", token));
      return v;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) fail(fmt::format("invalid number '{}'", token));
      return v;
    } catch (const std::logic_error&) {
      fail(fmt::format("invalid number '{}'", token));
    }
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_dotted(std::string_view name, std::size_t line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = name.find('.', start);
    std::string part(trim(name.substr(start, dot == std::string_view::npos ? dot : dot - start)));
    if (part.empty()) throw FormatError(fmt::format("TOML line {}: empty table name", line), line);
    parts.push_back(std::move(part));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

json* descend(json& root, const std::vector<std::string>& path, std::size_t line) {
  json* node = &root;
  for (const auto& key : path) {
    json& child = (*node)[key];
    if (child.is_null()) child = json::object();
    if (child.is_array()) {
      if (child.empty() || !child.back().is_object())
        throw FormatError(fmt::format("TOML line {}: '{}' is not a table", line, key), line);
      node = &child.back();
    } else if (child.is_object()) {
      node = &child;
    } else {
      throw FormatError(fmt::format("TOML line {}: '{}' is not a table", line, key), line);
    }
  }
  return node;
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  json* table = &root;

  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string_view line = trim(strip_comment(lines[i]));
    if (line.empty()) continue;

    if (line.starts_with("[[")) {
      if (!line.ends_with("]]"))
        throw FormatError(fmt::format("TOML line {}: malformed array-of-tables header", line_no), line_no);
      auto path = split_dotted(line.substr(2, line.size() - 4), line_no);
      const std::string leaf = path.back();
      path.pop_back();
      json* parent = descend(root, path, line_no);
      json& arr = (*parent)[leaf];
      if (arr.is_null()) arr = json::array();
      if (!arr.is_array())
        throw FormatError(fmt::format("TOML line {}: '{}' is not an array of tables", line_no, leaf), line_no);
      arr.push_back(json::object());
      table = &arr.back();
      continue;
    }
    if (line.starts_with("[")) {
      if (!line.ends_with("]"))
        throw FormatError(fmt::format("TOML line {}: malformed table header", line_no), line_no);
      table = descend(root, split_dotted(line.substr(1, line.size() - 2), line_no), line_no);
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError(fmt::format("TOML line {}: expected key = value", line_no), line_no);
    std::string key(trim(line.substr(0, eq)));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw FormatError(fmt::format("TOML line {}: empty key", line_no), line_no);
    std::string value(trim(line.substr(eq + 1)));
    while (bracket_balance(value) > 0 && i + 1 < lines.size()) {
      value += ' ';
      value += trim(strip_comment(lines[++i]));
    }
    if (table->contains(key))
      throw FormatError(fmt::format("TOML line {}: duplicate key '{}'", line_no, key), line_no);
    (*table)[key] = ValueParser(value, line_no).parse();
  }
  return root;
}

json load_toml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_toml(ss.str());
  } catch (const FormatError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace pseudolabel
