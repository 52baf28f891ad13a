#include "msvar/config.hpp"

#include <cctype>
#include <string>

#include "msvar/csv.hpp"
#include "msvar/error.hpp"

namespace msvar {
namespace {

using nlohmann::json;

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("TOML line " + std::to_string(line) + ": " + what);
  }
  bool done() const { return pos >= text.size(); }
  char peek() const { return done() ? '\0' : text[pos]; }
  void skip_blank() {
    while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos;
  }
  void skip_comment() {
    skip_blank();
    if (peek() == '#')
      while (!done() && peek() != '\n') ++pos;
  }
  void end_of_line() {
    skip_comment();
    if (done()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    ++pos;
    ++line;
  }
};

std::string parse_key(Cursor& c) {
  c.skip_blank();
  std::string key;
  if (c.peek() == '"') {
    ++c.pos;
    while (!c.done() && c.peek() != '"') key.push_back(c.text[c.pos++]);
    if (c.done()) c.fail("unterminated quoted key");
    ++c.pos;
  } else {
    while (!c.done() && (std::isalnum(static_cast<unsigned char>(c.peek())) || c.peek() == '_' ||
                         c.peek() == '-'))
      key.push_back(c.text[c.pos++]);
  }
  if (key.empty()) c.fail("expected a key");
  c.skip_blank();
  return key;
}

json parse_value(Cursor& c);

json parse_string(Cursor& c) {
  char quote = c.peek();
  ++c.pos;
  std::string out;
  while (!c.done() && c.peek() != quote) {
    char ch = c.text[c.pos++];
    if (ch == '\n') c.fail("newline in string");
    if (ch == '\\' && quote == '"') {
      char esc = c.text[c.pos++];
      switch (esc) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '\\': out.push_back('\\'); break;
        case '"': out.push_back('"'); break;
        default: c.fail("unsupported escape");
      }
    } else {
      out.push_back(ch);
    }
  }
  if (c.done()) c.fail("unterminated string");
  ++c.pos;
  return out;
}

json parse_array(Cursor& c) {
  ++c.pos;
  json arr = json::array();
  for (;;) {
    c.skip_blank();
    if (c.peek() == ']') {
      ++c.pos;
      return arr;
    }
    arr.push_back(parse_value(c));
    c.skip_blank();
    if (c.peek() == ',') {
      ++c.pos;
    } else if (c.peek() != ']') {
      c.fail("expected ',' or ']' in array");
    }
  }
}

json parse_value(Cursor& c) {
  c.skip_blank();
  char ch = c.peek();
  if (ch == '"' || ch == '\'') return parse_string(c);
  if (ch == '[') return parse_array(c);
  std::string token;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '\n' &&
         c.peek() != '#' && c.peek() != ' ' && c.peek() != '\t' && c.peek() != '\r')
    token.push_back(c.text[c.pos++]);
  if (token == "true") return true;
  if (token == "false") return false;
  std::string digits;
  for (char d : token)
    if (d != '_') digits.push_back(d);
  if (digits.empty()) c.fail("expected a value");
  bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                  digits == "nan";
  try {
    std::size_t used = 0;
    if (!is_float) {
      long long v = std::stoll(digits, &used);
      if (used == digits.size()) return v;
    } else {
      double v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::exception&) {
  }
  c.fail("cannot parse value '" + token + "'");
}

json* descend(json& root, const std::vector<std::string>& path, Cursor& c) {
  json* node = &root;
  for (const auto& part : path) {
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) c.fail("key '" + part + "' is not a table");
  }
  return node;
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) {
  json root = json::object();
  json* table = &root;
  Cursor c{text};
  while (!c.done()) {
    c.skip_blank();
    if (c.peek() == '#' || c.peek() == '\n' || c.done()) {
      c.end_of_line();
      continue;
    }
    if (c.peek() == '[') {
      ++c.pos;
      std::vector<std::string> path;
      for (;;) {
        path.push_back(parse_key(c));
        if (c.peek() == '.') {
          ++c.pos;
          continue;
        }
        if (c.peek() != ']') c.fail("expected ']' after table name");
        ++c.pos;
        break;
      }
      table = descend(root, path, c);
      c.end_of_line();
      continue;
    }
    std::vector<std::string> path{parse_key(c)};
    while (c.peek() == '.') {
      ++c.pos;
      path.push_back(parse_key(c));
    }
    if (c.peek() != '=') c.fail("expected '='");
    ++c.pos;
    std::string leaf = path.back();
    path.pop_back();
    json* target = descend(*table, path, c);
    if (target->contains(leaf)) c.fail("duplicate key '" + leaf + "'");
    (*target)[leaf] = parse_value(c);
    c.end_of_line();
  }
  return root;
}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_toml(text);
}

}  // namespace msvar
