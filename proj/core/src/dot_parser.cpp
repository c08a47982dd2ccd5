#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "cotscope/graph.hpp"
#include "io.hpp"

namespace cotscope {

DotSyntaxError::DotSyntaxError(std::size_t offset, std::size_t line, std::size_t column, const std::string& what)
    : ValidationError("DOT syntax error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                      ": " + what),
      offset_(offset),
      line_(line),
      column_(column) {}

namespace {

enum class Tok { Id, LBrace, RBrace, LBracket, RBracket, Equals, Semi, Comma, Arrow, UndirectedEdge, Colon, Plus, End };

struct Token {
  Tok kind;
  std::string text;  // identifier value, unquoted
  std::size_t offset;
  bool quoted = false;
};

bool id_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool id_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

class Lexer {
 public:
  Lexer(std::string_view src, std::size_t base) : src_(src), base_(base) {}

  [[noreturn]] void fail(std::size_t local, const std::string& what) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < local && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw DotSyntaxError(base_ + local, line, col, what);
  }

  Token next() {
    skip_space_and_comments();
    if (pos_ >= src_.size()) return {Tok::End, "", pos_};
    const std::size_t start = pos_;
    const char c = src_[pos_];
    auto single = [&](Tok k) {
      ++pos_;
      return Token{k, std::string(1, c), start};
    };
    switch (c) {
      case '{': return single(Tok::LBrace);
      case '}': return single(Tok::RBrace);
      case '[': return single(Tok::LBracket);
      case ']': return single(Tok::RBracket);
      case '=': return single(Tok::Equals);
      case ';': return single(Tok::Semi);
      case ',': return single(Tok::Comma);
      case ':': return single(Tok::Colon);
      case '+': return single(Tok::Plus);
      case '"': return quoted();
      case '<': return html();
      default: break;
    }
    if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
      pos_ += 2;
      return {Tok::Arrow, "->", start};
    }
    if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
      pos_ += 2;
      return {Tok::UndirectedEdge, "--", start};
    }
    if (id_start(static_cast<unsigned char>(c))) {
      while (pos_ < src_.size() && id_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return {Tok::Id, std::string(src_.substr(start, pos_ - start)), start};
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-') {
      ++pos_;
      while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
      return {Tok::Id, std::string(src_.substr(start, pos_ - start)), start};
    }
    fail(start, std::string("unexpected character '") + c + "'");
  }

 private:
  // Only blanks between the previous newline and `at`.
  bool at_line_start(std::size_t at) const {
    while (at > 0 && (src_[at - 1] == ' ' || src_[at - 1] == '\t')) --at;
    return at == 0 || src_[at - 1] == '\n';
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '*') {
        const auto end = src_.find("*/", pos_ + 2);
        if (end == std::string_view::npos) fail(pos_, "unterminated comment");
        pos_ = end + 2;
      } else if (c == '#' && at_line_start(pos_)) {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  Token quoted() {
    const std::size_t start = pos_++;
    std::string out;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) {
        const char n = src_[pos_ + 1];
        if (n == '"') {
          out += '"';
          pos_ += 2;
          continue;
        }
        if (n == '\n') {  // line continuation
          pos_ += 2;
          continue;
        }
      }
      out += src_[pos_++];
    }
    if (pos_ >= src_.size()) fail(start, "unterminated string");
    ++pos_;
    Token t{Tok::Id, std::move(out), start};
    t.quoted = true;
    return t;
  }

  Token html() {
    const std::size_t start = pos_;
    int depth = 0;
    while (pos_ < src_.size()) {
      if (src_[pos_] == '<') ++depth;
      if (src_[pos_] == '>' && --depth == 0) {
        ++pos_;
        return {Tok::Id, std::string(src_.substr(start + 1, pos_ - start - 2)), start};
      }
      ++pos_;
    }
    fail(start, "unterminated HTML string");
  }

  std::string_view src_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

using Attrs = std::map<std::string, std::string>;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string anchor_key(std::string_view label) {
  std::string out = lower(label);
  for (auto& c : out) {
    if (c == '_' || c == '-' || c == '\n') c = ' ';
  }
  // "\n" escapes inside DOT labels
  std::size_t p;
  while ((p = out.find("\\n")) != std::string::npos) out.replace(p, 2, " ");
  return out;
}

class Parser {
 public:
  Parser(std::string_view block, std::size_t base) : lex_(block, base) { advance(); }

  ReasoningGraph parse() {
    if (cur_.kind == Tok::Id && lower(cur_.text) == "strict") advance();
    if (!(cur_.kind == Tok::Id && lower(cur_.text) == "digraph")) lex_.fail(cur_.offset, "expected 'digraph'");
    advance();
    if (cur_.kind == Tok::Id) advance();
    expect(Tok::LBrace, "'{'");
    while (cur_.kind != Tok::RBrace) {
      if (cur_.kind == Tok::End) lex_.fail(cur_.offset, "unexpected end of input, missing '}'");
      statement();
      if (cur_.kind == Tok::Semi) advance();
    }
    return finish();
  }

 private:
  void advance() { cur_ = lex_.next(); }

  void expect(Tok k, const char* what) {
    if (cur_.kind != k) lex_.fail(cur_.offset, std::string("expected ") + what + ", found '" + cur_.text + "'");
    advance();
  }

  std::string identifier(const char* what) {
    if (cur_.kind != Tok::Id) lex_.fail(cur_.offset, std::string("expected ") + what);
    std::string s = cur_.text;
    const bool q = cur_.quoted;
    advance();
    // "a" + "b" concatenation
    while (q && cur_.kind == Tok::Plus) {
      advance();
      if (cur_.kind != Tok::Id || !cur_.quoted) lex_.fail(cur_.offset, "expected string after '+'");
      s += cur_.text;
      advance();
    }
    return s;
  }

  Attrs attr_lists() {
    Attrs attrs;
    while (cur_.kind == Tok::LBracket) {
      advance();
      while (cur_.kind != Tok::RBracket) {
        std::string key = identifier("attribute name");
        expect(Tok::Equals, "'='");
        attrs[lower(key)] = identifier("attribute value");
        if (cur_.kind == Tok::Comma || cur_.kind == Tok::Semi) advance();
      }
      advance();
    }
    return attrs;
  }

  void statement() {
    if (cur_.kind == Tok::LBrace) lex_.fail(cur_.offset, "subgraphs are not supported");
    const std::size_t at = cur_.offset;
    const bool quoted = cur_.quoted;
    std::string first = identifier("statement");
    const std::string kw = quoted ? std::string() : lower(first);
    if (kw == "subgraph") lex_.fail(at, "subgraphs are not supported");
    if (kw == "graph" || kw == "node" || kw == "edge") {
      Attrs a = attr_lists();
      auto& target = kw == "graph" ? graph_attrs_ : kw == "node" ? node_defaults_ : edge_defaults_;
      for (auto& [k, v] : a) target[k] = v;
      return;
    }
    if (cur_.kind == Tok::Equals) {
      advance();
      graph_attrs_[lower(first)] = identifier("attribute value");
      return;
    }
    if (cur_.kind == Tok::Colon) lex_.fail(cur_.offset, "node ports are not supported");
    if (cur_.kind == Tok::UndirectedEdge) lex_.fail(cur_.offset, "undirected edge '--' in a digraph");
    std::vector<std::string> chain{first};
    while (cur_.kind == Tok::Arrow) {
      advance();
      if (cur_.kind == Tok::LBrace) lex_.fail(cur_.offset, "subgraph edge targets are not supported");
      chain.push_back(identifier("edge target"));
      if (cur_.kind == Tok::Colon) lex_.fail(cur_.offset, "node ports are not supported");
    }
    if (cur_.kind == Tok::UndirectedEdge) lex_.fail(cur_.offset, "undirected edge '--' in a digraph");
    Attrs a = attr_lists();
    if (chain.size() == 1) {
      auto& node = touch(first);
      for (auto& [k, v] : a) node[k] = v;
      return;
    }
    for (const auto& id : chain) touch(id);
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      std::pair<std::string, std::string> e{chain[i], chain[i + 1]};
      if (!edge_set_.insert(e).second) {
        warnings_.push_back("duplicate edge " + e.first + " -> " + e.second + " ignored");
        continue;
      }
      edges_.push_back(std::move(e));
    }
  }

  Attrs& touch(const std::string& id) {
    auto it = node_attrs_.find(id);
    if (it != node_attrs_.end()) return it->second;
    order_.push_back(id);
    return node_attrs_.emplace(id, node_defaults_).first->second;
  }

  ReasoningGraph finish() {
    ReasoningGraph g;
    g.edges = std::move(edges_);
    g.warnings = std::move(warnings_);
    for (const auto& id : order_) {
      const Attrs& a = node_attrs_.at(id);
      GraphNode n;
      n.id = id;
      auto label = a.find("label");
      n.label = label == a.end() ? id : label->second;
      auto fill = a.find("fillcolor");
      if (fill == a.end()) fill = a.find("color");
      if (fill != a.end()) n.fillcolor = fill->second;
      g.nodes.push_back(std::move(n));
    }
    for (const auto& n : g.nodes) {
      const auto key = anchor_key(n.label);
      if (g.problem_node.empty() && key.find("problem statement") != std::string::npos) {
        g.problem_node = n.id;
      } else if (!g.answer_node && key.find("final answer") != std::string::npos) {
        g.answer_node = n.id;
      }
    }
    if (g.problem_node.empty()) throw ValidationError("reasoning graph has no \"problem statement\" node");
    for (auto& n : g.nodes) {
      const std::string color = lower(n.fillcolor);
      if (color == "lightpink") {
        n.status = NodeStatus::Failed;
      } else {
        n.status = NodeStatus::Success;
        if (color != "lightblue" && !g.is_anchor(n.id)) {
          g.warnings.push_back(color.empty() ? "node " + n.id + " has no fillcolor; treated as success"
                                             : "node " + n.id + " has unknown fillcolor '" + n.fillcolor +
                                                   "'; treated as success");
        }
      }
    }
    if (!g.answer_node) g.warnings.push_back("no \"final answer\" node; answer-dependent metrics undefined");
    return g;
  }

  Lexer lex_;
  Token cur_{Tok::End, "", 0};
  Attrs graph_attrs_, node_defaults_, edge_defaults_;
  std::map<std::string, Attrs> node_attrs_;
  std::vector<std::string> order_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::set<std::pair<std::string, std::string>> edge_set_;
  std::vector<std::string> warnings_;
};

// End of the brace-balanced block starting at `open` (index of '{'), skipping
// strings and comments.
std::size_t block_end(std::string_view text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '"') {
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\') ++i;
      }
      continue;
    }
    if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
      const auto e = text.find("*/", i + 2);
      if (e == std::string_view::npos) return std::string_view::npos;
      i = e + 1;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

}  // namespace

std::optional<std::string_view> find_digraph_block(std::string_view text) {
  static const std::regex header(R"((?:\bstrict\s+)?\bdigraph\s*(?:"(?:[^"\\]|\\.)*"|[A-Za-z_0-9]+)?\s*\{)",
                                 std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, header)) return std::nullopt;
  const std::size_t start = static_cast<std::size_t>(m.position(0));
  const std::size_t open = start + static_cast<std::size_t>(m.length(0)) - 1;
  const std::size_t close = block_end(text, open);
  if (close == std::string_view::npos) return text.substr(start);  // let the parser report it
  return text.substr(start, close - start + 1);
}

ReasoningGraph parse_dot(std::string_view text) {
  auto block = find_digraph_block(text);
  if (!block) throw ValidationError("no digraph block found");
  const std::size_t base = static_cast<std::size_t>(block->data() - text.data());
  Parser parser(*block, base);
  ReasoningGraph g = parser.parse();
  g.validate();
  return g;
}

void write_graphs_jsonl(const std::vector<GraphRecord>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    io::json j;
    j["trace_id"] = r.trace_id;
    j["dot"] = r.dot;
    j["parse_warnings"] = r.parse_warnings;
    out += io::dump(j);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<GraphRecord> read_graphs_jsonl(const std::filesystem::path& path) {
  std::vector<GraphRecord> out;
  io::for_each_line(path, [&](std::size_t line, std::string_view text) {
    try {
      const auto j = io::json::parse(text);
      GraphRecord r;
      r.trace_id = j.at("trace_id").get<std::string>();
      r.dot = j.at("dot").get<std::string>();
      if (auto it = j.find("parse_warnings"); it != j.end()) r.parse_warnings = it->get<std::vector<std::string>>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cotscope
