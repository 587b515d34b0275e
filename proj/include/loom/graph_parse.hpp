/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===--------------------------- graph_parse.hpp -------------------------===//
//
// Parser for the textual graph form produced by print_graph; print then
// parse is the identity on verified modules.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "loom/graph.hpp"
#include "loom/graph_print.hpp"

#include <cctype>
#include <map>
#include <string>
#include <vector>

namespace loom {

namespace detail {

struct Token {
  enum Kind { Ident, ValueName, SymbolName, String, Number, Punct, End };
  Kind kind;
  std::string text;
  int line = 1;
  int col = 1;
};

class Lexer {
public:
  explicit Lexer(std::string text) : text_(std::move(text)) { advance(); }

  const Token &peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void error(const std::string &msg, const Token &at) const {
    fail("SyntaxError",
         std::to_string(at.line) + ":" + std::to_string(at.col) + ": " + msg);
  }

  /// Raw slice up to (not including) the next '>'; consumes the '>'.
  /// Used for type and dense payload bodies, which contain no nested '<'.
  std::string read_until_gt() {
    std::string out;
    // the current token was already lexed; rewind to its start
    pos_ = tok_start_;
    line_ = tok_.line;
    col_ = tok_.col;
    while (pos_ < text_.size() && text_[pos_] != '>') {
      out += text_[pos_];
      bump(text_[pos_]);
      ++pos_;
    }
    if (pos_ >= text_.size())
      fail("SyntaxError", std::to_string(line_) + ":" + std::to_string(col_) + ": unterminated '<'");
    bump('>');
    ++pos_;
    advance();
    return out;
  }

private:
  void bump(char c) {
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') {
          bump(text_[pos_]);
          ++pos_;
        }
        continue;
      }
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r')
        break;
      bump(c);
      ++pos_;
    }
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  void advance() {
    skip_ws();
    tok_start_ = pos_;
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= text_.size()) {
      tok_ = Token{Token::End, "", line_, col_};
      return;
    }
    char c = text_[pos_];

    auto take = [&](std::size_t n) {
      std::string s = text_.substr(pos_, n);
      for (std::size_t i = 0; i < n; ++i)
        bump(text_[pos_ + i]);
      pos_ += n;
      return s;
    };

    if (c == '%' || c == '@') {
      Token::Kind k = c == '%' ? Token::ValueName : Token::SymbolName;
      take(1);
      std::string name;
      while (pos_ < text_.size() && ident_char(text_[pos_]))
        name += take(1);
      if (name.empty())
        error("expected a name after '" + std::string(1, c) + "'", tok_);
      tok_.kind = k;
      tok_.text = name;
      return;
    }
    if (c == '"') {
      take(1);
      std::string s;
      while (pos_ < text_.size() && text_[pos_] != '"')
        s += take(1);
      if (pos_ >= text_.size())
        error("unterminated string", tok_);
      take(1);
      tok_.kind = Token::String;
      tok_.text = s;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < text_.size() &&
         (std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
          text_.compare(pos_ + 1, 3, "inf") == 0))) {
      std::string num;
      if (c == '-')
        num += take(1);
      if (text_.compare(pos_, 3, "inf") == 0) {
        num += take(3);
      } else {
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
                text_[pos_] == 'e' || text_[pos_] == 'E' ||
                ((text_[pos_] == '+' || text_[pos_] == '-') &&
                 (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
          num += take(1);
      }
      tok_.kind = Token::Number;
      tok_.text = num;
      return;
    }
    if (ident_start(c)) {
      std::string id;
      while (pos_ < text_.size() && ident_char(text_[pos_]))
        id += take(1);
      if (id == "inf" || id == "nan") {
        tok_.kind = Token::Number;
        tok_.text = id;
        return;
      }
      tok_.kind = Token::Ident;
      tok_.text = id;
      return;
    }
    if (c == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
      tok_.kind = Token::Punct;
      tok_.text = take(2);
      return;
    }
    tok_.kind = Token::Punct;
    tok_.text = take(1);
  }

  std::string text_;
  std::size_t pos_ = 0;
  std::size_t tok_start_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

class GraphParser {
public:
  explicit GraphParser(std::string text) : lex_(std::move(text)) {}

  GraphModule parse() {
    expect_ident("module");
    expect_punct("{");
    GraphModule m;
    bool saw_entry = false;
    while (true) {
      const Token &t = lex_.peek();
      if (t.kind == Token::Ident && t.text == "func") {
        m.functions.push_back(parse_function());
      } else if (t.kind == Token::String && t.text == "onnx.EntryPoint") {
        m.entry_point = parse_entry_point();
        saw_entry = true;
      } else {
        break;
      }
    }
    expect_punct("}");
    if (lex_.peek().kind != Token::End)
      lex_.error("trailing input after module", lex_.peek());
    if (m.functions.empty())
      lex_.error("module contains no function", lex_.peek());
    if (!saw_entry) {
      const GraphFunction &fn = m.functions.front();
      m.entry_point = EntryPointDescriptor{fn.name, static_cast<int>(fn.inputs.size()),
                                           static_cast<int>(fn.results.size())};
    }
    return m;
  }

private:
  Token expect(Token::Kind kind, const std::string &what) {
    Token t = lex_.next();
    if (t.kind != kind)
      lex_.error("expected " + what + ", got '" + t.text + "'", t);
    return t;
  }
  void expect_punct(const std::string &p) {
    Token t = lex_.next();
    if (t.kind != Token::Punct || t.text != p)
      lex_.error("expected '" + p + "', got '" + t.text + "'", t);
  }
  void expect_ident(const std::string &id) {
    Token t = lex_.next();
    if (t.kind != Token::Ident || t.text != id)
      lex_.error("expected '" + id + "', got '" + t.text + "'", t);
  }
  bool peek_punct(const std::string &p) {
    return lex_.peek().kind == Token::Punct && lex_.peek().text == p;
  }

  TensorType parse_type() {
    Token t = expect(Token::Ident, "a type");
    if (t.text != "tensor")
      lex_.error("expected 'tensor', got '" + t.text + "'", t);
    expect_punct("<");
    std::string body = lex_.read_until_gt();
    return type_from_body(body, t);
  }

  TensorType type_from_body(const std::string &body, const Token &at) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : body) {
      if (c == 'x') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    // last part is the dtype; note "i64" contains no 'x' so splitting is safe
    std::string dt = parts.back();
    parts.pop_back();
    TensorType type;
    if (dt == "f32")
      type.dtype = DType::F32;
    else if (dt == "i64")
      type.dtype = DType::I64;
    else
      lex_.error("unsupported element type '" + dt + "'", at);
    if (parts.size() == 1 && parts[0] == "*") {
      type.shape = Shape::unranked();
      return type;
    }
    std::vector<DimSize> dims;
    for (const std::string &p : parts) {
      if (p == "?") {
        dims.push_back(std::nullopt);
      } else {
        try {
          dims.push_back(DimSize(std::stoll(p)));
        } catch (...) {
          lex_.error("bad dimension '" + p + "' in type", at);
        }
      }
    }
    type.shape = Shape(std::move(dims));
    return type;
  }

  ValueId lookup(const GraphFunction &fn, const Token &name) {
    auto it = values_.find(name.text);
    if (it == values_.end())
      fail("SSAViolation", std::to_string(name.line) + ":" + std::to_string(name.col) +
                               ": use of undefined value %" + name.text);
    (void)fn;
    return it->second;
  }

  ValueId define(GraphFunction &fn, const Token &name, TensorType type) {
    if (values_.count(name.text))
      fail("SSAViolation", std::to_string(name.line) + ":" + std::to_string(name.col) +
                               ": value %" + name.text + " redefined");
    ValueId v = fn.new_value(std::move(type));
    values_[name.text] = v;
    return v;
  }

  GraphFunction parse_function() {
    values_.clear();
    expect_ident("func");
    GraphFunction fn;
    fn.name = expect(Token::SymbolName, "a function name").text;
    expect_punct("(");
    std::vector<std::pair<Token, TensorType>> params;
    if (!peek_punct(")")) {
      while (true) {
        Token name = expect(Token::ValueName, "an argument name");
        expect_punct(":");
        TensorType type = parse_type();
        params.emplace_back(name, type);
        if (!peek_punct(","))
          break;
        expect_punct(",");
      }
    }
    expect_punct(")");
    for (auto &[name, type] : params)
      fn.inputs.push_back(define(fn, name, type));
    if (peek_punct("->"))
      parse_result_types(); // declared types are re-validated against values below
    expect_punct("{");

    bool returned = false;
    while (!peek_punct("}")) {
      const Token &t = lex_.peek();
      if (t.kind == Token::Ident && t.text == "std.return") {
        lex_.next();
        if (returned)
          lex_.error("second std.return in function", t);
        returned = true;
        while (lex_.peek().kind == Token::ValueName) {
          fn.results.push_back(lookup(fn, lex_.next()));
          if (peek_punct(","))
            expect_punct(",");
          else
            break;
        }
        if (peek_punct(":")) {
          expect_punct(":");
          for (std::size_t i = 0; i < fn.results.size(); ++i) {
            parse_type();
            if (i + 1 < fn.results.size())
              expect_punct(",");
          }
        }
      } else if (t.kind == Token::ValueName) {
        parse_op(fn);
      } else {
        lex_.error("expected an op, std.return, or '}'", t);
      }
    }
    expect_punct("}");
    if (!returned)
      fail("SyntaxError", "function @" + fn.name + " has no std.return");
    return fn;
  }

  void parse_result_types() {
    expect_punct("->");
    bool parens = peek_punct("(");
    if (parens)
      expect_punct("(");
    parse_type();
    while (parens && peek_punct(",")) {
      expect_punct(",");
      parse_type();
    }
    if (parens)
      expect_punct(")");
  }

  void parse_op(GraphFunction &fn) {
    std::vector<Token> result_names;
    result_names.push_back(expect(Token::ValueName, "a result name"));
    while (peek_punct(",")) {
      expect_punct(",");
      result_names.push_back(expect(Token::ValueName, "a result name"));
    }
    expect_punct("=");
    Token opname = expect(Token::String, "a quoted op name");
    const std::string prefix = "onnx.";
    if (opname.text.rfind(prefix, 0) != 0)
      lex_.error("op name must start with 'onnx.'", opname);
    const OpSpec *spec = find_op_spec(opname.text.substr(prefix.size()));
    if (!spec)
      fail("UnsupportedOp", std::to_string(opname.line) + ":" + std::to_string(opname.col) +
                                ": unknown op '" + opname.text + "'");

    expect_punct("(");
    std::vector<ValueId> operands;
    while (lex_.peek().kind == Token::ValueName) {
      operands.push_back(lookup(fn, lex_.next()));
      if (peek_punct(","))
        expect_punct(",");
      else
        break;
    }
    expect_punct(")");

    AttrMap attrs;
    if (peek_punct("{")) {
      expect_punct("{");
      while (!peek_punct("}")) {
        Token name = expect(Token::Ident, "an attribute name");
        expect_punct("=");
        attrs.emplace(name.text, parse_attribute_value());
        if (peek_punct(","))
          expect_punct(",");
      }
      expect_punct("}");
    }
    GraphBuilder::materialize_defaults(*spec, attrs);

    expect_punct(":");
    expect_punct("(");
    std::size_t ti = 0;
    while (!peek_punct(")")) {
      Token at = lex_.peek();
      TensorType t = parse_type();
      if (ti < operands.size() && fn.type_of(operands[ti]) != t)
        lex_.error("operand type mismatch: value has type " +
                       fn.type_of(operands[ti]).str() + ", written as " + t.str(),
                   at);
      ++ti;
      if (peek_punct(","))
        expect_punct(",");
    }
    expect_punct(")");
    expect_punct("->");
    std::vector<TensorType> result_types;
    bool parens = peek_punct("(");
    if (parens)
      expect_punct("(");
    result_types.push_back(parse_type());
    while (peek_punct(",")) {
      expect_punct(",");
      result_types.push_back(parse_type());
    }
    if (parens)
      expect_punct(")");
    if (result_types.size() != result_names.size())
      lex_.error("op declares " + std::to_string(result_types.size()) + " result types for " +
                     std::to_string(result_names.size()) + " results",
                 opname);

    GraphOp op;
    op.kind = spec->kind;
    op.operands = std::move(operands);
    op.attributes = std::move(attrs);
    for (std::size_t i = 0; i < result_names.size(); ++i)
      op.results.push_back(define(fn, result_names[i], result_types[i]));
    fn.ops.push_back(std::move(op));
  }

  AttributeValue parse_attribute_value() {
    const Token &t = lex_.peek();
    if (t.kind == Token::Number) {
      Token num = lex_.next();
      if (is_integer(num.text))
        return AttributeValue(static_cast<std::int64_t>(std::stoll(num.text)));
      return AttributeValue(parse_float_exact(num.text));
    }
    if (t.kind == Token::Punct && t.text == "[") {
      expect_punct("[");
      std::vector<std::int64_t> list;
      while (!peek_punct("]")) {
        Token num = expect(Token::Number, "an integer");
        if (!is_integer(num.text))
          lex_.error("expected an integer in list", num);
        list.push_back(std::stoll(num.text));
        if (peek_punct(","))
          expect_punct(",");
      }
      expect_punct("]");
      return AttributeValue(std::move(list));
    }
    if (t.kind == Token::Ident && t.text == "dense")
      return AttributeValue(parse_dense());
    lex_.error("expected an attribute value", t);
  }

  static bool is_integer(const std::string &s) {
    return s.find_first_of(".eE") == std::string::npos && s != "inf" && s != "-inf" && s != "nan";
  }

  TensorValue parse_dense() {
    Token at = lex_.next(); // dense
    expect_punct("<");
    std::string payload = lex_.read_until_gt();
    expect_punct(":");
    TensorType type = parse_type();
    if (!type.shape.is_static())
      lex_.error("dense literal requires a static tensor type", at);

    std::vector<std::string> elems;
    std::size_t pos = 0;
    int depth = 0;
    std::string cur;
    auto flush = [&]() {
      std::string trimmed;
      for (char c : cur)
        if (c != ' ' && c != '\n' && c != '\t')
          trimmed += c;
      if (!trimmed.empty())
        elems.push_back(trimmed);
      cur.clear();
    };
    for (; pos < payload.size(); ++pos) {
      char c = payload[pos];
      if (c == '[') {
        ++depth;
      } else if (c == ']') {
        flush();
        --depth;
        if (depth < 0)
          lex_.error("unbalanced ']' in dense literal", at);
      } else if (c == ',') {
        flush();
      } else {
        cur += c;
      }
    }
    flush();
    if (depth != 0)
      lex_.error("unbalanced '[' in dense literal", at);
    if (static_cast<std::int64_t>(elems.size()) != type.shape.elem_count())
      lex_.error("dense literal has " + std::to_string(elems.size()) + " elements, type needs " +
                     std::to_string(type.shape.elem_count()),
                 at);

    if (type.dtype == DType::F32) {
      std::vector<float> data;
      data.reserve(elems.size());
      for (const std::string &e : elems)
        data.push_back(parse_float_exact(e));
      return TensorValue::f32(type.shape, std::move(data));
    }
    std::vector<std::int64_t> data;
    data.reserve(elems.size());
    for (const std::string &e : elems) {
      if (!is_integer(e))
        lex_.error("non-integer element '" + e + "' in i64 dense literal", at);
      data.push_back(std::stoll(e));
    }
    return TensorValue::i64(type.shape, std::move(data));
  }

  EntryPointDescriptor parse_entry_point() {
    lex_.next(); // "onnx.EntryPoint"
    expect_punct("(");
    expect_punct(")");
    expect_punct("{");
    EntryPointDescriptor ep;
    while (!peek_punct("}")) {
      Token name = expect(Token::Ident, "an attribute name");
      expect_punct("=");
      if (name.text == "func") {
        ep.func = expect(Token::SymbolName, "a function name").text;
      } else if (name.text == "numInputs" || name.text == "numOutputs") {
        Token num = expect(Token::Number, "an integer");
        expect_punct(":");
        expect_ident("i32");
        (name.text == "numInputs" ? ep.num_inputs : ep.num_outputs) =
            static_cast<int>(std::stoll(num.text));
      } else {
        lex_.error("unknown EntryPoint attribute '" + name.text + "'", name);
      }
      if (peek_punct(","))
        expect_punct(",");
    }
    expect_punct("}");
    expect_punct(":");
    expect_punct("(");
    expect_punct(")");
    expect_punct("->");
    expect_punct("(");
    expect_punct(")");
    return ep;
  }

  Lexer lex_;
  std::map<std::string, ValueId> values_;
};

} // namespace detail

/// Parses printer-grammar text back into a module. Syntax problems raise
/// SyntaxError with line:column; uses of undefined or redefined values raise
/// SSAViolation.
inline GraphModule parse_graph_text(const std::string &text) {
  detail::GraphParser parser(text);
  GraphModule m = parser.parse();
  verify_or_throw(m, "parsed module does not verify");
  return m;
}

} // namespace loom
