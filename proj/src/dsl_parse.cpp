#include <cctype>
#include <charconv>
#include <cstdint>

#include "gateflow/dsl.hpp"
#include "gateflow/error.hpp"

namespace gateflow::dsl {

namespace {

enum class Tok { Ident, Integer, Real, Plus, Minus, Star, Slash, LParen, RParen, Comma, Equals, Newline, End };

struct Token {
  Tok kind;
  std::string text;
  SourcePos pos;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::Newline: return "end of line";
    case Tok::End: return "end of input";
    default: return "'" + t.text + "'";
  }
}

[[noreturn]] void syntax_error(SourcePos pos, const std::string& msg) {
  throw Error(ErrorCode::SyntaxError,
              "line " + std::to_string(pos.line) + ", column " + std::to_string(pos.column) + ": " + msg,
              {std::to_string(pos.line), std::to_string(pos.column)});
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_blanks();
      SourcePos pos{line_, col_};
      if (i_ >= src_.size()) {
        out.push_back({Tok::End, "", pos});
        return out;
      }
      char c = src_[i_];
      if (c == '\n') {
        advance();
        out.push_back({Tok::Newline, "\\n", pos});
      } else if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t start = i_;
        while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) advance();
        out.push_back({Tok::Ident, std::string(src_.substr(start, i_ - start)), pos});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number(pos));
      } else {
        Tok kind;
        switch (c) {
          case '+': kind = Tok::Plus; break;
          case '-': kind = Tok::Minus; break;
          case '*': kind = Tok::Star; break;
          case '/': kind = Tok::Slash; break;
          case '(': kind = Tok::LParen; break;
          case ')': kind = Tok::RParen; break;
          case ',': kind = Tok::Comma; break;
          case '=': kind = Tok::Equals; break;
          default: syntax_error(pos, std::string("unexpected character '") + c + "'");
        }
        advance();
        out.push_back({kind, std::string(1, c), pos});
      }
    }
  }

 private:
  void advance() {
    if (src_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skip_blanks() {
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  bool digit_at(std::size_t k) const { return k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k])); }

  Token number(SourcePos pos) {
    std::size_t start = i_;
    bool real = false;
    while (digit_at(i_)) advance();
    if (i_ < src_.size() && src_[i_] == '.' && digit_at(i_ + 1)) {
      real = true;
      advance();
      while (digit_at(i_)) advance();
    }
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      std::size_t k = i_ + 1;
      if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
      if (digit_at(k)) {
        real = true;
        while (i_ < k) advance();
        while (digit_at(i_)) advance();
      }
    }
    return {real ? Tok::Real : Tok::Integer, std::string(src_.substr(start, i_ - start)), pos};
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program program() {
    Program p;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        ++k_;
        continue;
      }
      p.statements.push_back(statement());
      if (peek().kind != Tok::End) expect(Tok::Newline, "end of line");
    }
    return p;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(k_ + ahead, toks_.size() - 1)]; }

  const Token& expect(Tok kind, const char* what) {
    const Token& t = peek();
    if (t.kind != kind) syntax_error(t.pos, std::string("expected ") + what + ", found " + describe(t));
    ++k_;
    return t;
  }

  Statement statement() {
    const Token& target = expect(Tok::Ident, "identifier");
    Identifier tid{target.text, target.pos};
    expect(Tok::Equals, "'='");
    if (peek().kind == Tok::Ident && peek(1).kind == Tok::LParen) {
      const Token& callee = peek();
      Identifier cid{callee.text, callee.pos};
      k_ += 2;
      std::vector<ExprPtr> args;
      if (peek().kind != Tok::RParen) {
        args.push_back(expr());
        while (peek().kind == Tok::Comma) {
          ++k_;
          args.push_back(expr());
        }
      }
      expect(Tok::RParen, "')'");
      return Call{std::move(tid), std::move(cid), std::move(args)};
    }
    return Assign{std::move(tid), expr()};
  }

  ExprPtr expr() {
    ExprPtr lhs = term();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      const Token& op = peek();
      ++k_;
      lhs = make_binary(op.kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub, lhs, term(), op.pos);
    }
    return lhs;
  }

  ExprPtr term() {
    ExprPtr lhs = factor();
    while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
      const Token& op = peek();
      ++k_;
      lhs = make_binary(op.kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div, lhs, factor(), op.pos);
    }
    return lhs;
  }

  ExprPtr factor() {
    if (peek().kind == Tok::Minus) {
      SourcePos pos = peek().pos;
      ++k_;
      return make_negate(primary(), pos);
    }
    return primary();
  }

  ExprPtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Integer: {
        ++k_;
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc{}) syntax_error(t.pos, "integer literal out of range: " + t.text);
        return make_number(Value(v), t.pos);
      }
      case Tok::Real: {
        ++k_;
        double v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc{}) syntax_error(t.pos, "real literal out of range: " + t.text);
        return make_number(Value(v), t.pos);
      }
      case Tok::Ident:
        ++k_;
        return make_name(t.text, t.pos);
      case Tok::LParen: {
        ++k_;
        ExprPtr inner = expr();
        expect(Tok::RParen, "')'");
        return inner;
      }
      default: syntax_error(t.pos, "expected expression, found " + describe(t));
    }
  }

  std::vector<Token> toks_;
  std::size_t k_ = 0;
};

int precedence(BinaryOp op) { return (op == BinaryOp::Add || op == BinaryOp::Sub) ? 1 : 2; }

void print(const Expr& e, std::string& out);

void print_operand(const Expr& e, int min_prec, std::string& out) {
  const auto* b = std::get_if<Binary>(&e.node);
  if (b && precedence(b->op) < min_prec) {
    out += '(';
    print(e, out);
    out += ')';
  } else {
    print(e, out);
  }
}

void print(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          out += n.value.to_string();
        } else if constexpr (std::is_same_v<T, NameRef>) {
          out += n.id.name;
        } else if constexpr (std::is_same_v<T, Negate>) {
          out += '-';
          // factor := "-" primary, so anything but a literal or name needs parens
          const Expr& inner = *n.operand;
          if (std::holds_alternative<NumberLit>(inner.node) || std::holds_alternative<NameRef>(inner.node)) {
            print(inner, out);
          } else {
            out += '(';
            print(inner, out);
            out += ')';
          }
        } else {
          int p = precedence(n.op);
          print_operand(*n.lhs, p, out);
          out += ' ';
          out += symbol(n.op);
          out += ' ';
          print_operand(*n.rhs, p + 1, out);
        }
      },
      e.node);
}

bool same_value(const Value& a, const Value& b) { return a.identical(b); }

}  // namespace

ExprPtr make_number(Value v, SourcePos pos) { return std::make_shared<const Expr>(Expr{NumberLit{std::move(v), pos}}); }

ExprPtr make_name(std::string name, SourcePos pos) {
  return std::make_shared<const Expr>(Expr{NameRef{Identifier{std::move(name), pos}}});
}

ExprPtr make_negate(ExprPtr operand, SourcePos pos) {
  return std::make_shared<const Expr>(Expr{Negate{std::move(operand), pos}});
}

ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs, SourcePos pos) {
  return std::make_shared<const Expr>(Expr{Binary{op, std::move(lhs), std::move(rhs), pos}});
}

std::string_view symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
  }
  return "?";
}

Program parse(std::string_view source) { return Parser(Lexer(source).run()).program(); }

std::string to_source(const Expr& expr) {
  std::string out;
  print(expr, out);
  return out;
}

std::string to_source(const Program& program) {
  std::string out;
  for (const auto& st : program.statements) {
    if (const auto* a = std::get_if<Assign>(&st)) {
      out += a->target.name + " = ";
      print(*a->value, out);
    } else {
      const auto& c = std::get<Call>(st);
      out += c.target.name + " = " + c.callee.name + "(";
      for (std::size_t i = 0; i < c.args.size(); ++i) {
        if (i) out += ", ";
        print(*c.args[i], out);
      }
      out += ")";
    }
    out += '\n';
  }
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, NumberLit>) {
          return same_value(x.value, y.value);
        } else if constexpr (std::is_same_v<T, NameRef>) {
          return x.id.name == y.id.name;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return structurally_equal(*x.operand, *y.operand);
        } else {
          return x.op == y.op && structurally_equal(*x.lhs, *y.lhs) && structurally_equal(*x.rhs, *y.rhs);
        }
      },
      a.node);
}

bool structurally_equal(const Program& a, const Program& b) {
  if (a.statements.size() != b.statements.size()) return false;
  for (std::size_t i = 0; i < a.statements.size(); ++i) {
    const auto& sa = a.statements[i];
    const auto& sb = b.statements[i];
    if (sa.index() != sb.index()) return false;
    if (const auto* x = std::get_if<Assign>(&sa)) {
      const auto& y = std::get<Assign>(sb);
      if (x->target.name != y.target.name || !structurally_equal(*x->value, *y.value)) return false;
    } else {
      const auto& x2 = std::get<Call>(sa);
      const auto& y2 = std::get<Call>(sb);
      if (x2.target.name != y2.target.name || x2.callee.name != y2.callee.name || x2.args.size() != y2.args.size())
        return false;
      for (std::size_t k = 0; k < x2.args.size(); ++k)
        if (!structurally_equal(*x2.args[k], *y2.args[k])) return false;
    }
  }
  return true;
}

}  // namespace gateflow::dsl
