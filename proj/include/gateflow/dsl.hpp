#pragma once

// Step-script language: a closed mini-language of assignments, arithmetic and
// subcomponent calls whose read/write sets are inferred from the syntax tree.
//
//   program   := { statement NEWLINE } ;
//   statement := ident "=" expr | ident "=" ident "(" [expr {"," expr}] ")" ;
//   expr      := term { ("+"|"-") term } ;
//   term      := factor { ("*"|"/") factor } ;
//   factor    := ["-"] ( NUMBER | ident | "(" expr ")" ) ;
//   ident     := letter { letter | digit | "_" } ;
//
// Blank lines and '#' comments are ignored.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gateflow/value.hpp"

namespace gateflow::dsl {

struct SourcePos {
  int line = 1;
  int column = 1;
};

struct Identifier {
  std::string name;
  SourcePos pos;
};

enum class BinaryOp { Add, Sub, Mul, Div };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct NumberLit {
  Value value;  // Integer or Real, never negative
  SourcePos pos;
};
struct NameRef {
  Identifier id;
};
struct Negate {
  ExprPtr operand;
  SourcePos pos;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
  SourcePos pos;
};

struct Expr {
  std::variant<NumberLit, NameRef, Negate, Binary> node;
};

ExprPtr make_number(Value v, SourcePos pos = {});
ExprPtr make_name(std::string name, SourcePos pos = {});
ExprPtr make_negate(ExprPtr operand, SourcePos pos = {});
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs, SourcePos pos = {});

struct Assign {
  Identifier target;
  ExprPtr value;
};

struct Call {
  Identifier target;
  Identifier callee;
  std::vector<ExprPtr> args;
};

using Statement = std::variant<Assign, Call>;

struct Program {
  std::vector<Statement> statements;
};

Program parse(std::string_view source);

// Canonical source text; parse(to_source(p)) is structurally equal to p.
std::string to_source(const Program& program);
std::string to_source(const Expr& expr);

// Equality ignoring source positions.
bool structurally_equal(const Program& a, const Program& b);
bool structurally_equal(const Expr& a, const Expr& b);

struct IOSets {
  std::set<std::string> reads;
  std::set<std::string> writes;
  std::set<std::string> locals;
  std::set<std::string> callees;
};

// Syntactic inference: an io name read before being assigned is a read, an
// io name that is assigned is a write, anything else is a local.
IOSets extract_io(const Program& program, const std::set<std::string>& io_names);

struct Callable {
  std::size_t arity = 1;
  std::function<Value(std::span<const Value>)> fn;
};

using CalleeTable = std::map<std::string, Callable>;

// extract_io plus callee resolution against `callees`.
IOSets validate(const Program& program, const std::set<std::string>& io_names, const CalleeTable& callees);

// Init programs may only assign; reading an io name is InitReadsInput.
IOSets validate_init(const Program& program, const std::set<std::string>& io_names, const CalleeTable& callees);

struct EvalEnv {
  std::set<std::string> io_names;
  std::map<std::string, Value> inputs;  // cached reads
  std::map<std::string, Value> locals;
  std::shared_ptr<const CalleeTable> callees;
  std::vector<std::pair<std::string, Value>> emitted;

  // Called on the first read of an io name not yet in `inputs`.
  std::function<Value(const std::string&)> input_source;
  // Called for each io write, in program order, after it is appended to `emitted`.
  std::function<void(const std::string&, const Value&)> write_sink;
};

void execute(const Statement& statement, EvalEnv& env);
void evaluate(const Program& program, EvalEnv& env);
EvalEnv evaluate(const Program& program, EvalEnv&& env);

// Scalar arithmetic shared by the evaluator: integer ops are exact (overflow
// raises IntegerOverflow), mixed operands promote to real, division is real.
Value apply(BinaryOp op, const Value& lhs, const Value& rhs);
Value negate(const Value& v);

std::string_view symbol(BinaryOp op);

}  // namespace gateflow::dsl
