#include <cstdint>

#include "gateflow/dsl.hpp"
#include "gateflow/error.hpp"

namespace gateflow::dsl {

namespace {

std::string where(const SourcePos& pos) {
  return " (line " + std::to_string(pos.line) + ", column " + std::to_string(pos.column) + ")";
}

template <typename F>
void for_each_name(const Expr& e, F&& f) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NameRef>) {
          f(n.id);
        } else if constexpr (std::is_same_v<T, Negate>) {
          for_each_name(*n.operand, f);
        } else if constexpr (std::is_same_v<T, Binary>) {
          for_each_name(*n.lhs, f);
          for_each_name(*n.rhs, f);
        }
      },
      e.node);
}

const Identifier& target_of(const Statement& st) {
  return std::visit([](const auto& s) -> const Identifier& { return s.target; }, st);
}

template <typename F>
void for_each_read(const Statement& st, F&& f) {
  if (const auto* a = std::get_if<Assign>(&st)) {
    for_each_name(*a->value, f);
  } else {
    for (const auto& arg : std::get<Call>(st).args) for_each_name(*arg, f);
  }
}

void require_numeric(const Value& v, std::string_view op) {
  if (!v.is_numeric()) {
    throw Error(ErrorCode::TypeMismatch,
                "operator '" + std::string(op) + "' applied to " + std::string(to_string(v.kind())));
  }
}

}  // namespace

IOSets extract_io(const Program& program, const std::set<std::string>& io_names) {
  std::set<std::string> assigned_anywhere;
  for (const auto& st : program.statements) assigned_anywhere.insert(target_of(st).name);

  IOSets io;
  std::set<std::string> assigned_locals;
  for (const auto& st : program.statements) {
    for_each_read(st, [&](const Identifier& id) {
      if (io_names.contains(id.name)) {
        if (io.writes.contains(id.name)) {
          throw Error(ErrorCode::WriteBeforeReadSelfLoop,
                      "'" + id.name + "' is read after being written in the same step" + where(id.pos), {id.name});
        }
        io.reads.insert(id.name);
      } else if (!assigned_locals.contains(id.name)) {
        if (assigned_anywhere.contains(id.name)) {
          throw Error(ErrorCode::UseBeforeAssign, "local '" + id.name + "' used before assignment" + where(id.pos),
                      {id.name});
        }
        throw Error(ErrorCode::UnknownInternalName,
                    "'" + id.name + "' is neither in the io map nor assigned" + where(id.pos), {id.name});
      }
    });
    if (const auto* c = std::get_if<Call>(&st)) io.callees.insert(c->callee.name);
    const Identifier& target = target_of(st);
    if (io_names.contains(target.name)) {
      if (!io.writes.insert(target.name).second) {
        throw Error(ErrorCode::DoubleWrite, "'" + target.name + "' is written twice" + where(target.pos),
                    {target.name});
      }
    } else {
      assigned_locals.insert(target.name);
      io.locals.insert(target.name);
    }
  }
  return io;
}

IOSets validate(const Program& program, const std::set<std::string>& io_names, const CalleeTable& callees) {
  IOSets io = extract_io(program, io_names);
  for (const auto& st : program.statements) {
    const auto* c = std::get_if<Call>(&st);
    if (!c) continue;
    auto it = callees.find(c->callee.name);
    if (it == callees.end()) {
      throw Error(ErrorCode::UnknownCallee, "no subcomponent bound as '" + c->callee.name + "'" + where(c->callee.pos),
                  {c->callee.name});
    }
    if (it->second.arity != c->args.size()) {
      throw Error(ErrorCode::ArityMismatch,
                  "'" + c->callee.name + "' takes " + std::to_string(it->second.arity) + " argument(s), called with " +
                      std::to_string(c->args.size()) + where(c->callee.pos),
                  {c->callee.name});
    }
  }
  return io;
}

IOSets validate_init(const Program& program, const std::set<std::string>& io_names, const CalleeTable& callees) {
  IOSets io = validate(program, io_names, callees);
  if (!io.reads.empty()) {
    throw Error(ErrorCode::InitReadsInput, "init programs may not read '" + *io.reads.begin() + "'",
                {io.reads.begin(), io.reads.end()});
  }
  return io;
}

Value apply(BinaryOp op, const Value& lhs, const Value& rhs) {
  require_numeric(lhs, symbol(op));
  require_numeric(rhs, symbol(op));
  if (op == BinaryOp::Div) {
    double d = rhs.as_real();
    if (d == 0.0) throw Error(ErrorCode::DivisionByZero, "division by zero");
    return Value(lhs.as_real() / d);
  }
  if (lhs.is_integer() && rhs.is_integer()) {
    std::int64_t a = lhs.as_integer();
    std::int64_t b = rhs.as_integer();
    std::int64_t r = 0;
    bool overflow = false;
    switch (op) {
      case BinaryOp::Add: overflow = __builtin_add_overflow(a, b, &r); break;
      case BinaryOp::Sub: overflow = __builtin_sub_overflow(a, b, &r); break;
      case BinaryOp::Mul: overflow = __builtin_mul_overflow(a, b, &r); break;
      case BinaryOp::Div: break;
    }
    if (overflow) {
      throw Error(ErrorCode::IntegerOverflow, std::to_string(a) + " " + std::string(symbol(op)) + " " +
                                                  std::to_string(b) + " overflows 64 bits");
    }
    return Value(r);
  }
  double a = lhs.as_real();
  double b = rhs.as_real();
  switch (op) {
    case BinaryOp::Add: return Value(a + b);
    case BinaryOp::Sub: return Value(a - b);
    case BinaryOp::Mul: return Value(a * b);
    case BinaryOp::Div: break;
  }
  return Value(a / b);
}

Value negate(const Value& v) {
  require_numeric(v, "-");
  if (v.is_integer()) {
    std::int64_t r = 0;
    if (__builtin_sub_overflow(std::int64_t{0}, v.as_integer(), &r)) {
      throw Error(ErrorCode::IntegerOverflow, "negation of " + v.to_string() + " overflows 64 bits");
    }
    return Value(r);
  }
  return Value(-v.as_real());
}

namespace {

Value read_name(const Identifier& id, EvalEnv& env) {
  if (env.io_names.contains(id.name)) {
    if (auto it = env.inputs.find(id.name); it != env.inputs.end()) return it->second;
    for (const auto& [name, value] : env.emitted) {
      if (name == id.name) {
        throw Error(ErrorCode::WriteBeforeReadSelfLoop, "'" + id.name + "' read after write" + where(id.pos),
                    {id.name});
      }
    }
    if (!env.input_source) throw Error(ErrorCode::MissingInput, "no value for input '" + id.name + "'", {id.name});
    Value v = env.input_source(id.name);
    env.inputs.emplace(id.name, v);
    return v;
  }
  if (auto it = env.locals.find(id.name); it != env.locals.end()) return it->second;
  throw Error(ErrorCode::UseBeforeAssign, "local '" + id.name + "' used before assignment" + where(id.pos), {id.name});
}

Value eval(const Expr& e, EvalEnv& env) {
  return std::visit(
      [&](const auto& n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, NameRef>) {
          return read_name(n.id, env);
        } else if constexpr (std::is_same_v<T, Negate>) {
          return negate(eval(*n.operand, env));
        } else {
          Value lhs = eval(*n.lhs, env);
          Value rhs = eval(*n.rhs, env);
          return apply(n.op, lhs, rhs);
        }
      },
      e.node);
}

void assign(const Identifier& target, Value v, EvalEnv& env) {
  if (!env.io_names.contains(target.name)) {
    env.locals.insert_or_assign(target.name, std::move(v));
    return;
  }
  for (const auto& [name, value] : env.emitted) {
    if (name == target.name) {
      throw Error(ErrorCode::DoubleWrite, "'" + target.name + "' written twice" + where(target.pos), {target.name});
    }
  }
  env.emitted.emplace_back(target.name, v);
  if (env.write_sink) env.write_sink(target.name, v);
}

}  // namespace

void execute(const Statement& statement, EvalEnv& env) {
  if (const auto* a = std::get_if<Assign>(&statement)) {
    assign(a->target, eval(*a->value, env), env);
    return;
  }
  const auto& c = std::get<Call>(statement);
  const Callable* callable = nullptr;
  if (env.callees) {
    if (auto it = env.callees->find(c.callee.name); it != env.callees->end()) callable = &it->second;
  }
  if (!callable) {
    throw Error(ErrorCode::UnknownCallee, "no subcomponent bound as '" + c.callee.name + "'" + where(c.callee.pos),
                {c.callee.name});
  }
  if (callable->arity != c.args.size()) {
    throw Error(ErrorCode::ArityMismatch, "'" + c.callee.name + "' called with wrong number of arguments",
                {c.callee.name});
  }
  std::vector<Value> args;
  args.reserve(c.args.size());
  for (const auto& arg : c.args) args.push_back(eval(*arg, env));
  assign(c.target, callable->fn(args), env);
}

void evaluate(const Program& program, EvalEnv& env) {
  for (const auto& st : program.statements) execute(st, env);
}

EvalEnv evaluate(const Program& program, EvalEnv&& env) {
  evaluate(program, env);
  return std::move(env);
}

}  // namespace gateflow::dsl
