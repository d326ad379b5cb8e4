#include "gateflow/json_value.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "gateflow/error.hpp"

namespace gateflow {

ordered_json to_json(const Value& v) {
  switch (v.kind()) {
    case ValueKind::Real: {
      double d = v.as_real();
      if (!std::isfinite(d)) return nullptr;
      return d;
    }
    case ValueKind::Integer: return v.as_integer();
    case ValueKind::Boolean: return v.as_bool();
    case ValueKind::String: return v.as_string();
  }
  return nullptr;
}

Value value_from_json(const ordered_json& j) {
  if (j.is_null()) return Value(std::numeric_limits<double>::quiet_NaN());
  if (j.is_number_float()) return Value(j.get<double>());
  if (j.is_number_unsigned()) {
    auto u = j.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) return Value(static_cast<double>(u));
    return Value(static_cast<std::int64_t>(u));
  }
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_string()) return Value(j.get<std::string>());
  throw Error(ErrorCode::TypeMismatch, "JSON value is not a scalar: " + j.dump());
}

ordered_json to_json(const ArgMap& args) {
  ordered_json out = ordered_json::object();
  for (const auto& [k, v] : args) out[k] = to_json(v);
  return out;
}

ArgMap args_from_json(const ordered_json& j) {
  ArgMap out;
  if (j.is_null()) return out;
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace(it.key(), value_from_json(it.value()));
  return out;
}

void append_json(std::string& out, const std::string& s) {
  bool plain = std::all_of(s.begin(), s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x20 && u < 0x80 && c != '"' && c != '\\';
  });
  if (!plain) {
    out += ordered_json(s).dump();
    return;
  }
  out += '"';
  out += s;
  out += '"';
}

void append_json(std::string& out, const Value& v) {
  switch (v.kind()) {
    case ValueKind::Real: {
      double d = v.as_real();
      out += std::isfinite(d) ? format_real(d) : "null";
      return;
    }
    case ValueKind::Integer: {
      char buf[24];
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v.as_integer());
      out.append(buf, end);
      return;
    }
    case ValueKind::Boolean: out += v.as_bool() ? "true" : "false"; return;
    case ValueKind::String: append_json(out, v.as_string()); return;
  }
}

namespace {

void dump_into(const ordered_json& j, std::string& out) {
  switch (j.type()) {
    case ordered_json::value_t::number_float: {
      double d = j.get<double>();
      out += std::isfinite(d) ? format_real(d) : "null";
      return;
    }
    case ordered_json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ',';
        first = false;
        dump_into(e, out);
      }
      out += ']';
      return;
    }
    case ordered_json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        append_json(out, it.key());
        out += ':';
        dump_into(it.value(), out);
      }
      out += '}';
      return;
    }
    default: out += j.dump();
  }
}

}  // namespace

std::string dump_json(const ordered_json& j) {
  std::string out;
  dump_into(j, out);
  return out;
}

}  // namespace gateflow
