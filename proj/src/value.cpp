#include "gateflow/value.hpp"

#include <array>
#include <bit>
#include <charconv>

#include "gateflow/error.hpp"

namespace gateflow {

double Value::as_real() const {
  if (is_real()) return std::get<double>(data_);
  if (is_integer()) return static_cast<double>(std::get<std::int64_t>(data_));
  throw Error(ErrorCode::TypeMismatch, "expected a number, got " + std::string(gateflow::to_string(kind())));
}

std::int64_t Value::as_integer() const {
  if (is_integer()) return std::get<std::int64_t>(data_);
  throw Error(ErrorCode::TypeMismatch, "expected an integer, got " + std::string(gateflow::to_string(kind())));
}

bool Value::as_bool() const {
  if (is_bool()) return std::get<bool>(data_);
  throw Error(ErrorCode::TypeMismatch, "expected a boolean, got " + std::string(gateflow::to_string(kind())));
}

const std::string& Value::as_string() const {
  if (is_string()) return std::get<std::string>(data_);
  throw Error(ErrorCode::TypeMismatch, "expected a string, got " + std::string(gateflow::to_string(kind())));
}

bool Value::identical(const Value& other) const noexcept {
  if (data_.index() != other.data_.index()) return false;
  if (is_real()) {
    return std::bit_cast<std::uint64_t>(std::get<double>(data_)) ==
           std::bit_cast<std::uint64_t>(std::get<double>(other.data_));
  }
  return data_ == other.data_;
}

std::string Value::to_string() const {
  switch (kind()) {
    case ValueKind::Real: return format_real(std::get<double>(data_));
    case ValueKind::Integer: return std::to_string(std::get<std::int64_t>(data_));
    case ValueKind::Boolean: return std::get<bool>(data_) ? "true" : "false";
    case ValueKind::String: return std::get<std::string>(data_);
  }
  return {};
}

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::Real: return "real";
    case ValueKind::Integer: return "integer";
    case ValueKind::Boolean: return "boolean";
    case ValueKind::String: return "string";
  }
  return "unknown";
}

std::string format_real_plain(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string format_real(double v) {
  std::string s = format_real_plain(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace gateflow
