#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>

namespace gateflow {

enum class ValueKind { Real, Integer, Boolean, String };

// Tagged scalar exchanged over channels and logged to the store.
class Value {
 public:
  using Storage = std::variant<double, std::int64_t, bool, std::string>;

  Value() : data_(std::int64_t{0}) {}
  Value(double v) : data_(v) {}
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(std::int64_t{v}) {}
  Value(bool v) : data_(v) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}

  ValueKind kind() const noexcept { return static_cast<ValueKind>(data_.index()); }
  bool is_real() const noexcept { return kind() == ValueKind::Real; }
  bool is_integer() const noexcept { return kind() == ValueKind::Integer; }
  bool is_bool() const noexcept { return kind() == ValueKind::Boolean; }
  bool is_string() const noexcept { return kind() == ValueKind::String; }
  bool is_numeric() const noexcept { return is_real() || is_integer(); }

  double as_real() const;  // integers widen; other kinds throw TypeMismatch
  std::int64_t as_integer() const;
  bool as_bool() const;
  const std::string& as_string() const;

  const Storage& storage() const noexcept { return data_; }

  // Same kind and same payload; reals compare by bit pattern so NaN == NaN.
  bool identical(const Value& other) const noexcept;

  friend bool operator==(const Value& a, const Value& b) noexcept { return a.identical(b); }

  // Human-readable form; reals use the shortest round-trip representation.
  std::string to_string() const;

 private:
  Storage data_;
};

std::string_view to_string(ValueKind kind);

// Shortest decimal text that parses back to the same double. Always contains
// '.', 'e', or is a non-finite token, so it never reads back as an integer.
std::string format_real(double v);

// Shortest round-trip form without the forced decimal point ("2" for 2.0).
std::string format_real_plain(double v);

using ArgMap = std::map<std::string, Value>;

}  // namespace gateflow
