#pragma once

#include "gateflow/value.hpp"
#include "json.hpp"

namespace gateflow {

using ordered_json = nlohmann::ordered_json;

// Integers stay JSON integers and reals keep a fractional part or exponent, so
// the kind survives a round trip. Non-finite reals are written as null and
// read back as NaN.
ordered_json to_json(const Value& v);
Value value_from_json(const ordered_json& j);

ordered_json to_json(const ArgMap& args);
ArgMap args_from_json(const ordered_json& j);

// Compact serialisation with shortest round-trip text for every real.
std::string dump_json(const ordered_json& j);

// Append the same text dump_json would produce for a string or a scalar,
// without building a JSON tree.
void append_json(std::string& out, const std::string& s);
void append_json(std::string& out, const Value& v);

}  // namespace gateflow
