#pragma once

// Small text helpers shared by the delimited-text readers and writers.

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "refereval/error.hpp"

namespace refereval::text {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(std::string_view field, std::string_view what) {
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw DomainError("parse", "malformed " + std::string(what) + " field '" +
                                   std::string(field) + "'");
  }
  return value;
}

}  // namespace refereval::text
