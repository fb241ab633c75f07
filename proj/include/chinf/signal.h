#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

#include "chinf/error.h"

namespace chinf {

/// Parse failure; offset is the byte position in the source text.
class SignalParseError : public Error {
 public:
  SignalParseError(ErrorCode code, const std::string& what, std::size_t offset)
      : Error(code, what + " at offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Scalar signal s(t) built from numbers, t, + − * /, unary −, and
/// sin/cos/exp.
class SignalExpr {
 public:
  struct Node;

  double operator()(double t) const;
  const std::string& source() const { return source_; }

 private:
  friend SignalExpr parse_signal(std::string_view src);
  std::shared_ptr<const Node> root_;
  std::string source_;
};

/// Recursive descent over
///   expr   := term (('+'|'-') term)*
///   term   := factor (('*'|'/') factor)*
///   factor := number | 't' | func '(' expr ')' | '(' expr ')' | '-' factor
/// Division by zero is reported at evaluation time.
SignalExpr parse_signal(std::string_view src);

}  // namespace chinf
