#include "chinf/signal.h"

#include <cctype>
#include <charconv>
#include <cmath>

namespace chinf {

struct SignalExpr::Node {
  enum class Kind { kNumber, kTime, kAdd, kSub, kMul, kDiv, kNeg, kSin, kCos, kExp };
  Kind kind;
  double value = 0.0;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = SignalExpr::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr,
             double value = 0.0) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  n->value = value;
  return n;
}

double eval(const Node& n, double t) {
  switch (n.kind) {
    case Node::Kind::kNumber: return n.value;
    case Node::Kind::kTime: return t;
    case Node::Kind::kAdd: return eval(*n.lhs, t) + eval(*n.rhs, t);
    case Node::Kind::kSub: return eval(*n.lhs, t) - eval(*n.rhs, t);
    case Node::Kind::kMul: return eval(*n.lhs, t) * eval(*n.rhs, t);
    case Node::Kind::kDiv: {
      const double den = eval(*n.rhs, t);
      if (den == 0.0) {
        throw Error(ErrorCode::kEvalError,
                    "division by zero at t = " + std::to_string(t));
      }
      return eval(*n.lhs, t) / den;
    }
    case Node::Kind::kNeg: return -eval(*n.lhs, t);
    case Node::Kind::kSin: return std::sin(eval(*n.lhs, t));
    case Node::Kind::kCos: return std::cos(eval(*n.lhs, t));
    case Node::Kind::kExp: return std::exp(eval(*n.lhs, t));
  }
  return 0.0;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_space();
    if (pos_ != src_.size()) syntax("unexpected '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void syntax(const std::string& what) const {
    throw SignalParseError(ErrorCode::kSyntaxError, what, pos_);
  }

  void skip_space() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) syntax(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Node::Kind::kAdd, lhs, term());
      } else if (accept('-')) {
        lhs = make(Node::Kind::kSub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = make(Node::Kind::kMul, lhs, factor());
      } else if (accept('/')) {
        lhs = make(Node::Kind::kDiv, lhs, factor());
      } else {
        return lhs;
      }
    }
  }

  NodePtr factor() {
    skip_space();
    if (pos_ >= src_.size()) syntax("unexpected end of input");
    const char c = src_[pos_];
    if (c == '-') {
      ++pos_;
      return make(Node::Kind::kNeg, factor());
    }
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    syntax("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    double v = 0.0;
    const auto [end, ec] =
        std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
    if (ec != std::errc()) syntax("malformed number");
    pos_ = static_cast<std::size_t>(end - src_.data());
    if (pos_ == start) syntax("malformed number");
    return make(Node::Kind::kNumber, nullptr, nullptr, v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
            src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = src_.substr(start, pos_ - start);
    if (name == "t") return make(Node::Kind::kTime);
    Node::Kind kind;
    if (name == "sin") {
      kind = Node::Kind::kSin;
    } else if (name == "cos") {
      kind = Node::Kind::kCos;
    } else if (name == "exp") {
      kind = Node::Kind::kExp;
    } else {
      throw SignalParseError(ErrorCode::kUnknownIdentifier,
                             "unknown identifier '" + std::string(name) + "'",
                             start);
    }
    expect('(');
    NodePtr arg = expr();
    expect(')');
    return make(kind, arg);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace

double SignalExpr::operator()(double t) const { return eval(*root_, t); }

SignalExpr parse_signal(std::string_view src) {
  SignalExpr e;
  e.root_ = Parser(src).parse();
  e.source_ = std::string(src);
  return e;
}

}  // namespace chinf
