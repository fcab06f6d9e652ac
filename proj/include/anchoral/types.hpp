#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anchoral {

using Id = std::uint32_t;
using ClassId = std::int32_t;

/// n x d row-major instance representations.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using EmbeddingMatrix = RowMatrix<float>;

/// Thrown when a caller breaks an operation's precondition.
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Invalid numeric input (zero-norm vectors, non-distributions).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Bad configuration or infeasible experiment setup.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ParseErrorKind {
  Io,
  BadMagic,
  BadVersion,
  Truncated,
  TrailingBytes,
  NonFinite,
  BadHeader,
  BadRow,
  Mismatch,
};

const char *to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
public:
  ParseError(ParseErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ParseErrorKind kind() const noexcept { return kind_; }

private:
  ParseErrorKind kind_;
};

}  // namespace anchoral
