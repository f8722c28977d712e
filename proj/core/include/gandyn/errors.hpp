#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gandyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (wrong rank, bad spec, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent extents while building or evaluating a graph.
class ShapeError : public Error {
 public:
  ShapeError(std::size_t node, const std::string& what)
      : Error("node " + std::to_string(node) + ": " + what), node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// A computation produced a non-finite value or left its admissible range.
/// Training treats this as an expected outcome rather than a crash.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t node, const std::string& what)
      : Error(what), node_(node) {}

  /// Graph node that first produced a non-finite value (0 when not graph-related).
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// An iterative numerical routine ran out of its iteration budget.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gandyn
