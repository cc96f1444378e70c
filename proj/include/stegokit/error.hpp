#pragma once

#include <stdexcept>
#include <string>

namespace stegokit {

// Exit codes used by the command-line tool. Library code throws the
// matching exception types below and the tool maps them.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  io = 3,
  integrity = 4,
  divergence = 5,
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training step produces a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::string layer, long iteration)
      : std::runtime_error(what), layer_(std::move(layer)), iteration_(iteration) {}

  const std::string& layer() const noexcept { return layer_; }
  long iteration() const noexcept { return iteration_; }

 private:
  std::string layer_;
  long iteration_;
};

class EmptyHistogram : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class E = InvalidArgument>
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw E(msg);
}

}  // namespace detail
}  // namespace stegokit
