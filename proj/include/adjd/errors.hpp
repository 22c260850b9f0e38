#pragma once

#include <stdexcept>
#include <string>

namespace adjd {

/// Base of every error thrown by the library. `kind()` is a short stable tag
/// used by the CLI for machine-parsable failure lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error("argument", w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error("data", w) {}
};
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& w) : Error("unsupported", w) {}
};
struct SolverError : Error {
  SolverError(const std::string& w, double clock)
      : Error("solver", w), clock_(clock) {}
  double clock() const noexcept { return clock_; }

 private:
  double clock_;
};
struct StiffnessError : Error {
  StiffnessError(const std::string& w, double clock)
      : Error("stiffness", w), clock_(clock) {}
  double clock() const noexcept { return clock_; }

 private:
  double clock_;
};
struct BackpropError : Error {
  BackpropError(const std::string& w, double clock)
      : Error("backprop", w), clock_(clock) {}
  double clock() const noexcept { return clock_; }

 private:
  double clock_;
};
struct TrainingError : Error {
  TrainingError(const std::string& w, long step)
      : Error("training", w), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct ParseError : Error {
  ParseError(const std::string& w, std::size_t byte)
      : Error("parse", w), byte_(byte) {}
  std::size_t byte() const noexcept { return byte_; }

 private:
  std::size_t byte_;
};
struct ValidationError : Error {
  ValidationError(const std::string& key_path, const std::string& w)
      : Error("validation", key_path + ": " + w), key_path_(key_path) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace adjd
