#pragma once

#include <stdexcept>
#include <string>

namespace nslvae {

// Failure categories double as CLI exit codes.
enum class ErrorKind : int {
  usage = 2,
  parse = 3,
  shape = 4,
  train = 5,
  format = 6,
  eval = 7,
  io = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

struct TrainError : Error {
  explicit TrainError(const std::string& what) : Error(ErrorKind::train, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

struct EvalError : Error {
  explicit EvalError(const std::string& what) : Error(ErrorKind::eval, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace nslvae
