#pragma once

#include <stdexcept>
#include <string>

namespace kgrl {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ParamError : std::runtime_error {
  explicit ParamError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};

struct TapeError : std::runtime_error {
  explicit TapeError(const std::string& msg) : std::runtime_error("tape error: " + msg) {}
};

// An entity with an empty neighbor list was asked for an attention output.
struct DegenerateNeighborhoodError : std::runtime_error {
  explicit DegenerateNeighborhoodError(const std::string& msg)
      : std::runtime_error("degenerate neighborhood: " + msg) {}
};

struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error("evaluation error: " + msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

}  // namespace kgrl
