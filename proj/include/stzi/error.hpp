#pragma once

#include <stdexcept>
#include <string>

namespace stzi {

// Base for all library failures. `stage` is filled in by the pipeline when
// an error crosses a component boundary (e.g. "binary", "count").
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, std::string stage = {})
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradientNorm)
      : Error(what), gradientNorm_(gradientNorm) {}
  double gradientNorm() const noexcept { return gradientNorm_; }

 private:
  double gradientNorm_;
};

}  // namespace stzi
