#pragma once

#include <stdexcept>
#include <string>

namespace nti {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Posterior or DDIM coefficients that would divide by zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, int timestep) : Error(what), timestep_(timestep) {}
  int timestep() const noexcept { return timestep_; }

 private:
  int timestep_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int timestep) : Error(what), timestep_(timestep) {}
  int timestep() const noexcept { return timestep_; }

 private:
  int timestep_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace nti
