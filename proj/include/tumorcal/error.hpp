#pragma once

#include <stdexcept>
#include <string>

namespace tumorcal {

/// Thrown when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by the ODE integrator; carries the time and step size at failure.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double time, double step, std::size_t steps_taken)
      : std::runtime_error(what + " (t=" + std::to_string(time) + ", h=" + std::to_string(step) +
                           ", steps=" + std::to_string(steps_taken) + ")"),
        time_(time),
        step_(step),
        steps_taken_(steps_taken) {}

  double time() const noexcept { return time_; }
  double step() const noexcept { return step_; }
  std::size_t steps_taken() const noexcept { return steps_taken_; }

 private:
  double time_;
  double step_;
  std::size_t steps_taken_;
};

/// Every particle carries zero likelihood; the ensemble cannot be renormalized.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. `row()` is 1-based (header is row 1), 0 if not row-specific.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace tumorcal
