#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace itersmooth {

/// Bad input values: non-finite numbers, out-of-range parameters, non-PSD covariances.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pitch too close to +-pi/2 for the Euler rate matrix to be evaluated.
class GimbalLockError : public std::domain_error {
public:
    GimbalLockError(double pitch, double eps)
        : std::domain_error("gimbal lock: |pitch| = " + std::to_string(pitch) +
                            " rad is within " + std::to_string(eps) + " rad of pi/2"),
          pitch_(pitch) {}

    double pitch() const { return pitch_; }

private:
    double pitch_;
};

/// A matrix that must be positive definite failed its Cholesky factorization.
class NumericalDegeneracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smoothed output requested before the lag window has filled.
class NotReadyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or inconsistent input file. Carries the 1-based line number (0 when not line specific).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace itersmooth
