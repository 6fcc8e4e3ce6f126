#pragma once

#include <stdexcept>
#include <string>

namespace dedtwin {

// Input/config problems. The CLI maps these to exit code 2.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A value outside the domain of an operation (log of a nonpositive sample).
class DomainError : public InvalidArgument {
public:
  DomainError(const std::string& what, std::size_t index)
      : InvalidArgument(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

class EmptyOverlap : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

class EmptyDataset : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

// Numerical failures. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Unidentifiable : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class UndefinedMetric : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Thrown by circle fitting when the mask holds no foreground pixel.
class EmptyPool : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Carries the best iterate reached before the failure.
template <class Best>
class NonConvergence : public NumericalError {
public:
  NonConvergence(const std::string& what, Best best)
      : NumericalError(what), best_(std::move(best)) {}
  const Best& best() const noexcept { return best_; }

private:
  Best best_;
};

class TuningFailure : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace dedtwin
