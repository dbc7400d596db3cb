#pragma once

#include <stdexcept>
#include <string>

namespace ntdlab {

/// Invalid problem data: shapes, probabilities, policies, file contents.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Feature or Gram matrix too close to rank deficient.
class RankError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// A linear system that must be uniquely solvable is numerically singular.
class SingularError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An operation was called outside the range where its guarantee holds.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ntdlab
