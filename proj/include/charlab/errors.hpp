#pragma once

#include <stdexcept>
#include <string>

namespace charlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression text. Carries the byte offset of the failure and a
/// description of what the parser expected there.
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t offset, std::string expected)
        : Error("syntax error at offset " + std::to_string(offset) + ": expected " + expected),
          offset(offset),
          expected(std::move(expected)) {}

    std::size_t offset;
    std::string expected;
};

/// An identifier was applied as a function call but is not in the allowed set.
class UnknownFunctionError : public Error {
public:
    UnknownFunctionError(std::string name, std::size_t offset)
        : Error("unknown function '" + name + "' at offset " + std::to_string(offset)),
          name(std::move(name)),
          offset(offset) {}

    std::string name;
    std::size_t offset;
};

/// Evaluation left a function's domain (log of non-positive, division by
/// zero, sqrt of negative). Identifies the offending subexpression.
class DomainError : public Error {
public:
    DomainError(std::string reason, std::string subexpr)
        : Error(reason + " in '" + subexpr + "'"), subexpr(std::move(subexpr)) {}

    std::string subexpr;
};

/// A free variable of the expression had no binding.
class UnboundVariableError : public Error {
public:
    explicit UnboundVariableError(std::string name)
        : Error("unbound variable '" + name + "'"), name(std::move(name)) {}

    std::string name;
};

class TooFewSamplesError : public Error {
public:
    using Error::Error;
};

class LoopNotClosedError : public Error {
public:
    using Error::Error;
};

class InitialJetOffManifoldError : public Error {
public:
    InitialJetOffManifoldError(double residual)
        : Error("initial jet is off the solution manifold: |F| = " + std::to_string(residual)),
          residual(residual) {}

    double residual;
};

class EmptySeedsError : public Error {
public:
    using Error::Error;
};

class OutOfRangeError : public Error {
public:
    using Error::Error;
};

/// Legendre Hessian is singular or numerically unusable; signals a
/// degenerate transformation between tangent and cotangent descriptions.
class SingularHessianError : public Error {
public:
    using Error::Error;
};

class NoConvergenceError : public Error {
public:
    using Error::Error;
};

/// Verlet was requested for a Hamiltonian not declared separable.
class SeparabilityError : public Error {
public:
    using Error::Error;
};

class GridTooSmallError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

/// Scenario file could not be parsed. Line numbers are 1-based.
class SpecParseError : public Error {
public:
    SpecParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line(line) {}

    int line;
};

/// Scenario file parsed but the contents are inconsistent with its kind.
class ValidationError : public Error {
public:
    ValidationError(std::string key, const std::string& what)
        : Error("key '" + key + "': " + what), key(std::move(key)) {}

    std::string key;
};

}  // namespace charlab
