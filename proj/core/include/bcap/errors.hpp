#pragma once

#include <stdexcept>

namespace bcap {

// Error taxonomy. Everything derives from Error so callers can catch broadly,
// but tests and the CLI distinguish the kinds below.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shape/invariant violations (caller handed us something malformed)
struct ValidationError : Error {
  using Error::Error;
};

// mathematical precondition violated by the data (e.g. non-PD matrix);
// message names the offending quantity
struct DomainError : Error {
  using Error::Error;
};

// rank-deficient / constant / otherwise degenerate input
struct DegenerateError : Error {
  using Error::Error;
};

// non-finite intermediate; message carries the term that blew up
struct NumericError : Error {
  using Error::Error;
};

// sampler health check failed (e.g. divergence rate)
struct DiagnosticError : Error {
  using Error::Error;
};

// could not start a sampler chain
struct InitializationError : Error {
  using Error::Error;
};

// CSV/JSON parse failure; message carries file and line
struct ParseError : Error {
  using Error::Error;
};

// bad argument to an operation or CLI command
struct ArgumentError : Error {
  using Error::Error;
};

}  // namespace bcap
