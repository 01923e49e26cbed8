#pragma once

#include <stdexcept>
#include <string>

namespace corrbandit {

// Bad user-supplied configuration (CLI flags, config file contents).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or insufficient input data (CSV series, belief files).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated mathematical precondition on a library call.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Internal numerical invariant broke (e.g. a posterior variance collapsed
// to zero or below). Indicates a state the algorithms cannot continue from.
struct DegeneracyError : std::logic_error {
    using std::logic_error::logic_error;
};

// A statistical test has no defined answer on the given input
// (e.g. every paired difference is zero).
struct UndefinedTestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace corrbandit
