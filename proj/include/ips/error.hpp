#pragma once

#include <stdexcept>
#include <string>

namespace ips {

// Bad parameters or inputs that violate an operation's precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A map or model lacks the structure an operation requires (e.g. dualizing a
// non-additive map) or a problem is too large for exact enumeration.
class Unsupported : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A checked identity failed at run time.
class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace ips
