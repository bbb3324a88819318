#pragma once

#include <stdexcept>
#include <string>

namespace volterra {

// Quadrature refinements failed to settle: the requested integral diverges
// (or the integrand violates the stated smoothness precondition).
class NonIntegrableError : public std::runtime_error {
public:
    explicit NonIntegrableError(const std::string& what) : std::runtime_error(what) {}
};

// A K_g evaluation scheme was requested whose precondition the kernel violates.
class SchemeUnavailableError : public std::runtime_error {
public:
    explicit SchemeUnavailableError(const std::string& what) : std::runtime_error(what) {}
};

class NotSemimartingaleError : public std::runtime_error {
public:
    explicit NotSemimartingaleError(const std::string& what) : std::runtime_error(what) {}
};

class NotShiftInvariantError : public std::runtime_error {
public:
    explicit NotShiftInvariantError(const std::string& what) : std::runtime_error(what) {}
};

class PartitionMisalignedError : public std::runtime_error {
public:
    explicit PartitionMisalignedError(const std::string& what) : std::runtime_error(what) {}
};

class SingularDiagonalError : public std::runtime_error {
public:
    explicit SingularDiagonalError(const std::string& what) : std::runtime_error(what) {}
};

class RequiresBrownianError : public std::runtime_error {
public:
    explicit RequiresBrownianError(const std::string& what) : std::runtime_error(what) {}
};

class RequiresUnitVolatilityError : public std::runtime_error {
public:
    explicit RequiresUnitVolatilityError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace volterra
