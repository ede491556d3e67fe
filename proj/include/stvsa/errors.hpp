#pragma once

#include <stdexcept>
#include <string>

namespace stvsa {

// Shape or dimension disagreement between tensors/operands.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Mathematically invalid input (log of a negative, empty reduction, ...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// API misuse: calling an operation outside its stated contract.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Invalid configuration value or an unrunnable experiment setup.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN/Inf or other numeric breakdown detected at runtime.
class NumericFault : public std::runtime_error {
public:
    explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stvsa
