#pragma once

#include <stdexcept>
#include <string>

namespace eosmute {

// Input data cannot be decoded (bad WAV, empty audio, malformed manifest).
class DecodeError : public std::runtime_error {
public:
  explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated an operation precondition.
class ContractError : public std::logic_error {
public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// A value is outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Bad user-supplied configuration (unknown defence name, empty dataset, ...).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// The model does not support the requested capability (e.g. gradients).
class CapabilityError : public std::runtime_error {
public:
  explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace eosmute
