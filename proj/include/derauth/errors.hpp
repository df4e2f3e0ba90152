#pragma once

#include <stdexcept>
#include <string>

namespace derauth {

// Invalid configuration or startup parameters.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the domain of an operation (bad cell id, zero attempts, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation not permitted in the current session state.
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// The fuel gauge refuses to measure a cell that has not been through a learning cycle.
class GaugeRefusal : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Measurement voltage lies outside the characterized discharge window.
class OutOfWindowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace derauth
