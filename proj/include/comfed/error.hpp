#pragma once

#include <stdexcept>
#include <string>

namespace comfed {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Matrix/vector dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain (label out of range, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. a forward cache handed to the wrong network.
class ContractError : public Error {
public:
    using Error::Error;
};

class ModalityError : public Error {
public:
    using Error::Error;
};

// Round mismatches, duplicate senders, malformed packets.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or parameters detected mid-run.
class NumericError : public Error {
public:
    NumericError(std::size_t round, std::size_t client, const std::string& what)
        : Error("numeric blowup at round " + std::to_string(round) + ", client " +
                std::to_string(client) + ": " + what),
          round_(round), client_(client) {}

    std::size_t round() const noexcept { return round_; }
    std::size_t client() const noexcept { return client_; }

private:
    std::size_t round_;
    std::size_t client_;
};

}  // namespace comfed
