#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xlaug {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input that could not be parsed. Carries a byte offset when the
// underlying parser reports one (0 = unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t byte_offset = 0)
        : Error(msg), byte_offset_(byte_offset) {}
    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Filesystem/stream failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Dictionary translation failure; names the token and direction.
class TranslateError : public Error {
public:
    TranslateError(const std::string& msg, std::string token,
                   std::string from, std::string to)
        : Error(msg), token_(std::move(token)), from_(std::move(from)), to_(std::move(to)) {}
    const std::string& token() const noexcept { return token_; }
    const std::string& from() const noexcept { return from_; }
    const std::string& to() const noexcept { return to_; }

private:
    std::string token_, from_, to_;
};

// Bad command line or config file contents (CLI exit status 2).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace xlaug
