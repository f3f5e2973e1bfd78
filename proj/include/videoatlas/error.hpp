#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace atlas {

/// Base class for every error the engine raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A cell index or address that does not exist in the grid.
class AddressError : public Error {
public:
    using Error::Error;
};

/// Frame extraction failed (seek out of range, decoder reported failure).
class MediaError : public Error {
public:
    using Error::Error;
};

/// The host environment is missing something we need (decoder binary, files).
class EnvironmentError : public Error {
public:
    using Error::Error;
};

/// An action was submitted that is not in the state's available set.
class InvalidActionError : public Error {
public:
    using Error::Error;
};

/// An action referenced a cell that is blacked out by negative memory.
class DeadCellError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

/// Structured failure returned (not thrown) by the model-output parsers.
struct ParseError {
    enum class Code {
        NoJson,
        Schema,
        Count,
        Range,
        Constraint,
        Ambiguous,
        UnknownAction,
        MissingArgument,
    };
    Code code = Code::Schema;
    std::string message;
    std::string raw;
};

const char* to_string(ParseError::Code code);

/// Minimal value-or-error holder; std::expected is not available in C++20.
template <class T>
class Parsed {
public:
    Parsed(T value) : v_(std::move(value)) {}
    Parsed(ParseError err) : v_(std::move(err)) {}

    bool ok() const { return v_.index() == 0; }
    explicit operator bool() const { return ok(); }

    const T& value() const& {
        if (!ok()) throw Error("parse failed: " + error().message);
        return std::get<0>(v_);
    }
    T&& value() && {
        if (!ok()) throw Error("parse failed: " + error().message);
        return std::get<0>(std::move(v_));
    }
    const T& operator*() const& { return value(); }
    const T* operator->() const { return &value(); }

    const ParseError& error() const { return std::get<1>(v_); }

private:
    std::variant<T, ParseError> v_;
};

}  // namespace atlas
