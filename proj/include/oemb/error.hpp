#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oemb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, bad configs, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Parse failure tied to a line of a text input.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Raised when an embedding is too close to zero to normalize.
/// `sample` is the offending index within a batch, when known.
class DegenerateEmbedding : public Error {
public:
    explicit DegenerateEmbedding(const std::string& what, std::ptrdiff_t sample = -1)
        : Error(what), sample_(sample) {}

    std::ptrdiff_t sample() const noexcept { return sample_; }

private:
    std::ptrdiff_t sample_;
};

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) {
        throw ShapeError(what);
    }
}

}  // namespace oemb
