#pragma once

#include <stdexcept>
#include <string>

namespace atomdet {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The probability model is singular at some pixel (e.g. lambda = 0 where a PSF is nonzero).
class ModelError : public Error {
public:
    using Error::Error;
};

class IllConditioned : public Error {
public:
    IllConditioned(const std::string& what, double condition)
        : Error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Raised for combinations the density model cannot represent (sigma = 0 in the continuous path).
class Unsupported : public Error {
public:
    using Error::Error;
};

} // namespace atomdet
