#ifndef SYSTEMMATCH_ERRORS_HPP
#define SYSTEMMATCH_ERRORS_HPP

#include <stdexcept>
#include <string>

/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by all modules.
 *
 * Each category maps to one CLI exit code, see `exit_code()`.
 */

namespace systemmatch {

/**
 * @brief Base class for all errors raised by this library.
 */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

/**
 * @brief Bad configuration or invalid argument supplied by the caller.
 */
class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

/**
 * @brief Malformed, empty or inconsistent data.
 */
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/**
 * @brief Numerical failure: solver non-convergence, training divergence, degenerate scores.
 */
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/**
 * @brief Parse failure with the offending line number (1-based).
 */
class ParseError : public DataError {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what) :
        DataError(path + ":" + std::to_string(line) + ": " + what), my_line(line) {}

    std::size_t line() const noexcept { return my_line; }

private:
    std::size_t my_line;
};

}

#endif
