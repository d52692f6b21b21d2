#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfbm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

class RoughnessError : public Error {
public:
    using Error::Error;
};

class OverflowError : public Error {
public:
    using Error::Error;
};

class BasisDegeneracyError : public Error {
public:
    using Error::Error;
};

class UnsupportedRegimeError : public Error {
public:
    using Error::Error;
};

class InteriorViolationError : public Error {
public:
    using Error::Error;
};

// Non-finite state in a forward scheme; step is the grid index where it appeared.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// Iteration cap reached. trace holds the residual or distance history.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> fields)
        : Error(join(fields)), fields_(std::move(fields)) {}
    const std::vector<std::string>& fields() const noexcept { return fields_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "\n";
            out += s;
        }
        return out;
    }
    std::vector<std::string> fields_;
};

}  // namespace mfbm
