#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace esg {

enum class ErrorKind {
    InvalidArgument,
    Parse,
    Validation,
    NotFound,
    Conflict,
    Io,
    Transport,
    Unparseable,
    SchemaVersion,
    Internal,
};

std::string_view to_string(ErrorKind kind);

// Base exception for everything the library reports. `kind` drives the HTTP
// status mapping in the service and the exit code in the CLI.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts)
        : Error(ErrorKind::Transport, message), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

// Raised when a backend kept answering with something that is neither 0 nor 1.
class UnparseableError : public Error {
public:
    UnparseableError(const std::string& raw_output, int attempts)
        : Error(ErrorKind::Unparseable,
                "unparseable verdict after " + std::to_string(attempts) + " attempts: \"" +
                    raw_output.substr(0, 200) + "\""),
          raw_output_(raw_output),
          attempts_(attempts) {}

    const std::string& raw_output() const noexcept { return raw_output_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string raw_output_;
    int attempts_;
};

class PendingCandidatesError : public Error {
public:
    explicit PendingCandidatesError(std::vector<std::string> ids);

    const std::vector<std::string>& candidate_ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

}  // namespace esg
