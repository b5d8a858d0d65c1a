#include "esg/error.hpp"

namespace esg {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Io: return "io";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Unparseable: return "unparseable";
        case ErrorKind::SchemaVersion: return "schema_version";
        case ErrorKind::Internal: return "internal";
    }
    return "unknown";
}

namespace {

std::string pending_message(const std::vector<std::string>& ids)
{
    std::string msg = std::to_string(ids.size()) + " candidate(s) still pending:";
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
    if (ids.size() > 20) msg += " ...";
    return msg;
}

}  // namespace

PendingCandidatesError::PendingCandidatesError(std::vector<std::string> ids)
    : Error(ErrorKind::Conflict, pending_message(ids)), ids_(std::move(ids))
{
}

}  // namespace esg
