#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "esg/error.hpp"
#include "esg/inference.hpp"

namespace esg {

inline constexpr double kDecisionThreshold = 0.5;

inline constexpr std::string_view kTextPlaceholder = "{TEXT}";
inline constexpr std::string_view kActivityPlaceholder = "{ACTIVITY}";

// Appended verbatim to every classification prompt.
inline constexpr std::string_view kOutputInstruction =
    "Answer with a single character: 1 if the excerpt pertains to the activity, 0 otherwise.";

// A versioned prompt. `role` becomes the system message; `body` holds each
// placeholder exactly once and becomes the user message followed by the
// output instruction.
struct PromptTemplate {
    std::string template_id;
    std::string role;
    std::string body;

    bool operator==(const PromptTemplate&) const = default;
};

const PromptTemplate& default_classification_template();
// Looks up a built-in template; throws Error(NotFound).
const PromptTemplate& builtin_template(std::string_view template_id);

// Throws Error(Validation) when a placeholder is missing or repeated.
void validate(const PromptTemplate& tmpl);

struct ClassificationRequest {
    std::string chunk_text;     // c
    std::string activity_text;  // i, the activity's short description
    std::string prompt_template_id = default_classification_template().template_id;
    // Audit and stub routing; not part of the prompt.
    std::string chunk_id;
    std::string activity_id;
};

struct Verdict {
    int label = 0;
    std::optional<double> probability;
    std::string raw_output;
    std::string template_id;

    bool operator==(const Verdict&) const = default;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& r);

// Substitutes in a single pass, so placeholder-like text inside the inputs is
// left alone.
std::string render_prompt(const PromptTemplate& tmpl, const ClassificationRequest& req);
std::vector<ChatMessage> render_messages(const PromptTemplate& tmpl, const ClassificationRequest& req);

// Inverse of render_prompt: recovers (chunk_text, activity_text), or nullopt
// when `prompt` was not produced by `tmpl`.
std::optional<std::pair<std::string, std::string>> unrender_prompt(const PromptTemplate& tmpl,
                                                                   std::string_view prompt);

enum class ParsedLabel { Zero, One, Unparseable };

// Never throws. Leading whitespace and punctuation are skipped; the first
// alphanumeric run must be exactly "1", "0", "yes" or "no" (any case).
ParsedLabel parse_verdict(std::string_view raw);

struct ClassifyOptions {
    int max_retries = 2;                         // extra attempts on unparseable output
    std::optional<PromptTemplate> prompt;        // overrides the request's template id
};

// f(c, i). Throws TransportError from the backend, UnparseableError after
// max_retries + 1 unusable answers, Error(Validation) for empty inputs.
Verdict classify(const ClassificationRequest& req, InferenceBackend& backend,
                 const ClassifyOptions& options = {});

struct BatchOutcome {
    std::optional<Verdict> verdict;
    std::string error;  // set when verdict is empty
    ErrorKind error_kind = ErrorKind::Internal;

    bool ok() const noexcept { return verdict.has_value(); }
};

// Output order follows input order. Failures are reported per item.
std::vector<BatchOutcome> classify_batch(std::span<const ClassificationRequest> reqs,
                                         InferenceBackend& backend, std::size_t parallelism,
                                         const ClassifyOptions& options = {});

}  // namespace esg
