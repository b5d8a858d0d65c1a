#include "esg/classifier.hpp"

#include "esg/parallel.hpp"
#include "esg/text.hpp"

#include <array>

namespace esg {

using nlohmann::json;

namespace {

// Body split around its two placeholders: lead, first, middle, second, tail.
struct TemplateParts {
    std::string_view lead;
    bool text_first = true;
    std::string_view middle;
    std::string_view tail;
};

std::size_t count_of(std::string_view hay, std::string_view needle)
{
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

TemplateParts split_template(const PromptTemplate& tmpl)
{
    validate(tmpl);
    std::string_view body = tmpl.body;
    auto t = body.find(kTextPlaceholder);
    auto a = body.find(kActivityPlaceholder);
    TemplateParts parts;
    parts.text_first = t < a;
    auto first = std::min(t, a);
    auto second = std::max(t, a);
    auto first_len = parts.text_first ? kTextPlaceholder.size() : kActivityPlaceholder.size();
    auto second_len = parts.text_first ? kActivityPlaceholder.size() : kTextPlaceholder.size();
    parts.lead = body.substr(0, first);
    parts.middle = body.substr(first + first_len, second - first - first_len);
    parts.tail = body.substr(second + second_len);
    return parts;
}

std::string suffix_of(std::string_view tail)
{
    return std::string(tail) + "\n\n" + std::string(kOutputInstruction);
}

}  // namespace

const PromptTemplate& default_classification_template()
{
    static const PromptTemplate tmpl{
        "esg-activity-v1",
        "You assess whether a company disclosure excerpt pertains to a specific EU taxonomy activity.",
        "EU taxonomy activity:\n{ACTIVITY}\n\nDisclosure excerpt:\n{TEXT}",
    };
    return tmpl;
}

const PromptTemplate& builtin_template(std::string_view template_id)
{
    if (template_id == default_classification_template().template_id) return default_classification_template();
    throw Error(ErrorKind::NotFound, "unknown prompt template \"" + std::string(template_id) + "\"");
}

void validate(const PromptTemplate& tmpl)
{
    if (tmpl.template_id.empty()) throw Error(ErrorKind::Validation, "prompt template without id");
    for (auto ph : {kTextPlaceholder, kActivityPlaceholder}) {
        auto n = count_of(tmpl.body, ph);
        if (n != 1)
            throw Error(ErrorKind::Validation, "template " + tmpl.template_id + " must contain " + std::string(ph) +
                                                   " exactly once (found " + std::to_string(n) + ")");
    }
    auto t = tmpl.body.find(kTextPlaceholder);
    auto a = tmpl.body.find(kActivityPlaceholder);
    auto first_end = std::min(t, a) + (t < a ? kTextPlaceholder.size() : kActivityPlaceholder.size());
    if (first_end == std::max(t, a))
        throw Error(ErrorKind::Validation, "template " + tmpl.template_id + " has adjacent placeholders");
}

json to_json(const Verdict& v)
{
    json r{{"label", v.label}, {"raw_output", v.raw_output}, {"template_id", v.template_id}};
    r["probability"] = v.probability ? json(*v.probability) : json(nullptr);
    return r;
}

Verdict verdict_from_json(const json& r)
{
    Verdict v;
    try {
        v.label = r.at("label").get<int>();
        v.raw_output = r.value("raw_output", "");
        v.template_id = r.value("template_id", "");
        if (r.contains("probability") && !r.at("probability").is_null()) v.probability = r.at("probability").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("verdict: ") + e.what());
    }
    if (v.label != 0 && v.label != 1) throw Error(ErrorKind::Validation, "verdict label must be 0 or 1");
    return v;
}

std::string render_prompt(const PromptTemplate& tmpl, const ClassificationRequest& req)
{
    auto parts = split_template(tmpl);
    const auto& first = parts.text_first ? req.chunk_text : req.activity_text;
    const auto& second = parts.text_first ? req.activity_text : req.chunk_text;
    std::string out;
    out.reserve(tmpl.body.size() + first.size() + second.size() + kOutputInstruction.size() + 2);
    out.append(parts.lead).append(first).append(parts.middle).append(second);
    out += suffix_of(parts.tail);
    return out;
}

std::vector<ChatMessage> render_messages(const PromptTemplate& tmpl, const ClassificationRequest& req)
{
    return {{"system", tmpl.role}, {"user", render_prompt(tmpl, req)}};
}

std::optional<std::pair<std::string, std::string>> unrender_prompt(const PromptTemplate& tmpl,
                                                                   std::string_view prompt)
{
    auto parts = split_template(tmpl);
    auto suffix = suffix_of(parts.tail);
    if (prompt.size() < parts.lead.size() + parts.middle.size() + suffix.size()) return std::nullopt;
    if (!prompt.starts_with(parts.lead) || !prompt.ends_with(suffix)) return std::nullopt;
    auto inner = prompt.substr(parts.lead.size(), prompt.size() - parts.lead.size() - suffix.size());
    // The first value is the controlled one (activity text in the default
    // template), so split at the first occurrence of the middle literal.
    auto at = inner.find(parts.middle);
    if (at == std::string_view::npos) return std::nullopt;
    std::string first(inner.substr(0, at));
    std::string second(inner.substr(at + parts.middle.size()));
    if (parts.text_first) return std::make_pair(std::move(first), std::move(second));
    return std::make_pair(std::move(second), std::move(first));
}

ParsedLabel parse_verdict(std::string_view raw)
{
    auto is_alnum = [](unsigned char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    };
    std::size_t i = 0;
    while (i < raw.size() && !is_alnum(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t j = i;
    while (j < raw.size() && is_alnum(static_cast<unsigned char>(raw[j]))) ++j;
    auto token = to_lower_ascii(raw.substr(i, j - i));
    if (token == "1" || token == "yes") return ParsedLabel::One;
    if (token == "0" || token == "no") return ParsedLabel::Zero;
    return ParsedLabel::Unparseable;
}

Verdict classify(const ClassificationRequest& req, InferenceBackend& backend, const ClassifyOptions& options)
{
    if (trim(req.chunk_text).empty() || trim(req.activity_text).empty())
        throw Error(ErrorKind::Validation, "classification request needs non-empty text and activity");
    const PromptTemplate& tmpl = options.prompt ? *options.prompt : builtin_template(req.prompt_template_id);

    InferenceCall call;
    call.messages = render_messages(tmpl, req);
    call.tags = {{"chunk_id", req.chunk_id}, {"activity_id", req.activity_id}};

    const int attempts = std::max(options.max_retries, 0) + 1;
    std::string last_raw;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        call.tags["attempt"] = std::to_string(attempt);
        auto completion = backend.complete(call);
        last_raw = completion.text;
        Verdict v;
        v.raw_output = completion.text;
        v.template_id = tmpl.template_id;
        if (completion.probability) {
            double p = *completion.probability;
            if (!(p >= 0.0 && p <= 1.0))
                throw Error(ErrorKind::Validation, "backend probability outside [0, 1]");
            v.probability = p;
            v.label = p >= kDecisionThreshold ? 1 : 0;
            return v;
        }
        auto parsed = parse_verdict(completion.text);
        if (parsed != ParsedLabel::Unparseable) {
            v.label = parsed == ParsedLabel::One ? 1 : 0;
            return v;
        }
    }
    throw UnparseableError(last_raw, attempts);
}

std::vector<BatchOutcome> classify_batch(std::span<const ClassificationRequest> reqs, InferenceBackend& backend,
                                         std::size_t parallelism, const ClassifyOptions& options)
{
    if (parallelism < 1) throw Error(ErrorKind::InvalidArgument, "parallelism must be >= 1");
    std::vector<BatchOutcome> out(reqs.size());
    parallel_for(reqs.size(), parallelism, [&](std::size_t i) {
        try {
            out[i].verdict = classify(reqs[i], backend, options);
        } catch (const Error& e) {
            out[i].error = e.what();
            out[i].error_kind = e.kind();
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

}  // namespace esg
