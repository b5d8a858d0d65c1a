#include <doctest.h>

#include "esg/classifier.hpp"
#include "esg/error.hpp"
#include "fixtures.hpp"

#include <atomic>
#include <thread>

using namespace esg;

TEST_CASE("parse_verdict accepts a leading 0/1/yes/no token")
{
    CHECK(parse_verdict("1") == ParsedLabel::One);
    CHECK(parse_verdict("0") == ParsedLabel::Zero);
    CHECK(parse_verdict("  1.\n") == ParsedLabel::One);
    CHECK(parse_verdict("\"0\"") == ParsedLabel::Zero);
    CHECK(parse_verdict("YES") == ParsedLabel::One);
    CHECK(parse_verdict("No, it does not") == ParsedLabel::Zero);
    CHECK(parse_verdict("1 - the excerpt matches") == ParsedLabel::One);
    CHECK(parse_verdict("\xE2\x80\x9C" "1" "\xE2\x80\x9D") == ParsedLabel::One);
    CHECK(parse_verdict("01") == ParsedLabel::Unparseable);
    CHECK(parse_verdict("10") == ParsedLabel::Unparseable);
    CHECK(parse_verdict("maybe") == ParsedLabel::Unparseable);
    CHECK(parse_verdict("yesterday") == ParsedLabel::Unparseable);
    CHECK(parse_verdict("") == ParsedLabel::Unparseable);
    CHECK(parse_verdict("   ") == ParsedLabel::Unparseable);
}

TEST_CASE("prompt rendering is verbatim and invertible")
{
    const auto& tmpl = default_classification_template();
    ClassificationRequest req{"We run {ACTIVITY} kilns.\nSecond line.", "Manufacture of cement {TEXT}"};
    auto prompt = render_prompt(tmpl, req);
    CHECK(prompt.find(req.chunk_text) != std::string::npos);
    CHECK(prompt.find(req.activity_text) != std::string::npos);
    CHECK(prompt.ends_with(std::string(kOutputInstruction)));
    CHECK(render_prompt(tmpl, req) == prompt);
    auto back = unrender_prompt(tmpl, prompt);
    REQUIRE(back);
    CHECK(back->first == req.chunk_text);
    CHECK(back->second == req.activity_text);
    CHECK_FALSE(unrender_prompt(tmpl, "unrelated"));

    auto msgs = render_messages(tmpl, req);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0] == ChatMessage{"system", tmpl.role});
    CHECK(msgs[1] == ChatMessage{"user", prompt});
}

TEST_CASE("template validation")
{
    CHECK_NOTHROW(validate(default_classification_template()));
    CHECK_THROWS_AS(validate(PromptTemplate{"x", "r", "{TEXT} only"}), Error);
    CHECK_THROWS_AS(validate(PromptTemplate{"x", "r", "{TEXT}{ACTIVITY}"}), Error);
    CHECK_THROWS_AS(validate(PromptTemplate{"x", "r", "{TEXT} {ACTIVITY} {TEXT}"}), Error);
    CHECK_THROWS_AS(builtin_template("nope"), Error);
}

TEST_CASE("classify retries unparseable output then errors")
{
    std::atomic<int> calls{0};
    FunctionBackend flaky("flaky", [&](const InferenceCall& call) {
        ++calls;
        CHECK(call.tag("chunk_id") == "c1");
        return Completion{call.tag("attempt") == "3" ? "1" : "I think so", std::nullopt};
    });
    ClassificationRequest req{"text", "activity", default_classification_template().template_id, "c1", "a1"};
    auto v = classify(req, flaky);
    CHECK(v.label == 1);
    CHECK(v.raw_output == "1");
    CHECK(calls == 3);

    FunctionBackend never("never", [](const InferenceCall&) { return Completion{"perhaps", std::nullopt}; });
    try {
        classify(req, never, {1, std::nullopt});
        FAIL("expected UnparseableError");
    } catch (const UnparseableError& e) {
        CHECK(e.attempts() == 2);
        CHECK(e.raw_output() == "perhaps");
    }
}

TEST_CASE("classify uses reported probabilities with threshold 0.5")
{
    double p = 0.5;
    FunctionBackend prob("prob", [&](const InferenceCall&) { return Completion{"0", p}; });
    ClassificationRequest req{"text", "activity"};
    CHECK(classify(req, prob).label == 1);
    p = 0.4999;
    auto v = classify(req, prob);
    CHECK(v.label == 0);
    CHECK(v.probability == 0.4999);
    p = 1.5;
    CHECK_THROWS_AS(classify(req, prob), Error);
    CHECK_THROWS_AS(classify(ClassificationRequest{"", "a"}, prob), Error);
}

TEST_CASE("oracle backend answers planted pairs")
{
    OracleBackend oracle;
    oracle.set("c1", "a1", 1);
    ClassificationRequest yes{"t", "a", default_classification_template().template_id, "c1", "a1"};
    ClassificationRequest no{"t", "a", default_classification_template().template_id, "c2", "a1"};
    CHECK(classify(yes, oracle).label == 1);
    CHECK(classify(no, oracle).label == 0);
}

TEST_CASE("classify_batch preserves order and isolates failures")
{
    FunctionBackend backend("jitter", [](const InferenceCall& call) {
        auto id = std::stoi(call.tag("chunk_id"));
        std::this_thread::sleep_for(std::chrono::microseconds((37 * id) % 400));
        if (id % 10 == 7) throw TransportError("down", 3);
        return Completion{id % 2 ? "1" : "0", std::nullopt};
    });
    std::vector<ClassificationRequest> reqs;
    for (int i = 0; i < 60; ++i)
        reqs.push_back({"text " + std::to_string(i), "act", default_classification_template().template_id,
                        std::to_string(i), "a"});
    for (std::size_t par : {1, 3, 8}) {
        auto out = classify_batch(reqs, backend, par);
        REQUIRE(out.size() == 60);
        for (int i = 0; i < 60; ++i) {
            if (i % 10 == 7) {
                CHECK_FALSE(out[i].ok());
                CHECK(out[i].error_kind == ErrorKind::Transport);
            } else {
                REQUIRE(out[i].ok());
                CHECK(out[i].verdict->label == i % 2);
            }
        }
    }
    CHECK_THROWS_AS(classify_batch(reqs, backend, 0), Error);
}

TEST_CASE("classify_batch runs concurrently up to the limit")
{
    std::atomic<int> active{0}, peak{0};
    FunctionBackend slow("slow", [&](const InferenceCall&) {
        int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return Completion{"1", std::nullopt};
    });
    std::vector<ClassificationRequest> reqs(24, ClassificationRequest{"t", "a"});
    classify_batch(reqs, slow, 4);
    CHECK(peak.load() <= 4);
    CHECK(peak.load() >= 2);
}

TEST_CASE("verdict JSON round-trip")
{
    Verdict v{1, 0.75, "1", "esg-activity-v1"};
    CHECK(verdict_from_json(to_json(v)) == v);
    Verdict w{0, std::nullopt, "no", "esg-activity-v1"};
    CHECK(verdict_from_json(to_json(w)) == w);
}
