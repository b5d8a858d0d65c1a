#include <doctest.h>

#include "esg/error.hpp"
#include "esg/pipeline.hpp"
#include "esg/text.hpp"
#include "fixtures.hpp"

#include <future>

using namespace esg;

namespace {

// Top retrieval hit for one activity, used to plant the oracle's positive.
std::string top_chunk_for(const Project& p, const std::string& activity_id, EmbeddingBackend& e)
{
    auto index = build_index(p.all_chunks(), e);
    return query_top_k(index, p.taxonomy.find(activity_id)->short_description, 1, e).at(0).chunk.chunk_id;
}

}  // namespace

TEST_CASE("candidate ids are stable and scoped to the project")
{
    CHECK(make_candidate_id("p", "a", "c") == make_candidate_id("p", "a", "c"));
    CHECK(make_candidate_id("p", "a", "c") != make_candidate_id("q", "a", "c"));
    CHECK(make_candidate_id("p", "ab", "c") != make_candidate_id("p", "a", "bc"));
    CHECK(make_candidate_id("p", "a", "c").size() == 17);
}

TEST_CASE("project ids")
{
    CHECK(is_valid_project_id("abc-1_2"));
    CHECK_FALSE(is_valid_project_id(""));
    CHECK_FALSE(is_valid_project_id("../x"));
    CHECK_FALSE(is_valid_project_id("a b"));
}

TEST_CASE("run_pipeline with oracle backends yields exactly the planted positive")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    HashedBowEmbedder embedder;
    auto planted = top_chunk_for(project, "A05", embedder);
    OracleBackend oracle;
    oracle.set(planted, "A05", 1);

    auto report = run_pipeline(project, embedder, oracle);
    CHECK(report.activities == 12);
    CHECK(report.errors.empty());
    CHECK(report.index_rebuilt);
    const auto& cands = project.adjudication.candidates();
    CHECK(cands.size() == 12 * 5);
    int positives = 0;
    for (const auto& c : cands) {
        REQUIRE(c.model_verdict);
        CHECK(c.status == CandidateStatus::Pending);
        positives += c.model_verdict->label;
        const auto* doc = project.find_document(c.doc_id);
        REQUIRE(doc);
        CHECK(c.char_end <= doc->length());
        CHECK(c.candidate_id == make_candidate_id(project.project_id, c.activity_id, c.chunk_id));
    }
    CHECK(positives == 1);
    auto ann = annotate(project, AnnotationMode::Model);
    REQUIRE(ann.size() == 1);
    CHECK(ann[0].activity_id == "A05");
    CHECK(project.config.embedder_id == embedder.id());
    CHECK(project.config.classifier_id == "oracle");
}

TEST_CASE("run_pipeline is deterministic")
{
    auto f = fixtures::end_to_end_fixture();
    HashedBowEmbedder embedder;
    auto a = fixtures::end_to_end_project(f);
    auto b = fixtures::end_to_end_project(f);
    OracleBackend oracle;
    oracle.set(top_chunk_for(a, "A01", embedder), "A01", 1);
    run_pipeline(a, embedder, oracle);
    run_pipeline(b, embedder, oracle);
    CHECK(serialize_candidates(a.adjudication.candidates()) == serialize_candidates(b.adjudication.candidates()));
    CHECK(serialize_annotations(annotate(a, AnnotationMode::Model)) ==
          serialize_annotations(annotate(b, AnnotationMode::Model)));
}

TEST_CASE("run_pipeline respects NACE filtering and min_score")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    project.nace_codes = {NaceCode::parse("D.35")};
    HashedBowEmbedder embedder;
    OracleBackend oracle;
    auto report = run_pipeline(project, embedder, oracle);
    CHECK(report.activities == 4);
    CHECK(project.adjudication.candidates().size() == 20);

    project.config.min_score = 0.3;
    run_pipeline(project, embedder, oracle);
    for (const auto& c : project.adjudication.candidates()) CHECK(c.retrieval_score >= 0.3);

    project.nace_codes = {NaceCode::parse("Q")};
    CHECK_THROWS_AS(run_pipeline(project, embedder, oracle), Error);
}

TEST_CASE("run_pipeline errors")
{
    auto f = fixtures::end_to_end_fixture();
    Project empty;
    empty.project_id = "empty";
    empty.taxonomy = f.taxonomy;
    HashedBowEmbedder embedder;
    OracleBackend oracle;
    try {
        run_pipeline(empty, embedder, oracle);
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }

    auto project = fixtures::end_to_end_project(f);
    run_pipeline(project, embedder, oracle);
    HashedBowEmbedder other(256, 99);
    try {
        run_pipeline(project, other, oracle);
        FAIL("expected index/embedder mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
    CHECK(ensure_index(project, other, true));
}

TEST_CASE("backend failures are isolated per item")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    HashedBowEmbedder embedder;
    FunctionBackend partial("partial", [](const InferenceCall& call) {
        if (call.tag("activity_id") == "A03") throw TransportError("timeout", 3);
        return Completion{"0", std::nullopt};
    });
    auto report = run_pipeline(project, embedder, partial);
    CHECK(report.errors.size() == 5);
    for (const auto& c : project.adjudication.candidates()) CHECK(c.model_verdict.has_value() == (c.activity_id != "A03"));
}

TEST_CASE("re-running never mutates finalized candidates")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    HashedBowEmbedder embedder;
    OracleBackend oracle;
    run_pipeline(project, embedder, oracle);
    auto first = project.adjudication.candidates().front();
    for (auto who : {"x", "y", "z"}) project.adjudication.record_vote({first.candidate_id, who, Decision::Confirm, "t"});
    auto finalized = *project.adjudication.find(first.candidate_id);

    OracleBackend flipped;
    flipped.set(first.chunk_id, first.activity_id, 1);
    run_pipeline(project, embedder, flipped);
    CHECK(*project.adjudication.find(first.candidate_id) == finalized);
    CHECK(project.adjudication.votes_for(first.candidate_id).size() == 3);
}

TEST_CASE("annotate modes")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    HashedBowEmbedder embedder;
    FunctionBackend all_yes("yes", [](const InferenceCall&) { return Completion{"1", std::nullopt}; });
    run_pipeline(project, embedder, all_yes);
    auto model = annotate(project, AnnotationMode::Model);
    CHECK(model.size() == project.adjudication.candidates().size());
    CHECK(std::is_sorted(model.begin(), model.end(), [](const auto& a, const auto& b) {
        return std::tie(a.doc_id, a.char_start) < std::tie(b.doc_id, b.char_start);
    }));
    CHECK_THROWS_AS(annotate(project, AnnotationMode::Adjudicated), PendingCandidatesError);

    auto ids = std::vector<std::string>{};
    for (const auto& c : project.adjudication.candidates()) ids.push_back(c.candidate_id);
    for (const auto& id : ids)
        for (auto who : {"x", "y", "z"}) project.adjudication.record_vote({id, who, Decision::Reject, "t"});
    CHECK(annotate(project, AnnotationMode::Adjudicated).empty());
    CHECK(export_project_dataset(project).size() == ids.size());
    CHECK_THROWS_AS(parse_annotation_mode("other"), Error);
}

TEST_CASE("one chunk retrieved for two activities yields two annotations on the same span")
{
    Project p;
    p.project_id = "overlap";
    EsgActivity a{"A1", "Wind", "", "onshore wind turbines", {}, ""};
    EsgActivity b{"A2", "Wind maintenance", "", "wind turbines maintenance", {}, ""};
    p.taxonomy.activities = {a, b};
    p.config.top_k = 1;
    p.add_document(make_document("Our onshore wind turbines received maintenance.", "c", "t"));
    HashedBowEmbedder embedder;
    FunctionBackend yes("yes", [](const InferenceCall&) { return Completion{"1", std::nullopt}; });
    run_pipeline(p, embedder, yes);
    auto ann = annotate(p, AnnotationMode::Model);
    REQUIRE(ann.size() == 2);
    CHECK(ann[0].char_start == ann[1].char_start);
    CHECK(ann[0].char_end == ann[1].char_end);
    CHECK(ann[0].activity_id != ann[1].activity_id);
}

TEST_CASE("project store round-trip mid-adjudication")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    project.nace_codes = {NaceCode::parse("D")};
    project.config.min_score = 0.01;
    HashedBowEmbedder embedder;
    OracleBackend oracle;
    run_pipeline(project, embedder, oracle);
    const auto& cands = project.adjudication.candidates();
    project.adjudication.record_vote({cands[0].candidate_id, "x", Decision::Confirm, "t1"});
    for (auto who : {"x", "y", "z"}) project.adjudication.record_vote({cands[1].candidate_id, who, Decision::Reject, "t2"});

    fixtures::TempDir dir;
    ProjectStore store(dir.path());
    store.save(project);
    CHECK(store.exists("e2e"));
    CHECK(store.list() == std::vector<std::string>{"e2e"});
    auto loaded = store.load("e2e");
    CHECK(loaded == project);

    // Concurrent readers.
    auto r1 = std::async(std::launch::async, [&] { return store.load("e2e"); });
    auto r2 = std::async(std::launch::async, [&] { return store.load("e2e"); });
    CHECK(r1.get() == project);
    CHECK(r2.get() == project);

    auto finalized = *loaded.adjudication.find(cands[1].candidate_id);
    run_pipeline(loaded, embedder, oracle);
    CHECK(*loaded.adjudication.find(cands[1].candidate_id) == finalized);
    CHECK_THROWS_AS(store.load("nope"), Error);
}

TEST_CASE("store rejects future schemas and names corrupt records")
{
    auto f = fixtures::end_to_end_fixture();
    auto project = fixtures::end_to_end_project(f);
    fixtures::TempDir dir;
    save_project(project, dir / "p");
    auto manifest = read_file(dir / "p" / "manifest.json");
    auto future = manifest;
    future.replace(future.find("esg-project/1"), 13, "esg-project/9");
    write_file_atomic(dir / "p" / "manifest.json", future);
    try {
        load_project(dir / "p");
        FAIL("expected schema error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SchemaVersion);
    }
    write_file_atomic(dir / "p" / "manifest.json", manifest);
    auto docs = read_file(dir / "p" / "documents.jsonl");
    write_file_atomic(dir / "p" / "documents.jsonl", docs + "{broken\n");
    try {
        load_project(dir / "p");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        std::string what = e.what();
        CHECK(what.find("documents.jsonl") != std::string::npos);
        CHECK(what.find("record 4") != std::string::npos);
    }
}

TEST_CASE("config JSON round-trip")
{
    ProjectConfig c;
    c.top_k = 7;
    c.min_score = 0.25;
    c.policy = {5, 3, true};
    c.blind_mode = false;
    c.chunking = {100, 10};
    CHECK(config_from_json(to_json(c)) == c);
    auto bad = to_json(c);
    bad["top_k"] = 0;
    CHECK_THROWS_AS(config_from_json(bad), Error);
}
