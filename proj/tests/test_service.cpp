#include <doctest.h>

#include <httplib.h>

#include "esg/service.hpp"
#include "esg/text.hpp"
#include "fixtures.hpp"

#include <future>
#include <thread>

using namespace esg;
using nlohmann::json;

namespace {

constexpr const char* kToken = "secret-token";

struct Harness {
    fixtures::TempDir dir;
    std::unique_ptr<Service> service;
    int port = 0;
    std::shared_ptr<OracleBackend> oracle = std::make_shared<OracleBackend>();

    Harness()
    {
        ServiceConfig cfg;
        cfg.store_root = dir / "store";
        cfg.token = kToken;
        cfg.embedder = [] { return std::make_unique<HashedBowEmbedder>(); };
        cfg.classifier = [o = oracle] { return std::make_unique<OracleBackend>(*o); };
        service = std::make_unique<Service>(std::move(cfg));
        port = service->start("127.0.0.1", 0);
    }

    httplib::Client client(bool auth = true) const
    {
        httplib::Client c("127.0.0.1", port);
        if (auth) c.set_bearer_token_auth(kToken);
        c.set_read_timeout(30, 0);
        return c;
    }
};

json project_body(const fixtures::EndToEnd& f, const std::string& id)
{
    json acts = json::array();
    for (const auto& a : f.taxonomy.activities) acts.push_back(to_json(a));
    return json{{"project_id", id},
                {"taxonomy_version", f.taxonomy.version},
                {"activities", acts},
                {"config", {{"chunk_size", 40}, {"chunk_overlap", 8}, {"top_k", 5}}}};
}

json wait_for_job(httplib::Client& c, const std::string& project, const std::string& job)
{
    for (int i = 0; i < 500; ++i) {
        auto res = c.Get("/projects/" + project + "/jobs/" + job);
        REQUIRE(res);
        auto j = json::parse(res->body);
        auto status = j.at("status").get<std::string>();
        if (status == "succeeded" || status == "failed") return j;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("job did not finish");
    return {};
}

}  // namespace

TEST_CASE("http status mapping")
{
    CHECK(http_status(ErrorKind::NotFound) == 404);
    CHECK(http_status(ErrorKind::Conflict) == 409);
    CHECK(http_status(ErrorKind::Validation) == 422);
    CHECK(http_status(ErrorKind::InvalidArgument) == 400);
    CHECK(http_status(ErrorKind::Internal) == 500);
}

TEST_CASE("service requires the bearer token")
{
    Harness h;
    auto anon = h.client(false);
    auto res = anon.Get("/projects");
    REQUIRE(res);
    CHECK(res->status == 401);
    anon.set_bearer_token_auth("wrong");
    CHECK(anon.Get("/projects")->status == 401);
    CHECK(h.client().Get("/projects")->status == 200);
    CHECK(anon.Get("/health")->status == 200);
}

TEST_CASE("service end-to-end workflow")
{
    Harness h;
    auto f = fixtures::end_to_end_fixture();
    auto c = h.client();

    auto created = c.Post("/projects", project_body(f, "demo").dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(c.Post("/projects", project_body(f, "demo").dump(), "application/json")->status == 409);
    CHECK(c.Get("/projects/missing")->status == 404);

    // Running without documents is a validation error.
    auto early = c.Post("/projects/demo/run", "", "application/json");
    REQUIRE(early);
    CHECK(early->status == 422);

    for (const auto& d : f.documents) {
        json body{{"text", d.text}, {"company", d.company}, {"title", d.title}};
        auto res = c.Post("/projects/demo/documents", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 201);
        CHECK(json::parse(res->body).at("doc_id") == d.doc_id);
    }
    json dup{{"text", f.documents[0].text}};
    CHECK(c.Post("/projects/demo/documents", dup.dump(), "application/json")->status == 409);
    CHECK(c.Post("/projects/demo/documents", "{not json", "application/json")->status == 400);

    auto run = c.Post("/projects/demo/run", "", "application/json");
    REQUIRE(run);
    CHECK(run->status == 202);
    auto job = json::parse(run->body).at("job_id").get<std::string>();
    auto done = wait_for_job(c, "demo", job);
    CHECK(done.at("status") == "succeeded");
    CHECK(done.at("report").at("candidates") == 60);

    auto listed = json::parse(c.Get("/projects/demo/candidates?status=pending")->body).at("candidates");
    REQUIRE(listed.size() == 60);
    // Blind mode hides the verdict before finalization.
    CHECK_FALSE(listed[0].contains("model_verdict"));
    CHECK_FALSE(listed[0].contains("votes"));

    auto cid = listed[0].at("candidate_id").get<std::string>();
    auto vote = [&](const std::string& who, const std::string& decision) {
        return c.Post("/candidates/" + cid + "/votes", json{{"annotator_id", who}, {"decision", decision}}.dump(),
                      "application/json");
    };
    auto first = vote("ann", "confirm");
    REQUIRE(first);
    CHECK(first->status == 201);
    auto first_view = json::parse(first->body);
    CHECK(first_view.at("my_vote").at("decision") == "confirm");
    CHECK_FALSE(first_view.contains("model_verdict"));
    CHECK(vote("ann", "reject")->status == 409);
    vote("bob", "reject");
    auto other = json::parse(c.Get("/projects/demo/candidates?annotator=bob")->body).at("candidates");
    for (const auto& cand : other) {
        if (cand.at("candidate_id") != cid) continue;
        CHECK(cand.at("my_vote").at("annotator_id") == "bob");
        CHECK_FALSE(cand.contains("votes"));
    }
    auto last = json::parse(vote("cy", "confirm")->body);
    CHECK(last.at("status") == "accepted");
    CHECK(last.at("votes").size() == 3);
    CHECK(last.contains("model_verdict"));
    CHECK(vote("dee", "confirm")->status == 409);
    CHECK(c.Post("/candidates/nope/votes", json{{"annotator_id", "a"}, {"decision", "confirm"}}.dump(),
                 "application/json")->status == 404);

    auto accepted = json::parse(c.Get("/projects/demo/candidates?status=accepted")->body).at("candidates");
    CHECK(accepted.size() == 1);

    auto pending_export = c.Get("/projects/demo/export/dataset");
    REQUIRE(pending_export);
    CHECK(pending_export->status == 409);
    CHECK(json::parse(pending_export->body).at("error").at("candidate_ids").size() == 59);
    CHECK(c.Get("/projects/demo/annotations?mode=adjudicated")->status == 409);
    CHECK(c.Get("/projects/demo/annotations?mode=model")->status == 200);
    CHECK(c.Get("/projects/demo/annotations?mode=bogus")->status == 400);

    // Finish the panel on everything else.
    for (const auto& cand : listed) {
        auto id = cand.at("candidate_id").get<std::string>();
        if (id == cid) continue;
        for (auto who : {"ann", "bob", "cy"})
            c.Post("/candidates/" + id + "/votes", json{{"annotator_id", who}, {"decision", "reject"}}.dump(),
                   "application/json");
    }
    auto dataset = c.Get("/projects/demo/export/dataset");
    REQUIRE(dataset);
    CHECK(dataset->status == 200);
    std::istringstream lines(dataset->body);
    auto pairs = parse_dataset(lines);
    CHECK(pairs.size() == 60);
    auto finetune = c.Get("/projects/demo/export/finetune");
    REQUIRE(finetune);
    CHECK(finetune->status == 200);
    std::istringstream ft(finetune->body);
    CHECK(parse_finetune(ft, default_classification_template()).size() == 60);
    auto manifest = json::parse(c.Get("/projects/demo/export/finetune/manifest")->body);
    CHECK(manifest.at("records") == 60);
    auto ann = c.Get("/projects/demo/annotations?mode=adjudicated");
    CHECK(ann->status == 200);
    CHECK(std::count(ann->body.begin(), ann->body.end(), '\n') == 1);

    // The store on disk reflects everything the API did.
    ProjectStore store(h.dir / "store");
    auto on_disk = store.load("demo");
    CHECK(on_disk.adjudication.votes().size() == 3 + 59 * 3);
    CHECK(serialize_dataset(export_project_dataset(on_disk)) == dataset->body);

    auto summary = json::parse(c.Get("/projects/demo")->body);
    CHECK(summary.at("candidates").at("accepted") == 1);
    CHECK(summary.at("candidates").at("rejected") == 59);
    CHECK(summary.at("documents").size() == 4);
}

TEST_CASE("service restarts from the store")
{
    auto f = fixtures::end_to_end_fixture();
    fixtures::TempDir dir;
    ProjectStore store(dir / "store");
    auto p = fixtures::end_to_end_project(f);
    HashedBowEmbedder e;
    OracleBackend o;
    run_pipeline(p, e, o);
    store.save(p);

    ServiceConfig cfg;
    cfg.store_root = dir / "store";
    cfg.token = kToken;
    cfg.embedder = [] { return std::make_unique<HashedBowEmbedder>(); };
    cfg.classifier = [] { return std::make_unique<OracleBackend>(); };
    Service service(std::move(cfg));
    int port = service.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    c.set_bearer_token_auth(kToken);
    auto listed = json::parse(c.Get("/projects/e2e/candidates")->body).at("candidates");
    CHECK(listed.size() == p.adjudication.candidates().size());
    auto id = listed[0].at("candidate_id").get<std::string>();
    auto res = c.Post("/candidates/" + id + "/votes", json{{"annotator_id", "a"}, {"decision", "confirm"}}.dump(),
                      "application/json");
    CHECK(res->status == 201);
}

TEST_CASE("concurrent votes on one project are serialized")
{
    Harness h;
    auto f = fixtures::end_to_end_fixture();
    auto c = h.client();
    c.Post("/projects", project_body(f, "par").dump(), "application/json");
    for (const auto& d : f.documents)
        c.Post("/projects/par/documents", json{{"text", d.text}}.dump(), "application/json");
    auto job = json::parse(c.Post("/projects/par/run", "", "application/json")->body).at("job_id").get<std::string>();
    wait_for_job(c, "par", job);
    auto listed = json::parse(c.Get("/projects/par/candidates")->body).at("candidates");
    REQUIRE(listed.size() == 60);

    std::vector<std::future<int>> results;
    for (int t = 0; t < 6; ++t) {
        results.push_back(std::async(std::launch::async, [&, t] {
            auto cl = h.client();
            int created = 0;
            for (std::size_t i = 0; i < 20; ++i) {
                auto id = listed[i].at("candidate_id").get<std::string>();
                // Two threads share each annotator name, so one of them conflicts.
                auto who = "ann" + std::to_string(t % 3);
                auto res = cl.Post("/candidates/" + id + "/votes",
                                   json{{"annotator_id", who}, {"decision", "confirm"}}.dump(), "application/json");
                if (res && res->status == 201) ++created;
            }
            return created;
        }));
    }
    int total = 0;
    for (auto& r : results) total += r.get();
    CHECK(total == 60);
    auto accepted = json::parse(c.Get("/projects/par/candidates?status=accepted")->body).at("candidates");
    CHECK(accepted.size() == 20);
    h.service->drain();
}
