#include "esg/service.hpp"

#include <httplib.h>

#include "esg/benchmark.hpp"
#include "esg/classifier.hpp"
#include "esg/text.hpp"

#include <algorithm>

namespace esg {

using nlohmann::json;

int http_status(ErrorKind kind)
{
    switch (kind) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::Parse: return 400;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Conflict: return 409;
        case ErrorKind::Validation:
        case ErrorKind::Unparseable:
        case ErrorKind::SchemaVersion: return 422;
        case ErrorKind::Transport: return 502;
        case ErrorKind::Io:
        case ErrorKind::Internal: return 500;
    }
    return 500;
}

namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kJsonl = "application/x-ndjson";

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message,
                const json& extra = nullptr)
{
    json err{{"kind", kind}, {"message", message}};
    if (!extra.is_null()) err.update(extra);
    send_json(res, status, json{{"error", err}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn)
{
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const PendingCandidatesError& e) {
            send_error(res, http_status(e.kind()), to_string(e.kind()), e.what(),
                       json{{"candidate_ids", e.candidate_ids()}});
        } catch (const Error& e) {
            send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, to_string(ErrorKind::Parse), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, to_string(ErrorKind::Internal), e.what());
        }
    };
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) return json::object();
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
        return body;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("request body: ") + e.what());
    }
}

json project_summary(const Project& p)
{
    json docs = json::array();
    for (const auto& d : p.documents)
        docs.push_back({{"doc_id", d.doc_id}, {"company", d.company}, {"title", d.title}, {"length", d.length()}});
    json codes = json::array();
    for (const auto& c : p.nace_codes) codes.push_back(c.str());
    std::map<std::string, std::size_t> counts{{"pending", 0}, {"accepted", 0}, {"rejected", 0}};
    for (const auto& c : p.adjudication.candidates()) ++counts[std::string(to_string(c.status))];
    json r{{"project_id", p.project_id},
           {"taxonomy_version", p.taxonomy.version},
           {"activities", p.taxonomy.activities.size()},
           {"nace_codes", codes},
           {"documents", docs},
           {"config", to_json(p.config)},
           {"candidates", counts}};
    r["index"] = p.index ? json{{"size", p.index->size()}, {"embedder_id", p.index->embedder_id()}} : json(nullptr);
    return r;
}

// Blind mode hides the model verdict and every vote but the caller's own
// until the candidate is finalized.
json candidate_view(const Project& p, const CandidateMapping& c, const std::string& annotator)
{
    auto r = to_json(c);
    auto votes = p.adjudication.votes_for(c.candidate_id);
    bool reveal = c.finalized() || !p.config.blind_mode;
    if (!reveal) r.erase("model_verdict");
    json shown = json::array();
    json mine = nullptr;
    for (const auto& v : votes) {
        if (!annotator.empty() && v.annotator_id == annotator) mine = to_json(v);
        if (reveal) shown.push_back(to_json(v));
    }
    if (reveal) r["votes"] = shown;
    r["votes_cast"] = votes.size();
    r["my_vote"] = mine;
    return r;
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)), store_(config_.store_root), server_(std::make_unique<httplib::Server>())
{
    if (config_.token.empty()) throw Error(ErrorKind::InvalidArgument, "service needs a bearer token");
    if (!config_.embedder || !config_.classifier)
        throw Error(ErrorKind::InvalidArgument, "service needs embedder and classifier factories");
    load_all();
    routes();
}

Service::~Service()
{
    stop();
    drain();
}

void Service::load_all()
{
    for (const auto& id : store_.list()) {
        auto s = std::make_shared<Slot>();
        s->project = store_.load(id);
        for (const auto& c : s->project.adjudication.candidates()) candidate_owner_[c.candidate_id] = id;
        slots_.emplace(id, std::move(s));
    }
}

std::shared_ptr<Service::Slot> Service::slot(const std::string& project_id)
{
    std::shared_lock lock(slots_mutex_);
    auto it = slots_.find(project_id);
    if (it == slots_.end()) throw Error(ErrorKind::NotFound, "no project \"" + project_id + "\"");
    return it->second;
}

std::shared_ptr<Service::Slot> Service::slot_for_candidate(const std::string& candidate_id, std::string& project_id)
{
    std::shared_lock lock(slots_mutex_);
    auto owner = candidate_owner_.find(candidate_id);
    if (owner == candidate_owner_.end())
        throw Error(ErrorKind::NotFound, "unknown candidate \"" + candidate_id + "\"");
    project_id = owner->second;
    return slots_.at(project_id);
}

json Service::job_json(const Job& job) const
{
    json r{{"job_id", job.job_id}, {"project_id", job.project_id}, {"status", job.status}};
    if (!job.report.is_null()) r["report"] = job.report;
    if (!job.error.empty()) r["error"] = json{{"kind", job.error_kind}, {"message", job.error}};
    return r;
}

void Service::run_job(std::shared_ptr<Slot> s, std::string job_id)
{
    auto set = [&](auto&& update) {
        std::lock_guard lock(jobs_mutex_);
        update(jobs_.at(job_id));
    };
    try {
        std::lock_guard run(s->run_mutex);
        set([](Job& j) { j.status = "running"; });
        Project snapshot;
        {
            std::shared_lock lock(s->mutex);
            snapshot = s->project;
        }
        auto embedder = config_.embedder();
        auto classifier = config_.classifier();
        auto report = run_pipeline(snapshot, *embedder, *classifier);
        {
            std::unique_lock lock(s->mutex);
            Project next = s->project;
            next.index = snapshot.index;
            next.config.embedder_id = snapshot.config.embedder_id;
            next.config.classifier_id = snapshot.config.classifier_id;
            next.adjudication.set_policy(next.config.policy);
            next.adjudication.merge_run(report.candidates);
            store_.save(next);
            s->project = std::move(next);
            std::unique_lock owners(slots_mutex_);
            for (const auto& c : s->project.adjudication.candidates())
                candidate_owner_[c.candidate_id] = s->project.project_id;
        }
        set([&](Job& j) {
            j.status = "succeeded";
            j.report = to_json(report);
        });
    } catch (const Error& e) {
        set([&](Job& j) {
            j.status = "failed";
            j.error = e.what();
            j.error_kind = std::string(to_string(e.kind()));
        });
    } catch (const std::exception& e) {
        set([&](Job& j) {
            j.status = "failed";
            j.error = e.what();
            j.error_kind = std::string(to_string(ErrorKind::Internal));
        });
    }
}

void Service::routes()
{
    auto& srv = *server_;
    srv.new_task_queue = [n = config_.worker_threads] { return new httplib::ThreadPool(n); };

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") != "Bearer " + config_.token) {
            res.set_header("WWW-Authenticate", "Bearer");
            send_error(res, 401, "unauthorized", "missing or invalid bearer token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    srv.Get("/projects", guarded([this](const httplib::Request&, httplib::Response& res) {
        json ids = json::array();
        std::shared_lock lock(slots_mutex_);
        for (const auto& [id, _] : slots_) ids.push_back(id);
        send_json(res, 200, {{"projects", ids}});
    }));

    srv.Post("/projects", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        Project p;
        p.project_id = body.at("project_id").get<std::string>();
        if (!is_valid_project_id(p.project_id))
            throw Error(ErrorKind::InvalidArgument, "invalid project id \"" + p.project_id + "\"");
        p.taxonomy.version = body.value("taxonomy_version", p.taxonomy.version);
        for (const auto& a : body.value("activities", json::array())) p.taxonomy.activities.push_back(activity_from_json(a));
        validate(p.taxonomy);
        for (const auto& c : body.value("nace_codes", json::array())) p.nace_codes.push_back(NaceCode::parse(c.get<std::string>()));
        if (body.contains("config")) p.config = config_from_json(body.at("config"));
        p.adjudication.set_policy(p.config.policy);

        std::unique_lock lock(slots_mutex_);
        if (slots_.contains(p.project_id) || store_.exists(p.project_id))
            throw Error(ErrorKind::Conflict, "project \"" + p.project_id + "\" already exists");
        store_.save(p);
        auto s = std::make_shared<Slot>();
        s->project = std::move(p);
        auto summary = project_summary(s->project);
        slots_.emplace(s->project.project_id, std::move(s));
        send_json(res, 201, summary);
    }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto s = slot(req.matches[1]);
        std::shared_lock lock(s->mutex);
        send_json(res, 200, project_summary(s->project));
    }));

    srv.Post(R"(/projects/([A-Za-z0-9_-]+)/documents)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = slot(req.matches[1]);
                 auto body = parse_body(req);
                 auto doc = document_from_record(body, "", "untitled");
                 std::unique_lock lock(s->mutex);
                 Project next = s->project;
                 next.add_document(doc);
                 store_.save(next);
                 s->project = std::move(next);
                 send_json(res, 201,
                           {{"doc_id", doc.doc_id}, {"company", doc.company}, {"title", doc.title}, {"length", doc.length()}});
             }));

    srv.Post(R"(/projects/([A-Za-z0-9_-]+)/run)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        std::string project_id = req.matches[1];
        auto s = slot(project_id);
        {
            std::shared_lock lock(s->mutex);
            if (s->project.documents.empty())
                throw Error(ErrorKind::Validation, "project " + project_id + " has no documents");
            if (select_activities(s->project.taxonomy, s->project.nace_codes).empty())
                throw Error(ErrorKind::Validation, "no taxonomy activity matches the project's NACE codes");
        }
        Job job;
        {
            std::lock_guard lock(jobs_mutex_);
            job.job_id = "job-" + std::to_string(next_job_++);
            job.project_id = project_id;
            jobs_.emplace(job.job_id, job);
            workers_.emplace_back([this, s, id = job.job_id] { run_job(s, id); });
        }
        res.set_header("Location", "/projects/" + project_id + "/jobs/" + job.job_id);
        send_json(res, 202, job_json(job));
    }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/jobs/([A-Za-z0-9_-]+))",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                std::lock_guard lock(jobs_mutex_);
                auto it = jobs_.find(req.matches[2]);
                if (it == jobs_.end() || it->second.project_id != req.matches[1])
                    throw Error(ErrorKind::NotFound, "no job \"" + std::string(req.matches[2]) + "\"");
                send_json(res, 200, job_json(it->second));
            }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/candidates)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = slot(req.matches[1]);
                std::optional<CandidateStatus> status;
                if (req.has_param("status")) status = parse_status(req.get_param_value("status"));
                auto annotator = req.get_param_value("annotator");
                std::shared_lock lock(s->mutex);
                json out = json::array();
                for (const auto& c : s->project.adjudication.candidates())
                    if (!status || c.status == *status) out.push_back(candidate_view(s->project, c, annotator));
                send_json(res, 200, {{"candidates", out}});
            }));

    srv.Post(R"(/candidates/([A-Za-z0-9_-]+)/votes)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
                 std::string project_id;
                 auto s = slot_for_candidate(req.matches[1], project_id);
                 auto body = parse_body(req);
                 Vote vote;
                 vote.candidate_id = req.matches[1];
                 vote.annotator_id = body.at("annotator_id").get<std::string>();
                 vote.decision = parse_decision(body.at("decision").get<std::string>());
                 std::unique_lock lock(s->mutex);
                 Project next = s->project;
                 next.adjudication.record_vote(vote);
                 store_.save(next);
                 s->project = std::move(next);
                 send_json(res, 201, candidate_view(s->project, *s->project.adjudication.find(vote.candidate_id),
                                                    vote.annotator_id));
             }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/annotations)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = slot(req.matches[1]);
                auto mode = parse_annotation_mode(req.has_param("mode") ? req.get_param_value("mode") : "adjudicated");
                std::shared_lock lock(s->mutex);
                res.set_content(serialize_annotations(annotate(s->project, mode)), kJsonl);
            }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/export/dataset)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = slot(req.matches[1]);
                std::shared_lock lock(s->mutex);
                res.set_content(serialize_dataset(export_project_dataset(s->project)), kJsonl);
            }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/export/finetune)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = slot(req.matches[1]);
                std::shared_lock lock(s->mutex);
                auto pairs = export_project_dataset(s->project);
                res.set_content(render_finetune(pairs, builtin_template(s->project.config.template_id)), kJsonl);
            }));

    srv.Get(R"(/projects/([A-Za-z0-9_-]+)/export/finetune/manifest)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = slot(req.matches[1]);
                std::shared_lock lock(s->mutex);
                auto pairs = export_project_dataset(s->project);
                send_json(res, 200,
                          finetune_manifest(pairs, builtin_template(s->project.config.template_id), {},
                                            "finetune.jsonl"));
            }));
}

int Service::start(const std::string& host, int port)
{
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
    } else if (!server_->bind_to_port(host, port)) {
        throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    }
    server_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::listen(const std::string& host, int port)
{
    if (!server_->bind_to_port(host, port))
        throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    server_->listen_after_bind();
}

void Service::stop()
{
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

void Service::drain()
{
    std::vector<std::jthread> workers;
    {
        std::lock_guard lock(jobs_mutex_);
        workers.swap(workers_);
    }
    workers.clear();
}

}  // namespace esg
