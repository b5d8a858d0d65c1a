#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "esg/error.hpp"
#include "esg/inference.hpp"
#include "esg/pipeline.hpp"
#include "esg/vecindex.hpp"

namespace httplib {
class Server;
}

namespace esg {

using EmbedderFactory = std::function<std::unique_ptr<EmbeddingBackend>()>;
using ClassifierFactory = std::function<std::unique_ptr<InferenceBackend>()>;

struct ServiceConfig {
    std::filesystem::path store_root;
    std::string token;  // static bearer token, required
    EmbedderFactory embedder;
    ClassifierFactory classifier;
    std::size_t worker_threads = 8;
};

int http_status(ErrorKind kind);

// HTTP front end over a ProjectStore. Writes to one project are serialized,
// reads run concurrently, pipeline runs execute as background jobs.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port. Throws Error(Io) on bind failure.
    int start(const std::string& host, int port);
    // Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();
    // Waits for background jobs to finish.
    void drain();

private:
    struct Slot {
        std::shared_mutex mutex;
        std::mutex run_mutex;  // one pipeline run at a time
        Project project;
    };
    struct Job {
        std::string job_id;
        std::string project_id;
        std::string status = "queued";  // queued | running | succeeded | failed
        nlohmann::json report;
        std::string error;
        std::string error_kind;
    };

    void routes();
    void load_all();
    std::shared_ptr<Slot> slot(const std::string& project_id);
    std::shared_ptr<Slot> slot_for_candidate(const std::string& candidate_id, std::string& project_id);
    void run_job(std::shared_ptr<Slot> s, std::string job_id);
    nlohmann::json job_json(const Job& job) const;

    ServiceConfig config_;
    ProjectStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread server_thread_;

    std::shared_mutex slots_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
    std::map<std::string, std::string> candidate_owner_;  // guarded by slots_mutex_

    mutable std::mutex jobs_mutex_;
    std::map<std::string, Job> jobs_;
    std::vector<std::jthread> workers_;
    std::size_t next_job_ = 1;
};

}  // namespace esg
