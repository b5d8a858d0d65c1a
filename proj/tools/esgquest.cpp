#include <CLI11.hpp>

#include "esg/benchmark.hpp"
#include "esg/classifier.hpp"
#include "esg/error.hpp"
#include "esg/metrics.hpp"
#include "esg/pipeline.hpp"
#include "esg/service.hpp"
#include "esg/text.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace esg;
using nlohmann::json;

namespace {

int exit_code(ErrorKind kind)
{
    switch (kind) {
        case ErrorKind::InvalidArgument: return 2;
        case ErrorKind::Parse: return 3;
        case ErrorKind::Validation: return 4;
        case ErrorKind::NotFound: return 5;
        case ErrorKind::Conflict: return 6;
        case ErrorKind::Io: return 7;
        case ErrorKind::Transport: return 8;
        case ErrorKind::Unparseable: return 9;
        case ErrorKind::SchemaVersion: return 10;
        case ErrorKind::Internal: return 1;
    }
    return 1;
}

std::string env_or(const char* name, std::string fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

struct Backends {
    std::string embedder = "hashed";
    std::string oracle;

    std::unique_ptr<EmbeddingBackend> make_embedder() const
    {
        if (embedder == "hashed") return std::make_unique<HashedBowEmbedder>();
        if (embedder == "remote") return std::make_unique<RemoteEmbedder>(RemoteEmbedder::from_env());
        throw Error(ErrorKind::InvalidArgument, "embedder must be \"hashed\" or \"remote\"");
    }

    std::unique_ptr<InferenceBackend> make_classifier() const
    {
        if (!oracle.empty()) return std::make_unique<OracleBackend>(OracleBackend::load(oracle));
        return std::make_unique<RemoteChatBackend>(RemoteChatBackend::from_env());
    }
};

void add_backend_options(CLI::App* cmd, Backends& b, bool classifier)
{
    cmd->add_option("--embedder", b.embedder, "hashed or remote (EMBED_* variables)")->capture_default_str();
    if (classifier)
        cmd->add_option("--oracle", b.oracle, "JSONL of {chunk_id, activity_id, label}; default is the remote backend");
}

void write_output(const std::string& path, const std::string& content)
{
    if (path.empty() || path == "-")
        std::cout << content;
    else
        write_file_atomic(path, content);
}

struct Predictions {
    std::vector<int> y_true;
    std::vector<int> y_pred;
    std::vector<double> y_prob;
    bool has_prob = true;
};

Predictions predictions_from_file(const std::vector<LabeledPair>& pairs, const std::string& path)
{
    std::map<std::string, std::pair<int, std::optional<double>>> by_id;
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto r = json::parse(line);
            std::optional<double> p;
            if (r.contains("probability") && !r.at("probability").is_null()) p = r.at("probability").get<double>();
            by_id[r.at("pair_id").get<std::string>()] = {r.at("label").get<int>(), p};
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    Predictions out;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.pair_id);
        if (it == by_id.end()) throw Error(ErrorKind::NotFound, "no prediction for " + p.pair_id);
        out.y_true.push_back(p.label);
        out.y_pred.push_back(it->second.first);
        out.has_prob = out.has_prob && it->second.second.has_value();
        out.y_prob.push_back(it->second.second.value_or(0.0));
    }
    return out;
}

Predictions predictions_from_backend(const std::vector<LabeledPair>& pairs, InferenceBackend& backend,
                                     const std::string& template_id, std::size_t parallelism)
{
    std::vector<ClassificationRequest> reqs;
    for (const auto& p : pairs) reqs.push_back({p.chunk_text, p.activity_text, template_id, p.pair_id, p.activity_id});
    auto outcomes = classify_batch(reqs, backend, parallelism);
    Predictions out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!outcomes[i].ok())
            throw Error(outcomes[i].error_kind, pairs[i].pair_id + ": " + outcomes[i].error);
        out.y_true.push_back(pairs[i].label);
        out.y_pred.push_back(outcomes[i].verdict->label);
        out.has_prob = out.has_prob && outcomes[i].verdict->probability.has_value();
        out.y_prob.push_back(outcomes[i].verdict->probability.value_or(0.0));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Map sustainability disclosures to EU taxonomy activities and build labeled benchmarks"};
    app.require_subcommand(1);

    std::string store_root = env_or("ESG_STORE", "esg-store");
    std::string project_id;
    app.add_option("--store", store_root, "project store directory (ESG_STORE)")->capture_default_str();

    auto needs_project = [&](CLI::App* cmd) { cmd->add_option("-p,--project", project_id, "project id")->required(); };

    // init
    auto* init = app.add_subcommand("init", "create a project from a taxonomy file");
    needs_project(init);
    std::string taxonomy_path;
    std::vector<std::string> nace;
    ProjectConfig config;
    bool open_voting = false;
    double min_score = -2.0;
    init->add_option("--taxonomy", taxonomy_path, "activity JSONL")->required()->check(CLI::ExistingFile);
    init->add_option("--nace", nace, "NACE codes of the company");
    init->add_option("--top-k", config.top_k)->capture_default_str();
    init->add_option("--min-score", min_score, "skip hits scoring below this");
    init->add_option("--chunk-size", config.chunking.target_size)->capture_default_str();
    init->add_option("--chunk-overlap", config.chunking.overlap)->capture_default_str();
    init->add_option("--template", config.template_id)->capture_default_str();
    init->add_option("--parallelism", config.parallelism)->capture_default_str();
    init->add_option("--panel", config.policy.panel_size)->capture_default_str();
    init->add_option("--quorum", config.policy.quorum)->capture_default_str();
    init->add_flag("--early-finalization", config.policy.early_finalization,
                   "finalize once the outcome can no longer change");
    init->add_flag("--open-voting", open_voting, "show verdicts and votes before finalization");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "add documents (plain text or structured JSON) to a project");
    needs_project(ingest);
    std::string company;
    std::vector<std::string> files;
    ingest->add_option("--company", company);
    ingest->add_option("files", files)->required()->check(CLI::ExistingFile);

    // index
    Backends backends;
    auto* index = app.add_subcommand("index", "build the project's vector index");
    needs_project(index);
    bool force = false;
    index->add_flag("--force", force, "rebuild even when current");
    add_backend_options(index, backends, false);

    // map
    auto* map = app.add_subcommand("map", "retrieve and classify candidates for every selected activity");
    needs_project(map);
    add_backend_options(map, backends, true);

    // candidates
    auto* cands = app.add_subcommand("candidates", "list candidate mappings");
    needs_project(cands);
    std::string status_filter;
    cands->add_option("--status", status_filter, "pending, accepted or rejected");

    // vote
    auto* vote = app.add_subcommand("vote", "record an annotator decision");
    needs_project(vote);
    std::string candidate_id, annotator, decision;
    vote->add_option("--candidate", candidate_id)->required();
    vote->add_option("--annotator", annotator)->required();
    vote->add_option("--decision", decision, "confirm or reject")->required();

    // annotate
    auto* annot = app.add_subcommand("annotate", "write standoff annotations");
    needs_project(annot);
    std::string mode = "adjudicated", output;
    annot->add_option("--mode", mode, "model or adjudicated")->capture_default_str();
    annot->add_option("-o,--output", output, "output file, default stdout");

    // export-dataset
    auto* export_ds = app.add_subcommand("export-dataset", "write the adjudicated dataset");
    needs_project(export_ds);
    export_ds->add_option("-o,--output", output, "output file, default stdout");

    // stats
    auto* stats = app.add_subcommand("stats", "dataset statistics");
    std::string input;
    stats->add_option("input", input)->required()->check(CLI::ExistingFile);

    // split
    auto* split = app.add_subcommand("split", "stratified train/test split");
    double test_fraction = 0.2;
    std::uint64_t seed = 42;
    std::string train_out, test_out;
    split->add_option("input", input)->required()->check(CLI::ExistingFile);
    split->add_option("--test-fraction", test_fraction)->capture_default_str();
    split->add_option("--seed", seed)->capture_default_str();
    split->add_option("--train-out", train_out)->required();
    split->add_option("--test-out", test_out)->required();

    // augment
    auto* aug = app.add_subcommand("augment", "add paraphrased synthetic pairs to a training set");
    AugmentOptions aug_options;
    bool synthetic_only = false;
    std::string report_path;
    aug->add_option("input", input)->required()->check(CLI::ExistingFile);
    aug->add_option("-o,--output", output)->required();
    aug->add_option("-n,--paraphrases", aug_options.n_paraphrases)->capture_default_str();
    aug->add_option("--retries", aug_options.max_retries)->capture_default_str();
    aug->add_option("--parallelism", aug_options.parallelism)->capture_default_str();
    aug->add_option("--temperature", aug_options.temperature)->capture_default_str();
    aug->add_flag("--synthetic-only", synthetic_only, "write only the generated pairs");
    aug->add_option("--report", report_path, "write flagged items and failures as JSON");

    // folds
    auto* folds = app.add_subcommand("folds", "stratified k-fold assignment");
    std::size_t k = 10;
    folds->add_option("input", input)->required()->check(CLI::ExistingFile);
    folds->add_option("-k", k)->capture_default_str();
    folds->add_option("--seed", seed)->capture_default_str();
    folds->add_option("-o,--output", output, "output file, default stdout");

    // export-finetune
    auto* ft = app.add_subcommand("export-finetune", "write chat-format fine-tuning records and manifest");
    std::string template_id = std::string(default_classification_template().template_id);
    std::vector<std::string> overrides;
    ft->add_option("input", input)->required()->check(CLI::ExistingFile);
    ft->add_option("-o,--output", output)->required();
    ft->add_option("--template", template_id)->capture_default_str();
    ft->add_option("--set", overrides, "hyperparameter override key=json");

    // eval
    auto* ev = app.add_subcommand("eval", "score a classifier on a labeled test set");
    std::vector<std::string> prediction_files;
    std::string model_name = "model";
    bool as_json = false;
    std::size_t parallelism = 4;
    ev->add_option("input", input)->required()->check(CLI::ExistingFile);
    ev->add_option("--predictions", prediction_files, "JSONL of {pair_id, label, probability?}; name=path allowed");
    ev->add_option("--name", model_name, "row name when classifying live")->capture_default_str();
    ev->add_option("--template", template_id)->capture_default_str();
    ev->add_option("--parallelism", parallelism)->capture_default_str();
    ev->add_flag("--json", as_json, "print the full reports as JSON");
    add_backend_options(ev, backends, true);

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token = env_or("ESG_TOKEN", "");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--token", token, "bearer token (ESG_TOKEN)");
    add_backend_options(serve, backends, true);

    CLI11_PARSE(app, argc, argv);

    try {
        auto load = [&] { return ProjectStore(store_root).load(project_id); };
        auto save = [&](const Project& p) { ProjectStore(store_root).save(p); };

        if (*init) {
            ProjectStore store(store_root);
            if (store.exists(project_id)) throw Error(ErrorKind::Conflict, "project " + project_id + " already exists");
            Project p;
            p.project_id = project_id;
            p.taxonomy = load_taxonomy(taxonomy_path);
            for (const auto& c : nace) p.nace_codes.push_back(NaceCode::parse(c));
            if (min_score > -2.0) config.min_score = min_score;
            config.blind_mode = !open_voting;
            builtin_template(config.template_id);
            config.policy.validate();
            p.config = config;
            p.adjudication.set_policy(config.policy);
            store.save(p);
            std::cout << "created " << project_id << " with " << p.taxonomy.activities.size() << " activities, "
                      << select_activities(p.taxonomy, p.nace_codes).size() << " selected\n";
        } else if (*ingest) {
            auto p = load();
            for (const auto& f : files) {
                auto doc = ingest_document(f, company);
                p.add_document(doc);
                std::cout << doc.doc_id << "\t" << doc.length() << " chars\t" << f << "\n";
            }
            save(p);
        } else if (*index) {
            auto p = load();
            auto embedder = backends.make_embedder();
            bool rebuilt = ensure_index(p, *embedder, force);
            save(p);
            std::cout << (rebuilt ? "built" : "current") << " index of " << p.index->size() << " chunks ("
                      << p.index->embedder_id() << ")\n";
        } else if (*map) {
            auto p = load();
            auto embedder = backends.make_embedder();
            auto classifier = backends.make_classifier();
            auto report = run_pipeline(p, *embedder, *classifier);
            save(p);
            std::cout << to_json(report).dump(2) << "\n";
            for (const auto& e : report.errors) std::cerr << "error: " << e << "\n";
        } else if (*cands) {
            auto p = load();
            std::optional<CandidateStatus> status;
            if (!status_filter.empty()) status = parse_status(status_filter);
            std::vector<CandidateMapping> out;
            for (const auto& c : p.adjudication.candidates())
                if (!status || c.status == *status) out.push_back(c);
            std::cout << serialize_candidates(out);
        } else if (*vote) {
            auto p = load();
            const auto& c = p.adjudication.record_vote({candidate_id, annotator, parse_decision(decision), ""});
            std::cout << c.candidate_id << "\t" << to_string(c.status) << "\n";
            save(p);
        } else if (*annot) {
            auto p = load();
            write_output(output, serialize_annotations(annotate(p, parse_annotation_mode(mode))));
        } else if (*export_ds) {
            auto p = load();
            write_output(output, serialize_dataset(export_project_dataset(p)));
        } else if (*stats) {
            std::cout << to_json(dataset_stats(load_dataset(input))).dump(2) << "\n";
        } else if (*split) {
            auto s = split_train_test(load_dataset(input), test_fraction, seed);
            save_dataset(train_out, s.train);
            save_dataset(test_out, s.test);
            std::cout << "train " << s.train.size() << ", test " << s.test.size() << "\n";
        } else if (*aug) {
            auto originals = load_dataset(input);
            RemoteChatBackend generator = RemoteChatBackend::from_env();
            auto result = augment(originals, generator, aug_options);
            std::vector<LabeledPair> out = synthetic_only ? std::vector<LabeledPair>{} : originals;
            out.insert(out.end(), result.synthetic.begin(), result.synthetic.end());
            save_dataset(output, out);
            auto issues = [](const std::vector<AugmentIssue>& v) {
                json a = json::array();
                for (const auto& i : v) a.push_back({{"parent_id", i.parent_id}, {"variant", i.variant}, {"detail", i.detail}});
                return a;
            };
            if (!report_path.empty())
                write_file_atomic(report_path,
                                  json{{"flagged", issues(result.flagged)}, {"failures", issues(result.failures)}}.dump(2) + "\n");
            std::cout << result.synthetic.size() << " synthetic, " << result.flagged.size() << " flagged, "
                      << result.failures.size() << " failed; wrote " << out.size() << " pairs\n";
        } else if (*folds) {
            auto plan = make_folds(load_dataset(input), k, seed);
            write_output(output, to_json(plan).dump(2) + "\n");
        } else if (*ft) {
            auto pairs = load_dataset(input);
            HyperparameterManifest manifest;
            for (const auto& o : overrides) {
                auto eq = o.find('=');
                if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--set expects key=value");
                json value;
                try {
                    value = json::parse(o.substr(eq + 1));
                } catch (const json::exception&) {
                    value = o.substr(eq + 1);
                }
                manifest.apply_override(o.substr(0, eq), value);
            }
            export_finetune(pairs, builtin_template(template_id), output, manifest);
            std::cout << "wrote " << pairs.size() << " records to " << output << " and "
                      << manifest_path_for(output).string() << "\n";
        } else if (*ev) {
            auto pairs = load_dataset(input, true);
            std::vector<ReportRow> rows;
            auto add_row = [&](const std::string& name, const Predictions& p) {
                auto report = weighted_metrics(p.y_true, p.y_pred);
                if (p.has_prob) report.bce_loss = bce_loss(p.y_true, p.y_prob);
                rows.push_back({name, report});
            };
            if (prediction_files.empty()) {
                auto classifier = backends.make_classifier();
                add_row(model_name, predictions_from_backend(pairs, *classifier, template_id, parallelism));
            }
            for (const auto& spec : prediction_files) {
                auto eq = spec.find('=');
                auto name = eq == std::string::npos ? std::filesystem::path(spec).stem().string() : spec.substr(0, eq);
                auto path = eq == std::string::npos ? spec : spec.substr(eq + 1);
                add_row(name, predictions_from_file(pairs, path));
            }
            if (as_json) {
                json out = json::array();
                for (const auto& r : rows) out.push_back({{"model", r.model}, {"report", to_json(r.report)}});
                std::cout << out.dump(2) << "\n";
            } else {
                std::cout << format_table(rows);
            }
        } else if (*serve) {
            ServiceConfig sc;
            sc.store_root = store_root;
            sc.token = token;
            sc.embedder = [b = backends] { return b.make_embedder(); };
            sc.classifier = [b = backends] { return b.make_classifier(); };
            Service service(std::move(sc));
            std::cerr << "serving " << store_root << " on " << host << ":" << port << "\n";
            service.listen(host, port);
        }
    } catch (const PendingCandidatesError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
