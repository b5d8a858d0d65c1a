#include "esg/pipeline.hpp"

#include "esg/classifier.hpp"
#include "esg/error.hpp"
#include "esg/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace esg {

using nlohmann::json;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config and project

bool ProjectConfig::operator==(const ProjectConfig& o) const
{
    return chunking.target_size == o.chunking.target_size && chunking.overlap == o.chunking.overlap &&
           top_k == o.top_k && min_score == o.min_score && template_id == o.template_id &&
           parallelism == o.parallelism && seed == o.seed && policy == o.policy && blind_mode == o.blind_mode &&
           embedder_id == o.embedder_id && classifier_id == o.classifier_id;
}

json to_json(const ProjectConfig& c)
{
    json r{{"chunk_size", c.chunking.target_size},
           {"chunk_overlap", c.chunking.overlap},
           {"top_k", c.top_k},
           {"template_id", c.template_id},
           {"parallelism", c.parallelism},
           {"seed", c.seed},
           {"policy", to_json(c.policy)},
           {"blind_mode", c.blind_mode},
           {"embedder_id", c.embedder_id},
           {"classifier_id", c.classifier_id}};
    r["min_score"] = c.min_score ? json(*c.min_score) : json(nullptr);
    return r;
}

ProjectConfig config_from_json(const json& r)
{
    ProjectConfig c;
    try {
        c.chunking.target_size = r.value("chunk_size", c.chunking.target_size);
        c.chunking.overlap = r.value("chunk_overlap", c.chunking.overlap);
        c.top_k = r.value("top_k", c.top_k);
        c.template_id = r.value("template_id", c.template_id);
        c.parallelism = r.value("parallelism", c.parallelism);
        c.seed = r.value("seed", c.seed);
        if (r.contains("policy")) c.policy = policy_from_json(r.at("policy"));
        c.blind_mode = r.value("blind_mode", c.blind_mode);
        c.embedder_id = r.value("embedder_id", "");
        c.classifier_id = r.value("classifier_id", "");
        if (r.contains("min_score") && !r.at("min_score").is_null()) c.min_score = r.at("min_score").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
    }
    if (c.top_k < 1) throw Error(ErrorKind::InvalidArgument, "top_k must be >= 1");
    if (c.chunking.target_size < 1 || c.chunking.overlap >= c.chunking.target_size)
        throw Error(ErrorKind::InvalidArgument, "chunking needs chunk_size >= 1 and chunk_overlap < chunk_size");
    return c;
}

const Document* Project::find_document(std::string_view doc_id) const
{
    for (const auto& d : documents)
        if (d.doc_id == doc_id) return &d;
    return nullptr;
}

void Project::add_document(Document doc)
{
    validate(doc);
    if (find_document(doc.doc_id)) throw Error(ErrorKind::Conflict, "document " + doc.doc_id + " already in project");
    documents.push_back(std::move(doc));
}

std::vector<Chunk> Project::all_chunks() const
{
    std::vector<const Document*> docs;
    for (const auto& d : documents) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
    std::vector<Chunk> out;
    for (const auto* d : docs) {
        auto chunks = chunk_document(*d, config.chunking);
        std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
    }
    return out;
}

bool Project::operator==(const Project& o) const
{
    return project_id == o.project_id && taxonomy == o.taxonomy && nace_codes == o.nace_codes &&
           documents == o.documents && config == o.config && index == o.index && adjudication == o.adjudication;
}

bool is_valid_project_id(std::string_view id)
{
    if (id.empty() || id.size() > 128) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

// ---------------------------------------------------------------------------
// Running

json to_json(const RunReport& r)
{
    json cands = json::array();
    for (const auto& c : r.candidates) cands.push_back(to_json(c));
    return json{{"activities", r.activities},
                {"chunks", r.chunks},
                {"candidates", r.candidates.size()},
                {"positives", std::count_if(r.candidates.begin(), r.candidates.end(),
                                            [](const auto& c) { return c.model_verdict && c.model_verdict->label == 1; })},
                {"errors", r.errors},
                {"index_rebuilt", r.index_rebuilt}};
}

bool ensure_index(Project& project, EmbeddingBackend& embedder, bool force)
{
    auto chunks = project.all_chunks();
    if (chunks.empty()) throw Error(ErrorKind::Validation, "project " + project.project_id + " has no text to index");

    bool current = false;
    if (project.index && project.index->size() == chunks.size()) {
        current = true;
        const auto& entries = project.index->entries();
        for (std::size_t i = 0; i < chunks.size() && current; ++i)
            current = entries[i].chunk == ChunkRef::of(chunks[i]);
    }
    if (current && !force) {
        if (project.index->embedder_id() != embedder.id())
            throw Error(ErrorKind::Validation, "index was built with " + project.index->embedder_id() +
                                                   " but the configured embedder is " + embedder.id() +
                                                   "; rebuild the index");
        return false;
    }
    project.index = build_index(chunks, embedder);
    project.config.embedder_id = embedder.id();
    return true;
}

std::string make_candidate_id(std::string_view project_id, std::string_view activity_id, std::string_view chunk_id)
{
    std::string key;
    key.append(project_id).push_back('\0');
    key.append(activity_id).push_back('\0');
    key.append(chunk_id);
    return "c" + hex64(fnv1a64(key));
}

RunReport run_pipeline(Project& project, EmbeddingBackend& embedder, InferenceBackend& classifier)
{
    if (project.documents.empty())
        throw Error(ErrorKind::Validation, "project " + project.project_id + " has no documents");
    auto activities = select_activities(project.taxonomy, project.nace_codes);
    if (activities.empty())
        throw Error(ErrorKind::Validation, "no taxonomy activity matches the project's NACE codes");

    RunReport report;
    report.activities = activities.size();
    report.index_rebuilt = ensure_index(project, embedder);
    report.chunks = project.index->size();

    const auto& tmpl = builtin_template(project.config.template_id);
    std::map<std::string, std::string> chunk_text;
    for (const auto& c : project.all_chunks()) chunk_text.emplace(c.chunk_id, c.text);

    std::vector<CandidateMapping> fresh;
    std::vector<ClassificationRequest> requests;
    for (const auto& activity : activities) {
        for (const auto& hit : query_top_k(*project.index, activity.short_description, project.config.top_k, embedder)) {
            if (project.config.min_score && hit.score < *project.config.min_score) continue;
            CandidateMapping c;
            c.candidate_id = make_candidate_id(project.project_id, activity.activity_id, hit.chunk.chunk_id);
            c.doc_id = hit.chunk.doc_id;
            c.chunk_id = hit.chunk.chunk_id;
            c.char_start = hit.chunk.char_start;
            c.char_end = hit.chunk.char_end;
            c.activity_id = activity.activity_id;
            c.retrieval_score = hit.score;
            fresh.push_back(std::move(c));
            requests.push_back({chunk_text.at(hit.chunk.chunk_id), activity.short_description, tmpl.template_id,
                                hit.chunk.chunk_id, activity.activity_id});
        }
    }

    ClassifyOptions options;
    options.prompt = tmpl;
    auto outcomes = classify_batch(requests, classifier, project.config.parallelism, options);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if (outcomes[i].ok())
            fresh[i].model_verdict = outcomes[i].verdict;
        else
            report.errors.push_back(fresh[i].candidate_id + ": " + outcomes[i].error);
    }

    project.config.classifier_id = classifier.id();
    report.candidates = fresh;
    project.adjudication.set_policy(project.config.policy);
    project.adjudication.merge_run(std::move(fresh));
    return report;
}

// ---------------------------------------------------------------------------
// Annotations

AnnotationMode parse_annotation_mode(std::string_view s)
{
    if (s == "model") return AnnotationMode::Model;
    if (s == "adjudicated") return AnnotationMode::Adjudicated;
    throw Error(ErrorKind::InvalidArgument, "mode must be \"model\" or \"adjudicated\"");
}

json to_json(const StandoffAnnotation& a)
{
    return json{{"doc_id", a.doc_id},
                {"char_start", a.char_start},
                {"char_end", a.char_end},
                {"activity_id", a.activity_id},
                {"retrieval_score", a.retrieval_score},
                {"label", a.label},
                {"candidate_id", a.candidate_id}};
}

std::vector<StandoffAnnotation> annotate(const Project& project, AnnotationMode mode)
{
    const auto& candidates = project.adjudication.candidates();
    if (mode == AnnotationMode::Adjudicated) {
        std::vector<std::string> pending;
        for (const auto& c : candidates)
            if (!c.finalized()) pending.push_back(c.candidate_id);
        if (!pending.empty()) throw PendingCandidatesError(std::move(pending));
    }

    std::vector<StandoffAnnotation> out;
    for (const auto& c : candidates) {
        bool keep = mode == AnnotationMode::Model ? (c.model_verdict && c.model_verdict->label == 1)
                                                  : c.status == CandidateStatus::Accepted;
        if (!keep) continue;
        out.push_back({c.doc_id, c.char_start, c.char_end, c.activity_id, c.retrieval_score, 1, c.candidate_id});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.doc_id, a.char_start, a.char_end, a.activity_id, a.candidate_id) <
               std::tie(b.doc_id, b.char_start, b.char_end, b.activity_id, b.candidate_id);
    });
    return out;
}

std::vector<LabeledPair> export_project_dataset(const Project& project)
{
    return export_adjudicated(project.adjudication.candidates(), project.documents, project.taxonomy.activities);
}

std::string serialize_candidates(const std::vector<CandidateMapping>& candidates)
{
    std::string out;
    for (const auto& c : candidates) out += to_json(c).dump() + "\n";
    return out;
}

std::string serialize_annotations(const std::vector<StandoffAnnotation>& annotations)
{
    std::string out;
    for (const auto& a : annotations) out += to_json(a).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

template <typename Fn>
void read_records(const fs::path& path, Fn&& fn)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto where = path.filename().string() + " record " + std::to_string(record);
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, where + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, where + ": " + e.what());
        }
        ++record;
    }
}

}  // namespace

void save_project(const Project& project, const fs::path& dir)
{
    if (!is_valid_project_id(project.project_id))
        throw Error(ErrorKind::InvalidArgument, "invalid project id \"" + project.project_id + "\"");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

    json codes = json::array();
    for (const auto& c : project.nace_codes) codes.push_back(c.str());
    json manifest{{"schema", kProjectSchema},
                  {"project_id", project.project_id},
                  {"taxonomy_version", project.taxonomy.version},
                  {"nace_codes", std::move(codes)},
                  {"config", to_json(project.config)},
                  {"has_index", project.index.has_value()}};

    std::string docs;
    for (const auto& d : project.documents) docs += to_json(d).dump() + "\n";
    std::string votes;
    for (const auto& v : project.adjudication.votes()) votes += to_json(v).dump() + "\n";

    if (project.index) project.index->save(dir / "index.bin");
    else fs::remove(dir / "index.bin", ec);
    write_file_atomic(dir / "activities.jsonl", serialize_taxonomy(project.taxonomy));
    write_file_atomic(dir / "documents.jsonl", docs);
    write_file_atomic(dir / "candidates.jsonl", serialize_candidates(project.adjudication.candidates()));
    write_file_atomic(dir / "votes.jsonl", votes);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Project load_project(const fs::path& dir)
{
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "manifest.json: " + std::string(e.what()));
    }
    auto schema = manifest.value("schema", "");
    if (schema != kProjectSchema)
        throw Error(ErrorKind::SchemaVersion, "project store schema \"" + schema + "\" is not supported (expected " +
                                                  std::string(kProjectSchema) + ")");

    Project p;
    try {
        p.project_id = manifest.at("project_id").get<std::string>();
        for (const auto& c : manifest.at("nace_codes")) p.nace_codes.push_back(NaceCode::parse(c.get<std::string>()));
        p.config = config_from_json(manifest.at("config"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "manifest.json: " + std::string(e.what()));
    }

    {
        std::ifstream in(dir / "activities.jsonl");
        if (!in) throw Error(ErrorKind::Io, "cannot open activities.jsonl");
        try {
            p.taxonomy = parse_taxonomy(in);
        } catch (const Error& e) {
            throw Error(e.kind(), "activities.jsonl: " + std::string(e.what()));
        }
    }
    read_records(dir / "documents.jsonl", [&](const json& r) { p.add_document(document_from_json(r)); });

    std::vector<CandidateMapping> candidates;
    read_records(dir / "candidates.jsonl", [&](const json& r) { candidates.push_back(candidate_from_json(r)); });
    std::vector<Vote> votes;
    read_records(dir / "votes.jsonl", [&](const json& r) { votes.push_back(vote_from_json(r)); });

    for (const auto& c : candidates) {
        const auto* doc = p.find_document(c.doc_id);
        if (!doc || c.char_end > doc->length())
            throw Error(ErrorKind::Validation, "candidate " + c.candidate_id + " points outside its document");
        if (!p.taxonomy.find(c.activity_id))
            throw Error(ErrorKind::Validation, "candidate " + c.candidate_id + " references unknown activity");
    }
    p.adjudication.set_policy(p.config.policy);
    p.adjudication.restore(std::move(candidates), std::move(votes));

    if (manifest.value("has_index", false)) {
        try {
            p.index = VectorIndex::load(dir / "index.bin");
        } catch (const Error& e) {
            throw Error(e.kind(), "index.bin: " + std::string(e.what()));
        }
    }
    return p;
}

ProjectStore::ProjectStore(fs::path root) : root_(std::move(root))
{
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create store " + root_.string() + ": " + ec.message());
}

fs::path ProjectStore::path_of(std::string_view project_id) const
{
    if (!is_valid_project_id(project_id))
        throw Error(ErrorKind::InvalidArgument, "invalid project id \"" + std::string(project_id) + "\"");
    return root_ / std::string(project_id);
}

bool ProjectStore::exists(std::string_view project_id) const
{
    return is_valid_project_id(project_id) && fs::exists(path_of(project_id) / "manifest.json");
}

std::vector<std::string> ProjectStore::list() const
{
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_))
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
            ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

Project ProjectStore::load(std::string_view project_id) const
{
    if (!exists(project_id)) throw Error(ErrorKind::NotFound, "no project \"" + std::string(project_id) + "\"");
    return load_project(path_of(project_id));
}

void ProjectStore::save(const Project& project) const { save_project(project, path_of(project.project_id)); }

}  // namespace esg
