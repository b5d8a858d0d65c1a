#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "esg/adjudication.hpp"
#include "esg/corpus.hpp"
#include "esg/inference.hpp"
#include "esg/taxonomy.hpp"
#include "esg/vecindex.hpp"

namespace esg {

inline constexpr std::string_view kProjectSchema = "esg-project/1";

struct ProjectConfig {
    ChunkingParams chunking;
    std::size_t top_k = 10;
    std::optional<double> min_score;  // hits scoring below are not classified
    std::string template_id = "esg-activity-v1";
    std::size_t parallelism = 4;
    std::uint64_t seed = 42;
    AdjudicationPolicy policy;
    bool blind_mode = true;
    // Filled in by the last run.
    std::string embedder_id;
    std::string classifier_id;

    bool operator==(const ProjectConfig&) const;
};

nlohmann::json to_json(const ProjectConfig& c);
ProjectConfig config_from_json(const nlohmann::json& r);

struct Project {
    std::string project_id;
    Taxonomy taxonomy;
    std::vector<NaceCode> nace_codes;
    std::vector<Document> documents;
    ProjectConfig config;
    std::optional<VectorIndex> index;
    AdjudicationStore adjudication;

    const Document* find_document(std::string_view doc_id) const;
    // Throws Error(Conflict) when the doc_id is already present.
    void add_document(Document doc);
    // Every chunk of every document, documents ordered by doc_id.
    std::vector<Chunk> all_chunks() const;

    bool operator==(const Project&) const;
};

// Letters, digits, '-' and '_'; used as a directory name.
bool is_valid_project_id(std::string_view id);

struct RunReport {
    std::size_t activities = 0;
    std::size_t chunks = 0;
    std::vector<CandidateMapping> candidates;  // produced by this run
    std::vector<std::string> errors;           // per-item classification failures
    bool index_rebuilt = false;
};

nlohmann::json to_json(const RunReport& r);

// (Re)builds the project index when it is missing or its chunk set changed.
// Throws Error(Validation) when an existing index came from another embedder.
bool ensure_index(Project& project, EmbeddingBackend& embedder, bool force = false);

// Select activities, retrieve top-k chunks per activity, classify each hit
// and merge the candidates into the project.
RunReport run_pipeline(Project& project, EmbeddingBackend& embedder, InferenceBackend& classifier);

std::string make_candidate_id(std::string_view project_id, std::string_view activity_id, std::string_view chunk_id);

enum class AnnotationMode { Model, Adjudicated };
AnnotationMode parse_annotation_mode(std::string_view s);

struct StandoffAnnotation {
    std::string doc_id;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string activity_id;
    double retrieval_score = 0.0;
    int label = 1;
    std::string candidate_id;

    bool operator==(const StandoffAnnotation&) const = default;
};

nlohmann::json to_json(const StandoffAnnotation& a);

// Model mode: spans the classifier labelled 1. Adjudicated mode: accepted
// spans; throws PendingCandidatesError while anything is pending. Sorted by
// (doc_id, char_start, char_end, activity_id).
std::vector<StandoffAnnotation> annotate(const Project& project, AnnotationMode mode);

// Adjudicated dataset of the project; throws PendingCandidatesError.
std::vector<LabeledPair> export_project_dataset(const Project& project);

std::string serialize_candidates(const std::vector<CandidateMapping>& candidates);
std::string serialize_annotations(const std::vector<StandoffAnnotation>& annotations);

// Directory layout: manifest.json, activities.jsonl, documents.jsonl,
// candidates.jsonl, votes.jsonl and index.bin when an index exists.
void save_project(const Project& project, const std::filesystem::path& dir);
// Throws Error(SchemaVersion) for an unknown schema tag and Error(Parse)
// naming the file and record index for corrupt records.
Project load_project(const std::filesystem::path& dir);

// A directory holding one sub-directory per project.
class ProjectStore {
public:
    explicit ProjectStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path_of(std::string_view project_id) const;
    bool exists(std::string_view project_id) const;
    std::vector<std::string> list() const;
    Project load(std::string_view project_id) const;
    void save(const Project& project) const;

private:
    std::filesystem::path root_;
};

}  // namespace esg
