#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "esg/classifier.hpp"
#include "esg/inference.hpp"

namespace esg {

enum class Provenance { Original, Synthetic };

// One (c, i, class) triple of the benchmark.
struct LabeledPair {
    std::string pair_id;
    std::string chunk_text;
    std::string activity_id;
    std::string activity_text;
    int label = 0;
    Provenance provenance = Provenance::Original;
    std::optional<std::string> parent_id;  // set exactly when synthetic

    bool operator==(const LabeledPair&) const = default;
};

nlohmann::json to_json(const LabeledPair& p);
LabeledPair pair_from_json(const nlohmann::json& r);

// Unique ids, labels in {0,1}, synthetic <=> parent, parent present with the
// same activity and label. With test_only, synthetic items are rejected.
void validate_dataset(std::span<const LabeledPair> pairs, bool test_only = false);

std::vector<LabeledPair> parse_dataset(std::istream& in, bool test_only = false);
std::vector<LabeledPair> load_dataset(const std::filesystem::path& path, bool test_only = false);
std::string serialize_dataset(std::span<const LabeledPair> pairs);
void save_dataset(const std::filesystem::path& path, std::span<const LabeledPair> pairs);

struct ActivityCounts {
    std::size_t total = 0;
    std::size_t positives = 0;
};

struct DatasetStats {
    std::size_t total = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t original = 0;
    std::size_t synthetic = 0;
    std::map<std::string, ActivityCounts> per_activity;
};

DatasetStats dataset_stats(std::span<const LabeledPair> pairs);
nlohmann::json to_json(const DatasetStats& stats);

struct DatasetSplit {
    std::vector<LabeledPair> train;
    std::vector<LabeledPair> test;
};

// |test| = round(test_fraction * N); each class contributes its largest-
// remainder share, so per-class test counts are within one item of
// proportional. Both sides keep input order. Requires original pairs only
// and at least two items per class.
DatasetSplit split_train_test(std::span<const LabeledPair> pairs, double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Paraphrase augmentation

struct ParaphraseTemplate {
    std::string template_id;
    std::string body;  // contains {TEXT} once
};

const ParaphraseTemplate& default_paraphrase_template();
std::string render_paraphrase_prompt(const ParaphraseTemplate& tmpl, const std::string& text);

struct AugmentOptions {
    std::size_t n_paraphrases = 5;
    int max_retries = 3;  // regenerations allowed when the output echoes the parent
    std::size_t parallelism = 4;
    double temperature = 0.7;
    ParaphraseTemplate prompt = default_paraphrase_template();
};

struct AugmentIssue {
    std::string parent_id;
    std::size_t variant = 0;  // 1-based
    std::string detail;       // last output for flags, error text for failures
};

struct AugmentResult {
    std::vector<LabeledPair> synthetic;  // parent order, then variant order
    std::vector<AugmentIssue> flagged;   // paraphrase kept echoing the parent
    std::vector<AugmentIssue> failures;  // generator errors
};

// Synthetic ids are "<parent>-syn<j>". Flagged and failed variants are left
// out of `synthetic` and reported instead.
AugmentResult augment(std::span<const LabeledPair> originals, InferenceBackend& generator,
                      const AugmentOptions& options = {});

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::map<std::string, std::size_t> assignments;  // pair_id -> fold

    std::vector<std::size_t> fold_sizes() const;
};

nlohmann::json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& r);

// Original pairs are dealt round-robin per class after a seeded shuffle, so
// fold sizes and per-fold class counts differ by at most one. Synthetic pairs
// join their parent's fold.
FoldPlan make_folds(std::span<const LabeledPair> train, std::size_t k, std::uint64_t seed);
FoldPlan make_folds(const DatasetSplit& split, std::size_t k, std::uint64_t seed);

enum class ValidationPlacement { InsideFold, BeforeFolding };

struct CvRound {
    std::vector<LabeledPair> train;
    std::vector<LabeledPair> validation;  // carved from the training folds
    std::vector<LabeledPair> heldout;     // the fold itself
};

// Round `fold` of the plan. With validation_ratio > 0 a stratified share of
// the remaining originals (with their paraphrases) becomes the validation set.
CvRound cv_round(const FoldPlan& plan, std::span<const LabeledPair> train, std::size_t fold,
                 double validation_ratio, std::uint64_t seed);

// Stratified carve-out used when validation happens before folding.
DatasetSplit carve_validation(std::span<const LabeledPair> pairs, double ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fine-tuning export

// Settings handed to an external fine-tuning job. Defaults are the reference
// configuration; apply_override records every change.
struct HyperparameterManifest {
    int gradient_accumulation_steps = 5;
    double learning_rate = 3e-4;
    double validation_split_ratio = 0.15;
    int cv_folds = 10;
    std::string eval_cadence = "every 10% of total steps";
    std::string optimizer = "AdamW";
    std::string adapter = "LoRA";
    int lora_rank = 8;
    int lora_alpha = 32;
    double lora_dropout = 0.05;
    std::vector<std::string> lora_target_modules{"query_key_value"};
    std::string validation_placement = "inside-fold";
    std::map<std::string, nlohmann::json> overrides;  // key -> {"default", "value"}

    void apply_override(const std::string& key, const nlohmann::json& value);
    nlohmann::json to_json() const;
};

struct FinetuneExample {
    std::string chunk_text;
    std::string activity_text;
    int label = 0;

    bool operator==(const FinetuneExample&) const = default;
};

// One line per pair: {"messages": [system, user, assistant "1"/"0"]}.
std::string render_finetune(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl);
std::filesystem::path manifest_path_for(const std::filesystem::path& export_path);
// The sidecar record describing an export.
nlohmann::json finetune_manifest(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl,
                                 const HyperparameterManifest& manifest, const std::string& data_file);
// Writes the chat records plus a manifest sidecar next to them.
void export_finetune(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl,
                     const std::filesystem::path& path, const HyperparameterManifest& manifest = {});

std::vector<FinetuneExample> parse_finetune(std::istream& in, const PromptTemplate& tmpl);
std::vector<FinetuneExample> load_finetune(const std::filesystem::path& path, const PromptTemplate& tmpl);

}  // namespace esg
