#include "esg/benchmark.hpp"

#include "esg/error.hpp"
#include "esg/parallel.hpp"
#include "esg/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace esg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Records

json to_json(const LabeledPair& p)
{
    json r{{"pair_id", p.pair_id},
           {"chunk_text", p.chunk_text},
           {"activity_id", p.activity_id},
           {"activity_text", p.activity_text},
           {"label", p.label},
           {"provenance", p.provenance == Provenance::Original ? "original" : "synthetic"}};
    r["parent_id"] = p.parent_id ? json(*p.parent_id) : json(nullptr);
    return r;
}

LabeledPair pair_from_json(const json& r)
{
    if (!r.is_object()) throw Error(ErrorKind::Parse, "pair record is not an object");
    LabeledPair p;
    try {
        p.pair_id = r.at("pair_id").get<std::string>();
        p.chunk_text = r.at("chunk_text").get<std::string>();
        p.activity_id = r.at("activity_id").get<std::string>();
        p.activity_text = r.at("activity_text").get<std::string>();
        p.label = r.at("label").get<int>();
        auto prov = r.value("provenance", "original");
        if (prov == "original")
            p.provenance = Provenance::Original;
        else if (prov == "synthetic")
            p.provenance = Provenance::Synthetic;
        else
            throw Error(ErrorKind::Parse, "unknown provenance \"" + prov + "\"");
        if (r.contains("parent_id") && !r.at("parent_id").is_null()) p.parent_id = r.at("parent_id").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
    return p;
}

void validate_dataset(std::span<const LabeledPair> pairs, bool test_only)
{
    std::unordered_map<std::string_view, const LabeledPair*> by_id;
    for (const auto& p : pairs) {
        if (p.pair_id.empty()) throw Error(ErrorKind::Validation, "pair with empty pair_id");
        if (!by_id.emplace(p.pair_id, &p).second)
            throw Error(ErrorKind::Validation, "duplicate pair_id \"" + p.pair_id + "\"");
        if (p.label != 0 && p.label != 1)
            throw Error(ErrorKind::Validation, "pair " + p.pair_id + ": label must be 0 or 1");
        const bool synthetic = p.provenance == Provenance::Synthetic;
        if (synthetic != p.parent_id.has_value())
            throw Error(ErrorKind::Validation, "pair " + p.pair_id + ": parent_id must be set exactly for synthetic items");
        if (synthetic && test_only)
            throw Error(ErrorKind::Validation, "pair " + p.pair_id + ": synthetic item in a test-only dataset");
    }
    for (const auto& p : pairs) {
        if (!p.parent_id) continue;
        auto it = by_id.find(*p.parent_id);
        if (it == by_id.end())
            throw Error(ErrorKind::Validation, "pair " + p.pair_id + ": orphan parent_id \"" + *p.parent_id + "\"");
        const auto& parent = *it->second;
        if (parent.activity_id != p.activity_id || parent.label != p.label)
            throw Error(ErrorKind::Validation,
                        "pair " + p.pair_id + ": activity or label differs from parent " + parent.pair_id);
    }
}

std::vector<LabeledPair> parse_dataset(std::istream& in, bool test_only)
{
    std::vector<LabeledPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            pairs.push_back(pair_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::Parse, "dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.kind(), "dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_dataset(pairs, test_only);
    return pairs;
}

std::vector<LabeledPair> load_dataset(const std::filesystem::path& path, bool test_only)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
    return parse_dataset(in, test_only);
}

std::string serialize_dataset(std::span<const LabeledPair> pairs)
{
    std::string out;
    for (const auto& p : pairs) out += to_json(p).dump() + "\n";
    return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const LabeledPair> pairs)
{
    write_file_atomic(path, serialize_dataset(pairs));
}

DatasetStats dataset_stats(std::span<const LabeledPair> pairs)
{
    DatasetStats s;
    for (const auto& p : pairs) {
        ++s.total;
        (p.label == 1 ? s.positives : s.negatives)++;
        (p.provenance == Provenance::Original ? s.original : s.synthetic)++;
        auto& a = s.per_activity[p.activity_id];
        ++a.total;
        if (p.label == 1) ++a.positives;
    }
    return s;
}

json to_json(const DatasetStats& s)
{
    json per = json::object();
    for (const auto& [id, c] : s.per_activity) per[id] = {{"total", c.total}, {"positives", c.positives}};
    return json{{"total", s.total},         {"positives", s.positives}, {"negatives", s.negatives},
                {"original", s.original},   {"synthetic", s.synthetic}, {"per_activity", std::move(per)}};
}

// ---------------------------------------------------------------------------
// Stratified selection

namespace {

// Splits `wanted` across classes in proportion to their counts; leftover
// units go to the largest remainders (class 1 first on ties).
std::array<std::size_t, 2> class_quota(const std::array<std::size_t, 2>& counts, std::size_t wanted)
{
    const std::size_t n = counts[0] + counts[1];
    std::array<std::size_t, 2> quota{};
    std::array<std::size_t, 2> rem{};
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
        quota[c] = n == 0 ? 0 : wanted * counts[c] / n;
        rem[c] = n == 0 ? 0 : wanted * counts[c] % n;
        assigned += quota[c];
    }
    for (std::size_t left = wanted - assigned; left > 0; --left) {
        int c = rem[1] >= rem[0] ? 1 : 0;
        if (quota[c] >= counts[c]) c = 1 - c;
        ++quota[c];
        rem[c] = 0;
    }
    return quota;
}

// Picks `wanted` of the given items (by label) with per-class quotas after a
// seeded shuffle. Returns a membership mask over `labels`.
std::vector<bool> pick_stratified(std::span<const int> labels, std::size_t wanted, std::mt19937_64& rng)
{
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
    auto quota = class_quota({by_class[0].size(), by_class[1].size()}, wanted);

    std::vector<bool> chosen(labels.size(), false);
    for (int c = 0; c < 2; ++c) {
        stable_shuffle(std::span<std::size_t>(by_class[c]), rng);
        for (std::size_t i = 0; i < quota[c]; ++i) chosen[by_class[c][i]] = true;
    }
    return chosen;
}

// Maps every pair to the index of its root original within `pairs`.
std::vector<std::size_t> root_of(std::span<const LabeledPair> pairs)
{
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < pairs.size(); ++i) index.emplace(pairs[i].pair_id, i);
    std::vector<std::size_t> root(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::size_t r = i;
        for (std::size_t hops = 0; pairs[r].parent_id; ++hops) {
            if (hops > pairs.size()) throw Error(ErrorKind::Validation, "parent cycle at " + pairs[i].pair_id);
            r = index.at(*pairs[r].parent_id);
        }
        root[i] = r;
    }
    return root;
}

// Selects a stratified share of the originals in `pairs` and returns a mask
// over all pairs, synthetic items following their root.
std::vector<bool> pick_groups(std::span<const LabeledPair> pairs, double ratio, std::mt19937_64& rng)
{
    validate_dataset(pairs);
    auto root = root_of(pairs);
    std::vector<std::size_t> originals;
    std::vector<int> labels;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (root[i] == i) {
            originals.push_back(i);
            labels.push_back(pairs[i].label);
        }
    }
    auto wanted = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(originals.size())));
    auto chosen = pick_stratified(labels, wanted, rng);
    std::vector<bool> root_chosen(pairs.size(), false);
    for (std::size_t j = 0; j < originals.size(); ++j) root_chosen[originals[j]] = chosen[j];
    std::vector<bool> mask(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) mask[i] = root_chosen[root[i]];
    return mask;
}

}  // namespace

DatasetSplit split_train_test(std::span<const LabeledPair> pairs, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorKind::InvalidArgument, "test_fraction must lie strictly between 0 and 1");
    validate_dataset(pairs);
    std::array<std::size_t, 2> counts{};
    std::vector<int> labels;
    for (const auto& p : pairs) {
        if (p.provenance != Provenance::Original)
            throw Error(ErrorKind::InvalidArgument, "split_train_test accepts original pairs only (" + p.pair_id + ")");
        ++counts[p.label];
        labels.push_back(p.label);
    }
    if (counts[0] < 2 || counts[1] < 2)
        throw Error(ErrorKind::InvalidArgument, "too few items to stratify: need at least 2 per class (have " +
                                                    std::to_string(counts[0]) + " negatives, " +
                                                    std::to_string(counts[1]) + " positives)");
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(pairs.size())));
    if (n_test == 0 || n_test == pairs.size())
        throw Error(ErrorKind::InvalidArgument, "test_fraction leaves one side of the split empty");

    std::mt19937_64 rng(seed);
    auto in_test = pick_stratified(labels, n_test, rng);
    DatasetSplit split;
    for (std::size_t i = 0; i < pairs.size(); ++i) (in_test[i] ? split.test : split.train).push_back(pairs[i]);
    return split;
}

// ---------------------------------------------------------------------------
// Augmentation

const ParaphraseTemplate& default_paraphrase_template()
{
    static const ParaphraseTemplate tmpl{
        "paraphrase-v1",
        "Rewrite the following sentence in different words, preserving its exact meaning: {TEXT}. "
        "Return only the rewritten sentence.",
    };
    return tmpl;
}

std::string render_paraphrase_prompt(const ParaphraseTemplate& tmpl, const std::string& text)
{
    auto at = tmpl.body.find(kTextPlaceholder);
    if (at == std::string::npos || tmpl.body.find(kTextPlaceholder, at + 1) != std::string::npos)
        throw Error(ErrorKind::Validation, "paraphrase template must contain {TEXT} exactly once");
    return tmpl.body.substr(0, at) + text + tmpl.body.substr(at + kTextPlaceholder.size());
}

AugmentResult augment(std::span<const LabeledPair> originals, InferenceBackend& generator,
                      const AugmentOptions& options)
{
    for (const auto& p : originals)
        if (p.provenance != Provenance::Original)
            throw Error(ErrorKind::InvalidArgument, "augment expects original pairs only (" + p.pair_id + ")");
    validate_dataset(originals);

    const std::size_t n = options.n_paraphrases;
    struct Slot {
        std::optional<std::string> text;
        std::optional<AugmentIssue> flag;
        std::optional<AugmentIssue> failure;
    };
    std::vector<Slot> slots(originals.size() * n);

    parallel_for(slots.size(), std::max<std::size_t>(options.parallelism, 1), [&](std::size_t s) {
        const auto& parent = originals[s / n];
        const std::size_t variant = s % n + 1;
        const auto parent_key = to_lower_ascii(trim(parent.chunk_text));

        InferenceCall call;
        call.messages = {{"user", render_paraphrase_prompt(options.prompt, parent.chunk_text)}};
        call.tags = {{"pair_id", parent.pair_id}, {"variant", std::to_string(variant)}};
        call.temperature = options.temperature;

        std::string last;
        try {
            for (int attempt = 1; attempt <= std::max(options.max_retries, 0) + 1; ++attempt) {
                call.tags["attempt"] = std::to_string(attempt);
                last = trim(generator.complete(call).text);
                if (!last.empty() && to_lower_ascii(last) != parent_key) {
                    slots[s].text = last;
                    return;
                }
            }
            slots[s].flag = AugmentIssue{parent.pair_id, variant, last};
        } catch (const std::exception& e) {
            slots[s].failure = AugmentIssue{parent.pair_id, variant, e.what()};
        }
    });

    AugmentResult result;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto& parent = originals[s / n];
        if (slots[s].text) {
            LabeledPair p;
            p.pair_id = parent.pair_id + "-syn" + std::to_string(s % n + 1);
            p.chunk_text = *slots[s].text;
            p.activity_id = parent.activity_id;
            p.activity_text = parent.activity_text;
            p.label = parent.label;
            p.provenance = Provenance::Synthetic;
            p.parent_id = parent.pair_id;
            result.synthetic.push_back(std::move(p));
        } else if (slots[s].flag) {
            result.flagged.push_back(*slots[s].flag);
        } else if (slots[s].failure) {
            result.failures.push_back(*slots[s].failure);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldPlan::fold_sizes() const
{
    std::vector<std::size_t> sizes(k, 0);
    for (const auto& [id, f] : assignments) ++sizes.at(f);
    return sizes;
}

json to_json(const FoldPlan& plan)
{
    json a = json::object();
    for (const auto& [id, f] : plan.assignments) a[id] = f;
    return json{{"k", plan.k}, {"seed", plan.seed}, {"assignments", std::move(a)}};
}

FoldPlan fold_plan_from_json(const json& r)
{
    FoldPlan plan;
    try {
        plan.k = r.at("k").get<std::size_t>();
        plan.seed = r.value("seed", std::uint64_t{0});
        for (const auto& [id, f] : r.at("assignments").items()) {
            auto fold = f.get<std::size_t>();
            if (fold >= plan.k) throw Error(ErrorKind::Validation, "fold index out of range for " + id);
            plan.assignments[id] = fold;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("fold plan: ") + e.what());
    }
    return plan;
}

FoldPlan make_folds(std::span<const LabeledPair> train, std::size_t k, std::uint64_t seed)
{
    if (k < 2) throw Error(ErrorKind::InvalidArgument, "k must be at least 2");
    validate_dataset(train);
    auto root = root_of(train);

    std::array<std::vector<std::size_t>, 2> by_class;
    std::size_t n_originals = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (root[i] != i) continue;
        by_class[train[i].label].push_back(i);
        ++n_originals;
    }
    if (k > n_originals)
        throw Error(ErrorKind::InvalidArgument, "k = " + std::to_string(k) + " exceeds the " +
                                                    std::to_string(n_originals) + " original training pairs");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> fold_of(train.size(), 0);
    std::size_t dealt = 0;
    for (int c = 1; c >= 0; --c) {
        stable_shuffle(std::span<std::size_t>(by_class[c]), rng);
        for (auto i : by_class[c]) fold_of[i] = dealt++ % k;
    }

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    for (std::size_t i = 0; i < train.size(); ++i) plan.assignments[train[i].pair_id] = fold_of[root[i]];
    return plan;
}

FoldPlan make_folds(const DatasetSplit& split, std::size_t k, std::uint64_t seed)
{
    return make_folds(split.train, k, seed);
}

CvRound cv_round(const FoldPlan& plan, std::span<const LabeledPair> train, std::size_t fold,
                 double validation_ratio, std::uint64_t seed)
{
    if (fold >= plan.k) throw Error(ErrorKind::InvalidArgument, "fold index out of range");
    if (!(validation_ratio >= 0.0 && validation_ratio < 1.0))
        throw Error(ErrorKind::InvalidArgument, "validation_ratio must lie in [0, 1)");

    CvRound round;
    std::vector<LabeledPair> rest;
    for (const auto& p : train) {
        auto it = plan.assignments.find(p.pair_id);
        if (it == plan.assignments.end())
            throw Error(ErrorKind::Validation, "pair " + p.pair_id + " is not in the fold plan");
        (it->second == fold ? round.heldout : rest).push_back(p);
    }
    auto carved = carve_validation(rest, validation_ratio, seed ^ (0x9e3779b97f4a7c15ULL * (fold + 1)));
    round.train = std::move(carved.train);
    round.validation = std::move(carved.test);
    return round;
}

DatasetSplit carve_validation(std::span<const LabeledPair> pairs, double ratio, std::uint64_t seed)
{
    if (!(ratio >= 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidArgument, "validation ratio must lie in [0, 1)");
    std::mt19937_64 rng(seed);
    auto mask = pick_groups(pairs, ratio, rng);
    DatasetSplit out;
    for (std::size_t i = 0; i < pairs.size(); ++i) (mask[i] ? out.test : out.train).push_back(pairs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Fine-tuning export

void HyperparameterManifest::apply_override(const std::string& key, const json& value)
{
    json current = to_json();
    if (!current.contains(key) || key == "overrides")
        throw Error(ErrorKind::InvalidArgument, "unknown hyperparameter \"" + key + "\"");
    try {
        if (key == "gradient_accumulation_steps") gradient_accumulation_steps = value.get<int>();
        else if (key == "learning_rate") learning_rate = value.get<double>();
        else if (key == "validation_split_ratio") validation_split_ratio = value.get<double>();
        else if (key == "cv_folds") cv_folds = value.get<int>();
        else if (key == "eval_cadence") eval_cadence = value.get<std::string>();
        else if (key == "optimizer") optimizer = value.get<std::string>();
        else if (key == "adapter") adapter = value.get<std::string>();
        else if (key == "lora_rank") lora_rank = value.get<int>();
        else if (key == "lora_alpha") lora_alpha = value.get<int>();
        else if (key == "lora_dropout") lora_dropout = value.get<double>();
        else if (key == "lora_target_modules") lora_target_modules = value.get<std::vector<std::string>>();
        else if (key == "validation_placement") validation_placement = value.get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "bad value for " + key + ": " + e.what());
    }
    auto defaults = HyperparameterManifest{}.to_json();
    overrides[key] = json{{"default", defaults.at(key)}, {"value", value}};
}

json HyperparameterManifest::to_json() const
{
    json o = json::object();
    for (const auto& [k, v] : overrides) o[k] = v;
    return json{{"gradient_accumulation_steps", gradient_accumulation_steps},
                {"learning_rate", learning_rate},
                {"validation_split_ratio", validation_split_ratio},
                {"cv_folds", cv_folds},
                {"eval_cadence", eval_cadence},
                {"optimizer", optimizer},
                {"adapter", adapter},
                {"lora_rank", lora_rank},
                {"lora_alpha", lora_alpha},
                {"lora_dropout", lora_dropout},
                {"lora_target_modules", lora_target_modules},
                {"validation_placement", validation_placement},
                {"overrides", std::move(o)}};
}

std::string render_finetune(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl)
{
    validate(tmpl);
    std::string out;
    for (const auto& p : pairs) {
        ClassificationRequest req{p.chunk_text, p.activity_text, tmpl.template_id, "", p.activity_id};
        json messages = json::array();
        for (const auto& m : render_messages(tmpl, req)) messages.push_back({{"role", m.role}, {"content", m.content}});
        messages.push_back({{"role", "assistant"}, {"content", p.label == 1 ? "1" : "0"}});
        out += json{{"messages", std::move(messages)}}.dump() + "\n";
    }
    return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& export_path)
{
    auto p = export_path;
    p += ".manifest.json";
    return p;
}

json finetune_manifest(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl,
                       const HyperparameterManifest& manifest, const std::string& data_file)
{
    auto stats = dataset_stats(pairs);
    return json{{"hyperparameters", manifest.to_json()},
                {"prompt_template_id", tmpl.template_id},
                {"records", pairs.size()},
                {"positives", stats.positives},
                {"synthetic", stats.synthetic},
                {"data_file", data_file}};
}

void export_finetune(std::span<const LabeledPair> pairs, const PromptTemplate& tmpl,
                     const std::filesystem::path& path, const HyperparameterManifest& manifest)
{
    write_file_atomic(path, render_finetune(pairs, tmpl));
    write_file_atomic(manifest_path_for(path),
                      finetune_manifest(pairs, tmpl, manifest, path.filename().string()).dump(2) + "\n");
}

std::vector<FinetuneExample> parse_finetune(std::istream& in, const PromptTemplate& tmpl)
{
    std::vector<FinetuneExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto where = "fine-tune line " + std::to_string(line_no) + ": ";
        try {
            auto r = json::parse(line);
            const auto& messages = r.at("messages");
            std::string user, assistant;
            for (const auto& m : messages) {
                auto role = m.at("role").get<std::string>();
                if (role == "user") user = m.at("content").get<std::string>();
                if (role == "assistant") assistant = m.at("content").get<std::string>();
            }
            auto inputs = unrender_prompt(tmpl, user);
            if (!inputs) throw Error(ErrorKind::Parse, where + "user message does not match template " + tmpl.template_id);
            if (assistant != "0" && assistant != "1")
                throw Error(ErrorKind::Parse, where + "assistant content must be \"0\" or \"1\"");
            out.push_back({std::move(inputs->first), std::move(inputs->second), assistant == "1" ? 1 : 0});
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, where + e.what());
        }
    }
    return out;
}

std::vector<FinetuneExample> load_finetune(const std::filesystem::path& path, const PromptTemplate& tmpl)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return parse_finetune(in, tmpl);
}

}  // namespace esg
