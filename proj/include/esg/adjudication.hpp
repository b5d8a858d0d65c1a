#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "esg/benchmark.hpp"
#include "esg/classifier.hpp"
#include "esg/corpus.hpp"
#include "esg/taxonomy.hpp"

namespace esg {

enum class CandidateStatus { Pending, Accepted, Rejected };
enum class Decision { Confirm, Reject };

std::string_view to_string(CandidateStatus s);
CandidateStatus parse_status(std::string_view s);
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);

// A retrieved (chunk, activity) pair waiting for, or past, human review.
struct CandidateMapping {
    std::string candidate_id;
    std::string doc_id;
    std::string chunk_id;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string activity_id;
    double retrieval_score = 0.0;
    std::optional<Verdict> model_verdict;
    CandidateStatus status = CandidateStatus::Pending;

    bool finalized() const noexcept { return status != CandidateStatus::Pending; }
    bool operator==(const CandidateMapping&) const = default;
};

struct Vote {
    std::string candidate_id;
    std::string annotator_id;
    Decision decision = Decision::Confirm;
    std::string timestamp;  // ISO-8601 UTC

    bool operator==(const Vote&) const = default;
};

struct AdjudicationPolicy {
    std::size_t panel_size = 3;
    std::size_t quorum = 2;  // confirms needed to accept
    // Finalize as soon as the outcome can no longer change instead of waiting
    // for the whole panel.
    bool early_finalization = false;

    void validate() const;
    bool operator==(const AdjudicationPolicy&) const = default;
};

nlohmann::json to_json(const CandidateMapping& c);
CandidateMapping candidate_from_json(const nlohmann::json& r);
nlohmann::json to_json(const Vote& v);
Vote vote_from_json(const nlohmann::json& r);
nlohmann::json to_json(const AdjudicationPolicy& p);
AdjudicationPolicy policy_from_json(const nlohmann::json& r);

std::string utc_timestamp_now();

// Accepted iff confirms >= quorum; rejected iff rejects > panel - quorum;
// pending otherwise. Throws Error(Validation) on duplicate annotators, mixed
// candidates or more votes than the panel.
CandidateStatus tally(std::span<const Vote> votes, const AdjudicationPolicy& policy);

// Candidates and their votes. Not internally synchronized; callers serialize
// writers (the service holds one lock per project).
class AdjudicationStore {
public:
    AdjudicationStore() = default;
    explicit AdjudicationStore(AdjudicationPolicy policy);

    const AdjudicationPolicy& policy() const noexcept { return policy_; }
    void set_policy(AdjudicationPolicy policy);

    const std::vector<CandidateMapping>& candidates() const noexcept { return candidates_; }
    const std::vector<Vote>& votes() const noexcept { return votes_; }

    const CandidateMapping* find(std::string_view candidate_id) const;
    std::vector<Vote> votes_for(std::string_view candidate_id) const;

    // Adds or replaces candidates. Finalized candidates are never touched;
    // pending candidates keep their votes when re-proposed and are dropped
    // (with their votes) when absent from `fresh`. Result is ordered by
    // activity, then score descending, then chunk id.
    void merge_run(std::vector<CandidateMapping> fresh);

    // Restores persisted state verbatim after checking referential integrity.
    void restore(std::vector<CandidateMapping> candidates, std::vector<Vote> votes);

    // Throws NotFound for unknown candidates, Conflict for a repeated
    // annotator or a finalized candidate, Validation for an empty annotator.
    const CandidateMapping& record_vote(Vote vote);

    bool operator==(const AdjudicationStore&) const = default;

private:
    CandidateMapping& get(std::string_view candidate_id);

    AdjudicationPolicy policy_;
    std::vector<CandidateMapping> candidates_;
    std::vector<Vote> votes_;
};

// Label 1 for accepted, 0 for rejected; chunk text is read back from the
// document span and activity text is the short description. Throws
// PendingCandidatesError listing every unfinalized candidate.
std::vector<LabeledPair> export_adjudicated(std::span<const CandidateMapping> candidates,
                                            std::span<const Document> documents,
                                            std::span<const EsgActivity> activities);

}  // namespace esg
