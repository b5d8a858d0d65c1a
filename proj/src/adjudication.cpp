#include "esg/adjudication.hpp"

#include "esg/error.hpp"
#include "esg/text.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>
#include <unordered_map>

namespace esg {

using nlohmann::json;

std::string_view to_string(CandidateStatus s)
{
    switch (s) {
        case CandidateStatus::Pending: return "pending";
        case CandidateStatus::Accepted: return "accepted";
        case CandidateStatus::Rejected: return "rejected";
    }
    return "pending";
}

CandidateStatus parse_status(std::string_view s)
{
    if (s == "pending") return CandidateStatus::Pending;
    if (s == "accepted") return CandidateStatus::Accepted;
    if (s == "rejected") return CandidateStatus::Rejected;
    throw Error(ErrorKind::InvalidArgument, "unknown status \"" + std::string(s) + "\"");
}

std::string_view to_string(Decision d) { return d == Decision::Confirm ? "confirm" : "reject"; }

Decision parse_decision(std::string_view s)
{
    if (s == "confirm") return Decision::Confirm;
    if (s == "reject") return Decision::Reject;
    throw Error(ErrorKind::InvalidArgument, "decision must be \"confirm\" or \"reject\"");
}

void AdjudicationPolicy::validate() const
{
    if (quorum < 1 || quorum > panel_size)
        throw Error(ErrorKind::InvalidArgument, "policy needs 1 <= quorum <= panel_size");
}

json to_json(const CandidateMapping& c)
{
    json r{{"candidate_id", c.candidate_id},
           {"doc_id", c.doc_id},
           {"chunk_id", c.chunk_id},
           {"char_start", c.char_start},
           {"char_end", c.char_end},
           {"activity_id", c.activity_id},
           {"retrieval_score", c.retrieval_score},
           {"status", to_string(c.status)}};
    r["model_verdict"] = c.model_verdict ? to_json(*c.model_verdict) : json(nullptr);
    return r;
}

CandidateMapping candidate_from_json(const json& r)
{
    CandidateMapping c;
    try {
        c.candidate_id = r.at("candidate_id").get<std::string>();
        c.doc_id = r.at("doc_id").get<std::string>();
        c.chunk_id = r.at("chunk_id").get<std::string>();
        c.char_start = r.at("char_start").get<std::size_t>();
        c.char_end = r.at("char_end").get<std::size_t>();
        c.activity_id = r.at("activity_id").get<std::string>();
        c.retrieval_score = r.at("retrieval_score").get<double>();
        c.status = parse_status(r.at("status").get<std::string>());
        if (r.contains("model_verdict") && !r.at("model_verdict").is_null())
            c.model_verdict = verdict_from_json(r.at("model_verdict"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("candidate: ") + e.what());
    }
    if (c.char_start >= c.char_end) throw Error(ErrorKind::Validation, "candidate " + c.candidate_id + " has an empty span");
    return c;
}

json to_json(const Vote& v)
{
    return json{{"candidate_id", v.candidate_id},
                {"annotator_id", v.annotator_id},
                {"decision", to_string(v.decision)},
                {"timestamp", v.timestamp}};
}

Vote vote_from_json(const json& r)
{
    Vote v;
    try {
        v.candidate_id = r.at("candidate_id").get<std::string>();
        v.annotator_id = r.at("annotator_id").get<std::string>();
        v.decision = parse_decision(r.at("decision").get<std::string>());
        v.timestamp = r.value("timestamp", "");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("vote: ") + e.what());
    }
    return v;
}

json to_json(const AdjudicationPolicy& p)
{
    return json{{"panel_size", p.panel_size}, {"quorum", p.quorum}, {"early_finalization", p.early_finalization}};
}

AdjudicationPolicy policy_from_json(const json& r)
{
    AdjudicationPolicy p;
    p.panel_size = r.value("panel_size", p.panel_size);
    p.quorum = r.value("quorum", p.quorum);
    p.early_finalization = r.value("early_finalization", p.early_finalization);
    p.validate();
    return p;
}

std::string utc_timestamp_now()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

CandidateStatus tally(std::span<const Vote> votes, const AdjudicationPolicy& policy)
{
    policy.validate();
    if (votes.size() > policy.panel_size)
        throw Error(ErrorKind::Validation, "more votes than panel seats");
    std::set<std::string_view> annotators;
    std::size_t confirms = 0;
    std::size_t rejects = 0;
    for (const auto& v : votes) {
        if (v.candidate_id != votes.front().candidate_id)
            throw Error(ErrorKind::Validation, "tally over votes for different candidates");
        if (!annotators.insert(v.annotator_id).second)
            throw Error(ErrorKind::Validation, "duplicate vote by annotator \"" + v.annotator_id + "\"");
        (v.decision == Decision::Confirm ? confirms : rejects)++;
    }
    if (confirms >= policy.quorum) return CandidateStatus::Accepted;
    if (rejects > policy.panel_size - policy.quorum) return CandidateStatus::Rejected;
    return CandidateStatus::Pending;
}

AdjudicationStore::AdjudicationStore(AdjudicationPolicy policy) : policy_(policy) { policy_.validate(); }

void AdjudicationStore::set_policy(AdjudicationPolicy policy)
{
    policy.validate();
    policy_ = policy;
}

const CandidateMapping* AdjudicationStore::find(std::string_view candidate_id) const
{
    for (const auto& c : candidates_)
        if (c.candidate_id == candidate_id) return &c;
    return nullptr;
}

CandidateMapping& AdjudicationStore::get(std::string_view candidate_id)
{
    for (auto& c : candidates_)
        if (c.candidate_id == candidate_id) return c;
    throw Error(ErrorKind::NotFound, "unknown candidate \"" + std::string(candidate_id) + "\"");
}

std::vector<Vote> AdjudicationStore::votes_for(std::string_view candidate_id) const
{
    std::vector<Vote> out;
    for (const auto& v : votes_)
        if (v.candidate_id == candidate_id) out.push_back(v);
    return out;
}

void AdjudicationStore::merge_run(std::vector<CandidateMapping> fresh)
{
    std::vector<CandidateMapping> merged;
    std::set<std::string> kept;
    for (auto& old : candidates_) {
        if (old.finalized()) {
            kept.insert(old.candidate_id);
            merged.push_back(std::move(old));
        }
    }
    for (auto& c : fresh) {
        if (kept.contains(c.candidate_id)) continue;
        c.status = CandidateStatus::Pending;
        kept.insert(c.candidate_id);
        merged.push_back(std::move(c));
    }
    std::erase_if(votes_, [&](const Vote& v) { return !kept.contains(v.candidate_id); });
    std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
        if (a.activity_id != b.activity_id) return a.activity_id < b.activity_id;
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.chunk_id < b.chunk_id;
    });
    candidates_ = std::move(merged);
}

void AdjudicationStore::restore(std::vector<CandidateMapping> candidates, std::vector<Vote> votes)
{
    std::set<std::string> ids;
    for (const auto& c : candidates)
        if (!ids.insert(c.candidate_id).second)
            throw Error(ErrorKind::Validation, "duplicate candidate_id " + c.candidate_id);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& v : votes) {
        if (!ids.contains(v.candidate_id))
            throw Error(ErrorKind::Validation, "vote references unknown candidate " + v.candidate_id);
        if (!seen.insert({v.candidate_id, v.annotator_id}).second)
            throw Error(ErrorKind::Validation, "duplicate vote by " + v.annotator_id + " on " + v.candidate_id);
    }
    candidates_ = std::move(candidates);
    votes_ = std::move(votes);
}

const CandidateMapping& AdjudicationStore::record_vote(Vote vote)
{
    if (trim(vote.annotator_id).empty()) throw Error(ErrorKind::Validation, "annotator_id must not be empty");
    auto& cand = get(vote.candidate_id);
    if (cand.finalized())
        throw Error(ErrorKind::Conflict, "candidate " + cand.candidate_id + " is already " +
                                             std::string(to_string(cand.status)));
    auto existing = votes_for(vote.candidate_id);
    for (const auto& v : existing)
        if (v.annotator_id == vote.annotator_id)
            throw Error(ErrorKind::Conflict,
                        "annotator \"" + vote.annotator_id + "\" already voted on " + cand.candidate_id);
    if (vote.timestamp.empty()) vote.timestamp = utc_timestamp_now();

    existing.push_back(vote);
    votes_.push_back(std::move(vote));
    if (policy_.early_finalization || existing.size() >= policy_.panel_size) cand.status = tally(existing, policy_);
    return cand;
}

std::vector<LabeledPair> export_adjudicated(std::span<const CandidateMapping> candidates,
                                            std::span<const Document> documents,
                                            std::span<const EsgActivity> activities)
{
    std::vector<std::string> pending;
    for (const auto& c : candidates)
        if (!c.finalized()) pending.push_back(c.candidate_id);
    if (!pending.empty()) throw PendingCandidatesError(std::move(pending));

    std::unordered_map<std::string_view, const Document*> docs;
    for (const auto& d : documents) docs.emplace(d.doc_id, &d);
    std::unordered_map<std::string_view, const EsgActivity*> acts;
    for (const auto& a : activities) acts.emplace(a.activity_id, &a);

    std::vector<LabeledPair> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto d = docs.find(c.doc_id);
        if (d == docs.end()) throw Error(ErrorKind::NotFound, "candidate " + c.candidate_id + ": unknown document " + c.doc_id);
        auto a = acts.find(c.activity_id);
        if (a == acts.end())
            throw Error(ErrorKind::NotFound, "candidate " + c.candidate_id + ": unknown activity " + c.activity_id);
        LabeledPair p;
        p.pair_id = c.candidate_id;
        p.chunk_text = utf8::slice(d->second->text, c.char_start, c.char_end);
        p.activity_id = c.activity_id;
        p.activity_text = a->second->short_description;
        p.label = c.status == CandidateStatus::Accepted ? 1 : 0;
        p.provenance = Provenance::Original;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace esg
