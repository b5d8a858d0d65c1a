#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "esg/corpus.hpp"
#include "esg/http_client.hpp"

namespace esg {

// Unit-length embedding. Construction normalizes; non-finite or zero input is rejected.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    static EmbeddingVector normalized(std::vector<double> values);
    // Takes values that are already unit length (e.g. read back from disk).
    static EmbeddingVector from_normalized(std::vector<double> values);

    std::span<const double> values() const noexcept { return values_; }
    std::size_t dimension() const noexcept { return values_.size(); }
    double dot(const EmbeddingVector& other) const;

    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

// Contract for anything that turns text into vectors. Implementations must be
// safe to call from several threads at once.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    // One raw vector per input, in input order.
    virtual std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) = 0;
};

// Deterministic offline embedder: lowercase, split on non-alphanumerics, hash
// each token into one of `dimension` buckets, count, normalize. Bytes >= 0x80
// count as alphanumeric so non-ASCII words stay whole.
class HashedBowEmbedder final : public EmbeddingBackend {
public:
    static constexpr std::size_t kDefaultDimension = 256;
    static constexpr std::uint64_t kDefaultSeed = 0x5eed;

    explicit HashedBowEmbedder(std::size_t dimension = kDefaultDimension,
                               std::uint64_t seed = kDefaultSeed);

    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override;

    static std::vector<std::string> tokenize(std::string_view text);

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

// Remote provider. Wire format, POST JSON:
//   request  {"model": M, "texts": [..]}
//   response {"model": M, "dimension": D, "vectors": [[..], ..]}
class RemoteEmbedder final : public EmbeddingBackend {
public:
    RemoteEmbedder(std::string endpoint_url, std::string model, std::string api_key,
                   std::size_t dimension, std::size_t batch_size = 64, HttpRetryPolicy retry = {});
    // EMBED_ENDPOINT, EMBED_MODEL, EMBED_API_KEY, EMBED_DIMENSION.
    static RemoteEmbedder from_env();

    std::string id() const override { return "remote:" + model_; }
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override;

private:
    HttpEndpoint endpoint_;
    std::string model_;
    std::string api_key_;
    std::size_t dimension_;
    std::size_t batch_size_;
    HttpRetryPolicy retry_;
};

// Embeds and normalizes. Throws on empty inputs, count or dimension mismatch,
// and non-finite or zero vectors.
std::vector<EmbeddingVector> embed(std::span<const std::string> texts, EmbeddingBackend& provider);

struct ChunkRef {
    std::string chunk_id;
    std::string doc_id;
    std::size_t char_start = 0;
    std::size_t char_end = 0;

    static ChunkRef of(const Chunk& c) { return {c.chunk_id, c.doc_id, c.char_start, c.char_end}; }
    bool operator==(const ChunkRef&) const = default;
};

struct RetrievalHit {
    ChunkRef chunk;
    double score = 0.0;  // cosine similarity

    bool operator==(const RetrievalHit&) const = default;
};

struct IndexEntry {
    ChunkRef chunk;
    EmbeddingVector vector;

    bool operator==(const IndexEntry&) const = default;
};

// Embedded store with exact cosine search. Immutable once built; const
// methods may be called concurrently.
class VectorIndex {
public:
    VectorIndex() = default;
    VectorIndex(std::size_t dimension, std::string embedder_id);

    void add(ChunkRef chunk, EmbeddingVector vector);

    std::size_t dimension() const noexcept { return dimension_; }
    const std::string& embedder_id() const noexcept { return embedder_id_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }

    // Full scan. Hits ordered by score descending, then chunk_id ascending.
    std::vector<RetrievalHit> search(const EmbeddingVector& query, std::size_t k) const;

    // Binary layout, little-endian:
    //   "ESGVIDX1" | u32 dim | u32 len, embedder_id | u64 count |
    //   count x (u32 len, chunk_id | u32 len, doc_id | u64 start | u64 end | dim x f64)
    std::string serialize() const;
    static VectorIndex deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

    bool operator==(const VectorIndex& other) const
    {
        return dimension_ == other.dimension_ && embedder_id_ == other.embedder_id_ &&
               entries_ == other.entries_;
    }

private:
    std::size_t dimension_ = 0;
    std::string embedder_id_;
    std::vector<IndexEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

VectorIndex build_index(std::span<const Chunk> chunks, EmbeddingBackend& provider);

std::vector<RetrievalHit> query_top_k(const VectorIndex& index, const std::string& query_text,
                                      std::size_t k, EmbeddingBackend& provider);

}  // namespace esg
