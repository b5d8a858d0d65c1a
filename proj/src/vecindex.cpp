#include "esg/vecindex.hpp"

#include "esg/error.hpp"
#include "esg/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>

#include <json.hpp>

namespace esg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// EmbeddingVector

EmbeddingVector EmbeddingVector::normalized(std::vector<double> values)
{
    if (values.empty()) throw Error(ErrorKind::Validation, "empty embedding");
    double sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "non-finite embedding component");
        sq += v * v;
    }
    if (sq == 0.0) throw Error(ErrorKind::Validation, "zero embedding vector");
    const double norm = std::sqrt(sq);
    for (double& v : values) v /= norm;
    return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::from_normalized(std::vector<double> values)
{
    return EmbeddingVector(std::move(values));
}

double EmbeddingVector::dot(const EmbeddingVector& other) const
{
    if (other.values_.size() != values_.size())
        throw Error(ErrorKind::Validation, "dimension mismatch in dot product");
    double s = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * other.values_[i];
    return s;
}

// ---------------------------------------------------------------------------
// Embedders

HashedBowEmbedder::HashedBowEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed)
{
    if (dimension_ == 0) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be positive");
}

std::string HashedBowEmbedder::id() const
{
    return "hashed-bow-" + std::to_string(dimension_) + "-" + hex64(seed_);
}

std::vector<std::string> HashedBowEmbedder::tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::vector<double>> HashedBowEmbedder::embed_raw(std::span<const std::string> texts)
{
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        std::vector<double> v(dimension_, 0.0);
        for (const auto& tok : tokenize(t)) v[fnv1a64(tok, seed_) % dimension_] += 1.0;
        out.push_back(std::move(v));
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint_url, std::string model, std::string api_key,
                               std::size_t dimension, std::size_t batch_size, HttpRetryPolicy retry)
    : endpoint_(HttpEndpoint::parse(endpoint_url)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      dimension_(dimension),
      batch_size_(std::max<std::size_t>(batch_size, 1)),
      retry_(retry)
{
}

RemoteEmbedder RemoteEmbedder::from_env()
{
    auto get = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? v : "";
    };
    auto url = get("EMBED_ENDPOINT");
    auto model = get("EMBED_MODEL");
    auto dim = get("EMBED_DIMENSION");
    if (url.empty() || model.empty() || dim.empty())
        throw Error(ErrorKind::InvalidArgument,
                    "EMBED_ENDPOINT, EMBED_MODEL and EMBED_DIMENSION must be set for the remote embedder");
    return RemoteEmbedder(url, model, get("EMBED_API_KEY"), std::stoul(dim));
}

std::vector<std::vector<double>> RemoteEmbedder::embed_raw(std::span<const std::string> texts)
{
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (std::size_t begin = 0; begin < texts.size(); begin += batch_size_) {
        auto batch = texts.subspan(begin, std::min(batch_size_, texts.size() - begin));
        json req{{"model", model_}, {"texts", json(std::vector<std::string>(batch.begin(), batch.end()))}};
        auto body = post_json(endpoint_, req.dump(), headers, retry_);
        try {
            auto res = json::parse(body);
            auto dim = res.at("dimension").get<std::size_t>();
            if (dim != dimension_)
                throw Error(ErrorKind::Validation, "embedder declared dimension " + std::to_string(dim) +
                                                       ", expected " + std::to_string(dimension_));
            auto vectors = res.at("vectors").get<std::vector<std::vector<double>>>();
            if (vectors.size() != batch.size())
                throw Error(ErrorKind::Validation, "embedder returned " + std::to_string(vectors.size()) +
                                                       " vectors for " + std::to_string(batch.size()) + " texts");
            for (auto& v : vectors) out.push_back(std::move(v));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, std::string("malformed embedding response: ") + e.what());
        }
    }
    return out;
}

std::vector<EmbeddingVector> embed(std::span<const std::string> texts, EmbeddingBackend& provider)
{
    for (const auto& t : texts)
        if (t.empty()) throw Error(ErrorKind::InvalidArgument, "cannot embed an empty string");
    auto raw = provider.embed_raw(texts);
    if (raw.size() != texts.size())
        throw Error(ErrorKind::Validation, "provider returned a different number of vectors");
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].size() != provider.dimension())
            throw Error(ErrorKind::Validation, "provider vector has dimension " + std::to_string(raw[i].size()) +
                                                   ", declared " + std::to_string(provider.dimension()));
        try {
            out.push_back(EmbeddingVector::normalized(std::move(raw[i])));
        } catch (const Error& e) {
            throw Error(e.kind(), std::string(e.what()) + " for text #" + std::to_string(i) + " \"" +
                                      texts[i].substr(0, 60) + "\"");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// VectorIndex

VectorIndex::VectorIndex(std::size_t dimension, std::string embedder_id)
    : dimension_(dimension), embedder_id_(std::move(embedder_id))
{
}

void VectorIndex::add(ChunkRef chunk, EmbeddingVector vector)
{
    if (vector.dimension() != dimension_)
        throw Error(ErrorKind::Validation, "vector dimension " + std::to_string(vector.dimension()) +
                                               " does not match index dimension " + std::to_string(dimension_));
    if (by_id_.contains(chunk.chunk_id))
        throw Error(ErrorKind::Validation, "duplicate chunk id " + chunk.chunk_id);
    by_id_.emplace(chunk.chunk_id, entries_.size());
    entries_.push_back({std::move(chunk), std::move(vector)});
}

std::vector<RetrievalHit> VectorIndex::search(const EmbeddingVector& query, std::size_t k) const
{
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    if (query.dimension() != dimension_)
        throw Error(ErrorKind::Validation, "query dimension does not match index");

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
        scored.emplace_back(std::clamp(query.dot(entries_[i].vector), -1.0, 1.0), i);

    auto before = [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return entries_[a.second].chunk.chunk_id < entries_[b.second].chunk.chunk_id;
    };
    const auto n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), before);

    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) hits.push_back({entries_[scored[i].second].chunk, scored[i].first});
    return hits;
}

namespace {

constexpr std::string_view kIndexMagic = "ESGVIDX1";

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& out, std::string_view s)
{
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint64_t u(int bytes)
    {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::string str()
    {
        auto len = static_cast<std::size_t>(u(4));
        need(len);
        std::string s(data_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    std::string_view raw(std::size_t n)
    {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > data_.size()) throw Error(ErrorKind::Parse, "truncated index file");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string VectorIndex::serialize() const
{
    std::string out(kIndexMagic);
    put_u32(out, static_cast<std::uint32_t>(dimension_));
    put_str(out, embedder_id_);
    put_u64(out, entries_.size());
    for (const auto& e : entries_) {
        put_str(out, e.chunk.chunk_id);
        put_str(out, e.chunk.doc_id);
        put_u64(out, e.chunk.char_start);
        put_u64(out, e.chunk.char_end);
        for (double v : e.vector.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

VectorIndex VectorIndex::deserialize(std::string_view bytes)
{
    Reader r(bytes);
    if (r.raw(kIndexMagic.size()) != kIndexMagic) throw Error(ErrorKind::Parse, "not an index file");
    auto dim = static_cast<std::size_t>(r.u(4));
    VectorIndex index(dim, r.str());
    auto count = r.u(8);
    for (std::uint64_t i = 0; i < count; ++i) {
        ChunkRef ref;
        ref.chunk_id = r.str();
        ref.doc_id = r.str();
        ref.char_start = static_cast<std::size_t>(r.u(8));
        ref.char_end = static_cast<std::size_t>(r.u(8));
        std::vector<double> values(dim);
        for (auto& v : values) v = std::bit_cast<double>(r.u(8));
        index.add(std::move(ref), EmbeddingVector::from_normalized(std::move(values)));
    }
    if (!r.done()) throw Error(ErrorKind::Parse, "trailing bytes in index file");
    return index;
}

void VectorIndex::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

VectorIndex VectorIndex::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

VectorIndex build_index(std::span<const Chunk> chunks, EmbeddingBackend& provider)
{
    if (chunks.empty()) throw Error(ErrorKind::InvalidArgument, "cannot build an index from zero chunks");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embed(texts, provider);

    VectorIndex index(provider.dimension(), provider.id());
    for (std::size_t i = 0; i < chunks.size(); ++i) index.add(ChunkRef::of(chunks[i]), std::move(vectors[i]));
    return index;
}

std::vector<RetrievalHit> query_top_k(const VectorIndex& index, const std::string& query_text,
                                      std::size_t k, EmbeddingBackend& provider)
{
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    if (index.empty()) throw Error(ErrorKind::InvalidArgument, "index is empty");
    if (provider.id() != index.embedder_id())
        throw Error(ErrorKind::Validation, "embedder mismatch: index built with " + index.embedder_id() +
                                               ", query uses " + provider.id());
    std::vector<std::string> q{query_text};
    auto vec = embed(q, provider);
    return index.search(vec.front(), k);
}

}  // namespace esg
