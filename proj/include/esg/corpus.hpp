#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace esg {

struct PageOffset {
    int page_number = 1;
    std::size_t char_start = 0;

    bool operator==(const PageOffset&) const = default;
};

// A disclosure document. All offsets are in code points, not bytes.
struct Document {
    std::string doc_id;
    std::string company;
    std::string title;
    std::string text;  // UTF-8, LF newlines
    std::vector<PageOffset> page_offsets;

    std::size_t length() const;
    bool operator==(const Document&) const = default;
};

struct Chunk {
    std::string doc_id;
    std::string chunk_id;
    std::size_t char_start = 0;
    std::size_t char_end = 0;  // exclusive
    std::string text;

    bool operator==(const Chunk&) const = default;
};

struct ChunkingParams {
    std::size_t target_size = 256;  // whitespace-delimited tokens per window
    std::size_t overlap = 32;
};

// Pure function of its inputs, e.g. "doc-1a2b...:120-988".
std::string make_chunk_id(std::string_view doc_id, std::size_t char_start, std::size_t char_end);

// Throws Error(Validation) if the document breaks its invariants.
void validate(const Document& doc);

// Builds a document from already-extracted text. Newlines are normalized,
// everything else is kept. doc_id derives from the normalized text.
Document make_document(std::string_view text, std::string company, std::string title);

// Pages are joined with a single LF; each page's start becomes a page offset.
// Trailing empty pages are dropped.
Document make_document_from_pages(const std::vector<std::string>& pages, std::string company,
                                  std::string title);

// Plain text, or a .json record {"title", "company", "text"} / {"pages": [...]}.
// A non-empty `company` argument overrides the record's own field.
Document ingest_document(const std::filesystem::path& path, const std::string& company);
Document document_from_record(const nlohmann::json& record, const std::string& company,
                              const std::string& fallback_title);

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingParams& params = {});

nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& record);

}  // namespace esg
