#include "esg/corpus.hpp"

#include "esg/error.hpp"
#include "esg/text.hpp"

namespace esg {

using nlohmann::json;

namespace {

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

struct TokenSpan {
    std::size_t start;  // code points
    std::size_t end;
};

std::vector<TokenSpan> whitespace_tokens(std::string_view text)
{
    std::vector<TokenSpan> tokens;
    std::size_t cp = 0;
    bool in_token = false;
    std::size_t start = 0;
    for (char c : text) {
        if ((static_cast<unsigned char>(c) & 0xC0) == 0x80) continue;  // continuation byte
        if (is_space(c)) {
            if (in_token) tokens.push_back({start, cp});
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            start = cp;
        }
        ++cp;
    }
    if (in_token) tokens.push_back({start, cp});
    return tokens;
}

}  // namespace

std::size_t Document::length() const { return utf8::length(text); }

std::string make_chunk_id(std::string_view doc_id, std::size_t char_start, std::size_t char_end)
{
    return std::string(doc_id) + ":" + std::to_string(char_start) + "-" + std::to_string(char_end);
}

void validate(const Document& doc)
{
    if (doc.doc_id.empty()) throw Error(ErrorKind::Validation, "document without doc_id");
    if (doc.text.empty()) throw Error(ErrorKind::Validation, "document " + doc.doc_id + " has empty text");
    if (!utf8::is_valid(doc.text))
        throw Error(ErrorKind::Validation, "document " + doc.doc_id + " is not valid UTF-8");
    const auto len = doc.length();
    for (std::size_t i = 0; i < doc.page_offsets.size(); ++i) {
        const auto& p = doc.page_offsets[i];
        if (p.char_start >= len)
            throw Error(ErrorKind::Validation, "page offset beyond end of document " + doc.doc_id);
        if (i > 0 && p.char_start <= doc.page_offsets[i - 1].char_start)
            throw Error(ErrorKind::Validation,
                        "page offsets not strictly increasing in document " + doc.doc_id);
    }
}

Document make_document(std::string_view text, std::string company, std::string title)
{
    if (!utf8::is_valid(text)) throw Error(ErrorKind::Validation, "invalid UTF-8 in document text");
    Document doc;
    doc.text = normalize_newlines(text);
    if (doc.text.empty()) throw Error(ErrorKind::Validation, "document text is empty");
    doc.doc_id = "doc-" + hex64(fnv1a64(doc.text));
    doc.company = std::move(company);
    doc.title = std::move(title);
    return doc;
}

Document make_document_from_pages(const std::vector<std::string>& pages, std::string company,
                                  std::string title)
{
    std::size_t count = pages.size();
    while (count > 0 && pages[count - 1].empty()) --count;

    std::string joined;
    std::vector<PageOffset> offsets;
    std::size_t cp = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!utf8::is_valid(pages[i]))
            throw Error(ErrorKind::Validation, "invalid UTF-8 on page " + std::to_string(i + 1));
        if (i > 0) {
            joined.push_back('\n');
            ++cp;
        }
        auto page = normalize_newlines(pages[i]);
        offsets.push_back({static_cast<int>(i + 1), cp});
        cp += utf8::length(page);
        joined += page;
    }
    auto doc = make_document(joined, std::move(company), std::move(title));
    doc.page_offsets = std::move(offsets);
    validate(doc);
    return doc;
}

Document document_from_record(const json& r, const std::string& company,
                              const std::string& fallback_title)
{
    if (!r.is_object()) throw Error(ErrorKind::Parse, "document record is not an object");
    try {
        std::string comp = company.empty() ? r.value("company", "") : company;
        std::string title = r.value("title", fallback_title);
        if (r.contains("pages")) {
            return make_document_from_pages(r.at("pages").get<std::vector<std::string>>(),
                                            std::move(comp), std::move(title));
        }
        if (!r.contains("text")) throw Error(ErrorKind::Parse, "document record needs \"text\" or \"pages\"");
        return make_document(r.at("text").get<std::string>(), std::move(comp), std::move(title));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
}

Document ingest_document(const std::filesystem::path& path, const std::string& company)
{
    auto raw = read_file(path);
    auto stem = path.stem().string();
    if (path.extension() == ".json") {
        json r;
        try {
            r = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
        }
        return document_from_record(r, company, stem);
    }
    return make_document(raw, company, stem);
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingParams& params)
{
    if (params.target_size < 1) throw Error(ErrorKind::InvalidArgument, "target_size must be >= 1");
    if (params.overlap >= params.target_size)
        throw Error(ErrorKind::InvalidArgument, "overlap must be smaller than target_size");

    const auto tokens = whitespace_tokens(doc.text);
    const auto offsets = utf8::code_point_offsets(doc.text);
    const std::size_t stride = params.target_size - params.overlap;

    std::vector<Chunk> chunks;
    for (std::size_t first = 0; first < tokens.size(); first += stride) {
        std::size_t last = std::min(first + params.target_size, tokens.size());
        Chunk c;
        c.doc_id = doc.doc_id;
        c.char_start = tokens[first].start;
        c.char_end = tokens[last - 1].end;
        c.chunk_id = make_chunk_id(doc.doc_id, c.char_start, c.char_end);
        c.text = doc.text.substr(offsets[c.char_start], offsets[c.char_end] - offsets[c.char_start]);
        chunks.push_back(std::move(c));
        if (last == tokens.size()) break;
    }
    return chunks;
}

json to_json(const Document& doc)
{
    json pages = json::array();
    for (const auto& p : doc.page_offsets) pages.push_back({{"page", p.page_number}, {"char_start", p.char_start}});
    return json{{"doc_id", doc.doc_id},
                {"company", doc.company},
                {"title", doc.title},
                {"text", doc.text},
                {"page_offsets", std::move(pages)}};
}

Document document_from_json(const json& r)
{
    Document doc;
    try {
        doc.doc_id = r.at("doc_id").get<std::string>();
        doc.company = r.value("company", "");
        doc.title = r.value("title", "");
        doc.text = r.at("text").get<std::string>();
        if (r.contains("page_offsets")) {
            for (const auto& p : r.at("page_offsets"))
                doc.page_offsets.push_back({p.at("page").get<int>(), p.at("char_start").get<std::size_t>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
    validate(doc);
    return doc;
}

}  // namespace esg
