#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "esg/benchmark.hpp"
#include "esg/classifier.hpp"
#include "esg/inference.hpp"
#include "esg/pipeline.hpp"
#include "esg/taxonomy.hpp"
#include "esg/vecindex.hpp"

namespace fixtures {

// Removes itself on destruction.
class TempDir {
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("esg-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string activity_id(int i)
{
    char buf[8];
    std::snprintf(buf, sizeof buf, "A%02d", i);
    return buf;
}

// 265 original pairs over 12 activities, 78 labelled 1.
inline std::vector<esg::LabeledPair> reference_dataset(int total = 265, int positives = 78)
{
    std::vector<esg::LabeledPair> out;
    for (int i = 0; i < total; ++i) {
        esg::LabeledPair p;
        char id[16];
        std::snprintf(id, sizeof id, "p%03d", i);
        p.pair_id = id;
        p.activity_id = activity_id(i % 12);
        p.activity_text = "Activity " + p.activity_id + " covers assets of kind " + std::to_string(i % 12);
        p.chunk_text = "Disclosure excerpt " + std::to_string(i) + " reports figures on plant " +
                       std::to_string(i * 7 % 31) + ".";
        // Spread the positives over the id range.
        p.label = (i * 97) % total < positives ? 1 : 0;
        out.push_back(std::move(p));
    }
    return out;
}

// Paraphraser that always produces something new, derived from the tags.
inline esg::FunctionBackend rewording_generator()
{
    return esg::FunctionBackend("rewording", [](const esg::InferenceCall& call) {
        return esg::Completion{"Reworded " + call.tag("variant") + " of " + call.tag("pair_id") + ": " +
                                   call.messages.back().content.substr(0, 40),
                               std::nullopt};
    });
}

// Four documents from four companies and twelve activities with disjoint
// vocabulary. One sentence of each document mentions one activity.
struct EndToEnd {
    esg::Taxonomy taxonomy;
    std::vector<esg::Document> documents;
};

inline EndToEnd end_to_end_fixture()
{
    static const char* topics[12][2] = {
        {"solar photovoltaic panels", "Electricity generation using solar photovoltaic technology"},
        {"onshore wind turbines", "Electricity generation from wind power"},
        {"hydropower dams reservoirs", "Electricity generation from hydropower"},
        {"electric rail freight locomotives", "Freight rail transport"},
        {"urban metro tramway passengers", "Urban and suburban passenger land transport"},
        {"building insulation retrofit windows", "Renovation of existing buildings"},
        {"district heating networks pipes", "District heating and cooling distribution"},
        {"hydrogen electrolysis electrolysers", "Manufacture of hydrogen"},
        {"cement clinker kilns", "Manufacture of cement"},
        {"battery cells recycling", "Manufacture of batteries"},
        {"afforestation seedlings forest", "Afforestation"},
        {"wastewater sludge treatment", "Urban waste water treatment"},
    };
    static const char* nace[12] = {"D.35.1", "D.35.1", "D.35.1", "H.49.2", "H.49.3", "F.41",
                                   "D.35.3", "C.20.1", "C.23.5", "C.27.2", "A.02", "E.37"};
    EndToEnd f;
    f.taxonomy.version = "fixture-1";
    for (int i = 0; i < 12; ++i) {
        esg::EsgActivity a;
        a.activity_id = activity_id(i);
        a.title = topics[i][1];
        a.full_description = std::string(topics[i][1]) + ". Covers " + topics[i][0] + ".";
        a.short_description = std::string(topics[i][1]) + " " + topics[i][0];
        a.objective = "climate-change-mitigation";
        a.nace_codes.push_back(esg::NaceCode::parse(nace[i]));
        f.taxonomy.activities.push_back(std::move(a));
    }
    static const char* filler =
        "The group reports revenue growth and stable governance practices across all regions during the year. "
        "Employees received training and the board met regularly to review risk and compliance matters. ";
    for (int d = 0; d < 4; ++d) {
        std::string text;
        for (int s = 0; s < 6; ++s) {
            text += filler;
            int topic = (d * 3 + s) % 12;
            text += std::string("This year we expanded ") + topics[topic][0] + " investments at site " +
                    std::to_string(d * 10 + s) + ".\n";
        }
        f.documents.push_back(esg::make_document(text, "Company " + std::to_string(d), "Report " + std::to_string(d)));
    }
    return f;
}

inline esg::Project end_to_end_project(const EndToEnd& f)
{
    esg::Project p;
    p.project_id = "e2e";
    p.taxonomy = f.taxonomy;
    p.config.chunking = {40, 8};
    p.config.top_k = 5;
    p.config.parallelism = 4;
    for (const auto& d : f.documents) p.add_document(d);
    return p;
}

}  // namespace fixtures
