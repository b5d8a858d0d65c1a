#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace esg {

// Binary confusion counts with class 1 as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;

    bool operator==(const ClassScores&) const = default;
};

struct AveragedScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const AveragedScores&) const = default;
};

// Per-class scores treat each class in turn as positive. Any ratio with a
// zero denominator is 0, so a class that is never predicted scores P = 0.
struct MetricsReport {
    ConfusionMatrix confusion;
    std::array<ClassScores, 2> per_class;  // index = class label
    AveragedScores weighted;               // by support
    AveragedScores macro;
    std::optional<double> bce_loss;
};

inline constexpr double kProbabilityClamp = 1e-12;

// Labels must be 0 or 1 and the spans equally long and non-empty;
// otherwise Error(InvalidArgument).
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

ClassScores class_scores(const ConfusionMatrix& cm, int positive_class);

MetricsReport weighted_metrics(std::span<const int> y_true, std::span<const int> y_pred);

// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
double bce_loss(std::span<const int> y_true, std::span<const double> y_prob);

nlohmann::json to_json(const MetricsReport& report);

struct ReportRow {
    std::string model;
    MetricsReport report;
};

// Fixed-width table: Model | Precision | Recall | F1-Score, four decimals,
// weighted averages.
std::string format_table(std::span<const ReportRow> rows);

}  // namespace esg
