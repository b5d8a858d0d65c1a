#include "esg/metrics.hpp"

#include "esg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace esg {

using nlohmann::json;

namespace {

double ratio(std::size_t num, std::size_t den)
{
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_lengths(std::size_t a, std::size_t b)
{
    if (a != b)
        throw Error(ErrorKind::InvalidArgument,
                    "length mismatch: " + std::to_string(a) + " labels vs " + std::to_string(b) + " predictions");
    if (a == 0) throw Error(ErrorKind::InvalidArgument, "cannot score an empty set");
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred)
{
    check_lengths(y_true.size(), y_pred.size());
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        int y = y_true[i];
        int p = y_pred[i];
        if ((y != 0 && y != 1) || (p != 0 && p != 1))
            throw Error(ErrorKind::InvalidArgument, "labels must be 0 or 1 (item " + std::to_string(i) + ")");
        if (y == 1)
            (p == 1 ? cm.tp : cm.fn)++;
        else
            (p == 1 ? cm.fp : cm.tn)++;
    }
    return cm;
}

ClassScores class_scores(const ConfusionMatrix& cm, int positive_class)
{
    // Viewing class 0 as positive swaps the roles of tp/tn and fp/fn.
    const bool one = positive_class == 1;
    const std::size_t tp = one ? cm.tp : cm.tn;
    const std::size_t fp = one ? cm.fp : cm.fn;
    const std::size_t fn = one ? cm.fn : cm.fp;

    ClassScores s;
    s.support = tp + fn;
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    // Harmonic mean of P and R written over counts; 0 when tp = 0.
    s.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    return s;
}

MetricsReport weighted_metrics(std::span<const int> y_true, std::span<const int> y_pred)
{
    MetricsReport r;
    r.confusion = confusion(y_true, y_pred);
    r.per_class = {class_scores(r.confusion, 0), class_scores(r.confusion, 1)};

    const auto n0 = static_cast<double>(r.per_class[0].support);
    const auto n1 = static_cast<double>(r.per_class[1].support);
    const double n = n0 + n1;
    auto weigh = [&](double m0, double m1) { return (n0 * m0 + n1 * m1) / n; };
    r.weighted = {weigh(r.per_class[0].precision, r.per_class[1].precision),
                  weigh(r.per_class[0].recall, r.per_class[1].recall),
                  weigh(r.per_class[0].f1, r.per_class[1].f1)};
    r.macro = {(r.per_class[0].precision + r.per_class[1].precision) / 2.0,
               (r.per_class[0].recall + r.per_class[1].recall) / 2.0,
               (r.per_class[0].f1 + r.per_class[1].f1) / 2.0};
    return r;
}

double bce_loss(std::span<const int> y_true, std::span<const double> y_prob)
{
    check_lengths(y_true.size(), y_prob.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < y_true.size(); ++j) {
        const int y = y_true[j];
        const double raw = y_prob[j];
        if (y != 0 && y != 1) throw Error(ErrorKind::InvalidArgument, "labels must be 0 or 1");
        if (!(raw >= 0.0 && raw <= 1.0))
            throw Error(ErrorKind::InvalidArgument, "probability outside [0, 1] at item " + std::to_string(j));
        const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
        sum += y == 1 ? std::log(p) : std::log1p(-p);
    }
    return -sum / static_cast<double>(y_true.size());
}

json to_json(const MetricsReport& r)
{
    auto scores = [](const ClassScores& s) {
        return json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    };
    auto avg = [](const AveragedScores& a) {
        return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
    };
    json out{{"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
             {"per_class", {{"0", scores(r.per_class[0])}, {"1", scores(r.per_class[1])}}},
             {"weighted", avg(r.weighted)},
             {"macro", avg(r.macro)}};
    out["bce_loss"] = r.bce_loss ? json(*r.bce_loss) : json(nullptr);
    return out;
}

std::string format_table(std::span<const ReportRow> rows)
{
    std::size_t width = 5;
    for (const auto& row : rows) width = std::max(width, row.model.size());

    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s\n", static_cast<int>(width), "Model", "Precision", "Recall",
                  "F1-Score");
    out += buf;
    out += std::string(width + 2 + 9 * 3 + 4, '-') + "\n";
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f\n", static_cast<int>(width), row.model.c_str(),
                      row.report.weighted.precision, row.report.weighted.recall, row.report.weighted.f1);
        out += buf;
    }
    return out;
}

}  // namespace esg
