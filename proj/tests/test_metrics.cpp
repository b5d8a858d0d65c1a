#include <doctest.h>

#include "esg/error.hpp"
#include "esg/metrics.hpp"
#include "esg/text.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace esg;

namespace {

// Exact fraction over 64-bit integers; inputs here stay far from overflow.
struct Rational {
    long long num = 0;
    long long den = 1;

    static Rational of(long long n, long long d)
    {
        if (d == 0) return {0, 1};
        long long g = std::gcd(n, d);
        return {n / g, d / g};
    }
    Rational operator+(const Rational& o) const { return of(num * o.den + o.num * den, den * o.den); }
    Rational operator*(const Rational& o) const { return of(num * o.num, den * o.den); }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct OracleScores {
    Rational p, r, f1;
};

// Treat class `c` as positive and count directly from the label lists.
OracleScores oracle_class(const std::vector<int>& y, const std::vector<int>& yhat, int c)
{
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (yhat[i] == c && y[i] == c) ++tp;
        if (yhat[i] == c && y[i] != c) ++fp;
        if (yhat[i] != c && y[i] == c) ++fn;
    }
    auto p = Rational::of(tp, tp + fp);
    auto r = Rational::of(tp, tp + fn);
    // F1 as the harmonic mean of P and R, zero when both are zero.
    Rational f1{0, 1};
    if (p.num != 0 || r.num != 0) {
        auto sum = p + r;
        f1 = Rational::of(2 * p.num * r.num * sum.den, p.den * r.den * sum.num);
    }
    return {p, r, f1};
}

OracleScores oracle_weighted(const std::vector<int>& y, const std::vector<int>& yhat)
{
    long long n1 = std::count(y.begin(), y.end(), 1);
    long long n0 = static_cast<long long>(y.size()) - n1;
    long long n = static_cast<long long>(y.size());
    auto c0 = oracle_class(y, yhat, 0);
    auto c1 = oracle_class(y, yhat, 1);
    auto w0 = Rational::of(n0, n);
    auto w1 = Rational::of(n1, n);
    return {w0 * c0.p + w1 * c1.p, w0 * c0.r + w1 * c1.r, w0 * c0.f1 + w1 * c1.f1};
}

}  // namespace

TEST_CASE("confusion counts the worked example")
{
    std::vector<int> y{1, 1, 0, 0, 0}, yhat{1, 0, 0, 0, 1};
    auto cm = confusion(y, yhat);
    CHECK(cm == ConfusionMatrix{1, 1, 1, 2});
    CHECK(cm.total() == 5);
    auto perfect = confusion(y, y);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);
    std::vector<int> anti{0, 0, 1, 1, 1};
    auto a = confusion(y, anti);
    CHECK(a.tp == 0);
    CHECK(a.tn == 0);
}

TEST_CASE("confusion input errors")
{
    std::vector<int> a{1, 0}, b{1}, c{2, 0}, empty;
    CHECK_THROWS_AS(confusion(a, b), Error);
    CHECK_THROWS_AS(confusion(empty, empty), Error);
    CHECK_THROWS_AS(confusion(a, c), Error);
}

TEST_CASE("weighted metrics of the worked example are exactly 0.6")
{
    std::vector<int> y{1, 1, 0, 0, 0}, yhat{1, 0, 0, 0, 1};
    auto m = weighted_metrics(y, yhat);
    CHECK(m.per_class[1].precision == 0.5);
    CHECK(m.per_class[1].recall == 0.5);
    CHECK(m.per_class[1].f1 == 0.5);
    CHECK(m.per_class[0].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.weighted.precision == 0.6);
    CHECK(m.weighted.recall == 0.6);
    CHECK(m.weighted.f1 == 0.6);
    CHECK(m.per_class[0].support == 3);
    CHECK(m.per_class[1].support == 2);
}

TEST_CASE("zero denominators give zero terms")
{
    std::vector<int> y{1, 0}, yhat{0, 0};
    auto m = weighted_metrics(y, yhat);
    CHECK(m.per_class[1].precision == 0.0);
    CHECK(m.per_class[1].recall == 0.0);
    CHECK(m.per_class[1].f1 == 0.0);
    CHECK(m.per_class[0].precision == 0.5);
    CHECK(m.per_class[0].recall == 1.0);
    CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.weighted.f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("perfect predictions score 1")
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        std::vector<int> y(1 + uniform_below(rng, 40));
        for (auto& v : y) v = static_cast<int>(uniform_below(rng, 2));
        auto m = weighted_metrics(y, y);
        CHECK(m.weighted.precision == 1.0);
        CHECK(m.weighted.recall == 1.0);
        CHECK(m.weighted.f1 == 1.0);
    }
}

TEST_CASE("weighted metrics match the rational oracle on random sets")
{
    std::mt19937_64 rng(99);
    for (int t = 0; t < 300; ++t) {
        std::size_t n = 1 + uniform_below(rng, 200);
        std::vector<int> y(n), yhat(n);
        auto bias = uniform_below(rng, 5);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = uniform_below(rng, 5) < bias ? 1 : 0;
            yhat[i] = uniform_below(rng, 4) == 0 ? 1 - y[i] : y[i];
        }
        auto m = weighted_metrics(y, yhat);
        auto o = oracle_weighted(y, yhat);
        CHECK(std::abs(m.weighted.precision - o.p.value()) <= 1e-9);
        CHECK(std::abs(m.weighted.recall - o.r.value()) <= 1e-9);
        CHECK(std::abs(m.weighted.f1 - o.f1.value()) <= 1e-9);
    }
}

TEST_CASE("metrics are permutation invariant and symmetric under label swap")
{
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        std::size_t n = 2 + uniform_below(rng, 60);
        std::vector<int> y(n), yhat(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(uniform_below(rng, 2));
            yhat[i] = static_cast<int>(uniform_below(rng, 2));
        }
        auto base = weighted_metrics(y, yhat);

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        stable_shuffle(std::span<std::size_t>(order), rng);
        std::vector<int> py(n), pyhat(n), sy(n), syhat(n);
        for (std::size_t i = 0; i < n; ++i) {
            py[i] = y[order[i]];
            pyhat[i] = yhat[order[i]];
            sy[i] = 1 - y[i];
            syhat[i] = 1 - yhat[i];
        }
        auto perm = weighted_metrics(py, pyhat);
        CHECK(perm.weighted.f1 == doctest::Approx(base.weighted.f1).epsilon(1e-12));
        CHECK(perm.weighted.precision == doctest::Approx(base.weighted.precision).epsilon(1e-12));

        auto swapped = weighted_metrics(sy, syhat);
        CHECK(swapped.per_class[0].f1 == base.per_class[1].f1);
        CHECK(swapped.per_class[1].precision == base.per_class[0].precision);
        CHECK(swapped.weighted.f1 == doctest::Approx(base.weighted.f1).epsilon(1e-12));
        CHECK(swapped.weighted.recall == doctest::Approx(base.weighted.recall).epsilon(1e-12));
    }
}

TEST_CASE("bce loss values")
{
    std::vector<int> y{1, 0};
    std::vector<double> half{0.5, 0.5};
    CHECK(std::abs(bce_loss(y, half) - std::log(2.0)) <= 1e-12);
    std::vector<int> one{1};
    std::vector<double> quarter{0.25};
    CHECK(std::abs(bce_loss(one, quarter) - std::log(4.0)) <= 1e-12);
    std::vector<double> exact{1.0, 0.0};
    CHECK(bce_loss(y, exact) <= 1e-11);
    CHECK(bce_loss(y, exact) >= 0.0);
    std::vector<double> bad{1.2, 0.0};
    CHECK_THROWS_AS(bce_loss(y, bad), Error);
    std::vector<double> shorter{0.5};
    CHECK_THROWS_AS(bce_loss(y, shorter), Error);
}

TEST_CASE("bce is minimized at the labels")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::size_t n = 1 + uniform_below(rng, 20);
        std::vector<int> y(n);
        std::vector<double> exact(n), noisy(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(uniform_below(rng, 2));
            exact[i] = y[i];
            noisy[i] = u(rng);
        }
        CHECK(bce_loss(y, exact) <= bce_loss(y, noisy));
    }
}

TEST_CASE("report table and JSON")
{
    std::vector<int> y{1, 1, 0, 0, 0}, yhat{1, 0, 0, 0, 1};
    std::vector<ReportRow> rows{{"baseline", weighted_metrics(y, yhat)}};
    auto table = format_table(rows);
    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("F1-Score") != std::string::npos);
    CHECK(table.find("0.6000") != std::string::npos);
    auto j = to_json(rows[0].report);
    CHECK(j.at("weighted").at("f1").get<double>() == 0.6);
    CHECK(j.at("confusion").at("tp").get<int>() == 1);
}
