#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "dropcast/error.hpp"
#include "dropcast/metrics.hpp"
#include "dropcast/rng.hpp"
#include "support/oracles.hpp"

using namespace dropcast;
using namespace dropcast::metrics;

namespace {

struct Scored {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores on a coarse grid so that ties are common.
Scored random_scored(Rng& rng, int n) {
  std::uniform_int_distribution<int> grid(0, 20);
  std::bernoulli_distribution coin(0.4);
  Scored s;
  for (int i = 0; i < n; ++i) {
    const int y = coin(rng);
    s.labels.push_back(y);
    s.scores.push_back(std::min(20, grid(rng) + 4 * y) / 20.0);
  }
  return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("auc examples") {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  std::vector<int> y{0, 0, 1, 1};
  CHECK(evaluate(s, y).auc == 1.0);
  std::vector<int> flipped{1, 1, 0, 0};
  CHECK(evaluate(s, flipped).auc == 0.0);
  std::vector<double> same(4, 0.3);
  CHECK(evaluate(same, y).auc == 0.5);
  std::vector<int> one_class{1, 1, 1, 1};
  CHECK(evaluate(s, one_class).auc == 0.5);
  CHECK(evaluate({}, {}).auc == 0.5);
}

TEST_CASE("auc matches Mann-Whitney") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> size(2, 300);
    auto d = random_scored(rng, size(rng));
    const double got = evaluate(d.scores, d.labels).auc;
    const bool both = std::count(d.labels.begin(), d.labels.end(), 1) % static_cast<long>(d.labels.size()) != 0;
    if (both) CHECK(got == doctest::Approx(testing::mann_whitney_auc(d.scores, d.labels)).epsilon(1e-9));
    else CHECK(got == 0.5);
  }
}

TEST_CASE("auc is invariant to monotone transforms") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto d = random_scored(rng, 120);
    std::vector<double> t;
    for (double v : d.scores) t.push_back(std::exp(3.0 * v) - 7.0);
    CHECK(evaluate(t, d.labels).auc == doctest::Approx(evaluate(d.scores, d.labels).auc).epsilon(1e-12));
  }
}

TEST_CASE("macro f1 is symmetric under label flip and score negation") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto d = random_scored(rng, 150);
    // Nudge scores off the threshold so >= and > agree after negation.
    for (auto& v : d.scores) v += 1e-7;
    std::vector<double> neg;
    std::vector<int> flip;
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
      neg.push_back(-d.scores[i]);
      flip.push_back(1 - d.labels[i]);
    }
    auto a = evaluate(d.scores, d.labels, 0.5);
    auto b = evaluate(neg, flip, -0.5);
    CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
    CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
    CHECK(a.high_risk.f1 == doctest::Approx(b.low_risk.f1).epsilon(1e-12));
  }
}

TEST_CASE("confusion and per-class values") {
  std::vector<double> s{0.9, 0.8, 0.4, 0.6, 0.1, 0.5};
  std::vector<int> y{1, 1, 1, 0, 0, 0};
  auto r = evaluate(s, y);
  CHECK(r.confusion.tp == 2);
  CHECK(r.confusion.fn == 1);
  CHECK(r.confusion.fp == 2);
  CHECK(r.confusion.tn == 1);
  CHECK(r.confusion.total() == 6);
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.high_risk.precision == doctest::Approx(0.5));
  CHECK(r.high_risk.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.low_risk.precision == doctest::Approx(0.5));
  CHECK(r.low_risk.recall == doctest::Approx(1.0 / 3.0));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.high_risk.support == 3);

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    auto d = random_scored(rng, 97);
    CHECK(confusion_at(d.scores, d.labels, 0.5).total() == 97);
  }
  std::vector<int> short_labels{1};
  CHECK_THROWS_AS(evaluate(s, short_labels), Error);
}

TEST_CASE("undefined ratios are zero") {
  std::vector<double> s{0.1, 0.2};
  std::vector<int> y{0, 0};
  auto r = evaluate(s, y);
  CHECK(r.high_risk.precision == 0.0);
  CHECK(r.high_risk.recall == 0.0);
  CHECK(r.high_risk.f1 == 0.0);
  CHECK(r.low_risk.recall == 1.0);
}

TEST_CASE("roc curve shape") {
  Rng rng(11);
  auto d = random_scored(rng, 200);
  auto roc = roc_curve(d.scores, d.labels);
  REQUIRE(roc.size() >= 2);
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(std::isinf(roc.front().threshold));
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].fpr >= roc[i - 1].fpr);
    CHECK(roc[i].tpr >= roc[i - 1].tpr);
    if (i > 1) CHECK(roc[i].threshold < roc[i - 1].threshold);
  }
  std::set<double> distinct(d.scores.begin(), d.scores.end());
  CHECK(roc.size() == distinct.size() + 1);
}

TEST_CASE("summary json and roc csv") {
  std::vector<double> s{0.25, 0.75};
  std::vector<int> y{0, 1};
  auto r = evaluate(s, y);
  auto j = summary_json(r);
  CHECK(j["averaging"] == "macro");
  CHECK(j["auc"] == 1.0);
  CHECK(j["confusion"]["tp"] == 1);
  CHECK_FALSE(j.contains("roc_points"));
  nlohmann::json full = r;
  REQUIRE(full["roc_points"].size() == 3);
  CHECK(full["roc_points"][0]["threshold"].is_null());

  std::ostringstream out;
  write_roc_csv(out, r.roc);
  CHECK(out.str() == "fpr,tpr,threshold\n0.0,0.0,inf\n0.0,1.0,0.75\n1.0,1.0,0.25\n");
}

}
