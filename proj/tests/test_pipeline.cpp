#include <doctest.h>

#include <map>
#include <sstream>

#include "dropcast/dataset_io.hpp"
#include "dropcast/error.hpp"
#include "dropcast/pipeline.hpp"
#include "dropcast/synthgen.hpp"
#include "support/oracles.hpp"

using namespace dropcast;
using namespace dropcast::pipeline;

namespace {

Date day0() { return Date::from_ymd(2018, 4, 2); }

CallRecord call(int msg, Date date, int duration, bool connected, std::string id = "B1") {
  return CallRecord{std::move(id), msg, date, duration, connected};
}

BeneficiaryProfile profile(std::string id = "B1") {
  return BeneficiaryProfile{std::move(id), 30, 2, 3, Date::from_ymd(2018, 1, 1), 20, 2, "marathi", PhoneOwner::family};
}

std::vector<CallRecord> regular_log(int n, int every_days, int duration, bool connected) {
  std::vector<CallRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(call(i + 1, day0().plus_days(i * every_days), duration, connected));
  return out;
}

AggregateFeatures aggregate_oracle(std::span<const CallRecord> calls, Date end, int window_days) {
  AggregateFeatures f{0, 0, 0, window_days + 1, window_days + 1, window_days + 1};
  for (const auto& c : calls) {
    const int gap = end.serial() - c.call_date.serial();
    f.n_attempts += 1;
    if (gap < f.days_since_last_attempt) f.days_since_last_attempt = gap;
    if (c.connected) {
      f.n_connections += 1;
      if (gap < f.days_since_last_connection) f.days_since_last_connection = gap;
      if (c.duration_s >= 30) {
        f.n_engagements += 1;
        if (gap < f.days_since_last_engagement) f.days_since_last_engagement = gap;
      }
    }
  }
  return f;
}

struct SpanOracle {
  std::vector<double> static_x;
  std::vector<double> seq_x;
  int seq_len = 0;
  int label = 0;
};

// Enumerates the calls of the six-week span starting at `start` by a linear
// scan of every record.
SpanOracle span_oracle(const std::vector<CallRecord>& calls, const BeneficiaryProfile& p, Date start,
                       const PipelineConfig& cfg) {
  std::vector<CallRecord> input;
  bool engaged_later = false;
  for (const auto& c : calls) {
    const int d = c.call_date.serial() - start.serial();
    if (d >= 0 && d < cfg.short_input_days) input.push_back(c);
    if (d >= cfg.short_input_days && d < cfg.short_input_days + cfg.short_label_days && c.connected &&
        c.duration_s >= 30)
      engaged_later = true;
  }
  SpanOracle o;
  o.label = engaged_later ? 0 : 1;
  const Date end = start.plus_days(cfg.short_input_days);
  o.static_x = encode_static(p, aggregate_oracle(input, end, cfg.short_input_days), cfg.schema,
                             cfg.short_input_days, cfg.short_max_len);
  const int n = static_cast<int>(input.size());
  const int first = std::max(0, n - cfg.short_max_len);
  o.seq_len = n - first;
  o.seq_x.assign(static_cast<std::size_t>(cfg.short_max_len * kPerCallFeatures), 0.0);
  for (int i = first; i < n; ++i) {
    const auto& c = input[static_cast<std::size_t>(i)];
    const Date prev = i == 0 ? start : input[static_cast<std::size_t>(i - 1)].call_date;
    double* row = o.seq_x.data() + (i - first) * kPerCallFeatures;
    row[0] = std::min(1.0, c.duration_s / 300.0);
    row[1] = c.connected;
    row[2] = c.connected && c.duration_s >= 30;
    row[3] = static_cast<double>(c.call_date.serial() - prev.serial()) / cfg.short_input_days;
    row[4] = c.message_id / 141.0;
  }
  return o;
}

std::map<std::string, std::vector<CallRecord>> by_id(std::span<const CallRecord> calls) {
  std::map<std::string, std::vector<CallRecord>> m;
  for (const auto& c : calls) m[c.beneficiary_id].push_back(c);
  return m;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("aggregate features") {
  const Date end = day0().plus_days(28);
  auto empty = aggregate_features({}, end, 28);
  CHECK(empty == AggregateFeatures{0, 0, 0, 29, 29, 29});
  std::vector<CallRecord> one{call(1, end.plus_days(-3), 45, true)};
  CHECK(aggregate_features(one, end, 28) == AggregateFeatures{1, 1, 1, 3, 3, 3});

  Rng rng(17);
  std::uniform_int_distribution<int> d(0, 27), dur(0, 60);
  std::bernoulli_distribution conn(0.5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<CallRecord> calls;
    for (int i = 0; i < 8; ++i) {
      bool c = conn(rng);
      calls.push_back(call(i + 1, day0().plus_days(d(rng)), c ? dur(rng) : 0, c));
    }
    std::sort(calls.begin(), calls.end(), [](auto& a, auto& b) { return a.call_date < b.call_date; });
    auto f = aggregate_features(calls, end, 28);
    CHECK(f == aggregate_oracle(calls, end, 28));
    CHECK(f.n_engagements <= f.n_connections);
    CHECK(f.n_connections <= f.n_attempts);
  }
}

TEST_CASE("sequence features") {
  auto none = sequence_features({}, day0(), 28, 8);
  CHECK(none.seq_len == 0);
  CHECK(std::all_of(none.values.begin(), none.values.end(), [](double v) { return v == 0.0; }));

  auto three = regular_log(3, 2, 40, true);
  auto s = sequence_features(three, day0(), 28, 8);
  CHECK(s.seq_len == 3);
  CHECK(s.values[0] == doctest::Approx(40.0 / 300.0));
  CHECK(s.values[1] == 1.0);
  CHECK(s.values[2] == 1.0);
  CHECK(s.values[3] == 0.0);
  CHECK(s.values[kPerCallFeatures + 3] == doctest::Approx(2.0 / 28.0));
  CHECK(s.values[4] == doctest::Approx(1.0 / 141.0));
  for (std::size_t i = 3 * kPerCallFeatures; i < s.values.size(); ++i) CHECK(s.values[i] == 0.0);

  auto twenty = regular_log(20, 3, 400, true);
  auto t = sequence_features(twenty, day0(), 60, 18);
  CHECK(t.seq_len == 18);
  CHECK(t.values[0] == 1.0);
  CHECK(t.values[4] == doctest::Approx(3.0 / 141.0));
  CHECK(t.values[17 * kPerCallFeatures + 4] == doctest::Approx(20.0 / 141.0));
}

TEST_CASE("static encoding") {
  ProfileSchema schema;
  StaticLayout layout(schema);
  CHECK(layout.demographic_width() == 2 + 8 + 9 + 7 + 4 + 4);
  CHECK(layout.width() == layout.demographic_width() + 6);
  CHECK(static_cast<int>(layout.slot_names().size()) == layout.width());

  auto p = profile();
  AggregateFeatures agg{2, 1, 0, 3, 5, 29};
  auto x = encode_static(p, agg, schema, 28, 8);
  CHECK(static_cast<int>(x.size()) == layout.width());
  CHECK(x == encode_static(profile(), agg, schema, 28, 8));

  p.age_years = schema.min_age;
  CHECK(encode_static(p, agg, schema, 28, 8)[0] == 0.0);
  p.age_years = schema.max_age;
  CHECK(encode_static(p, agg, schema, 28, 8)[0] == 1.0);

  p.language = "tamil";
  auto names = layout.slot_names();
  auto y = encode_static(p, agg, schema, 28, 8);
  auto other = std::find(names.begin(), names.end(), "language=other") - names.begin();
  CHECK(y[static_cast<std::size_t>(other)] == 1.0);
  double ones = 0;
  for (int i = 2; i < layout.demographic_width(); ++i) ones += y[static_cast<std::size_t>(i)];
  CHECK(ones == 5.0);
  CHECK(x[static_cast<std::size_t>(layout.width() - 1)] == doctest::Approx(1.0));
}

TEST_CASE("short-term label examples") {
  PipelineConfig cfg;
  Rng rng(2);
  auto engaged = regular_log(40, 3, 60, true);
  auto silent = regular_log(40, 3, 0, false);
  for (int i = 0; i < 50; ++i) {
    auto a = sample_short_term(engaged, profile(), rng, cfg);
    REQUIRE(a);
    CHECK(a->label == 0);
    auto b = sample_short_term(silent, profile(), rng, cfg);
    REQUIRE(b);
    CHECK(b->label == 1);
  }
  auto shortlog = regular_log(5, 3, 60, true);
  CHECK_FALSE(sample_short_term(shortlog, profile(), rng, cfg));
  CHECK_FALSE(sample_short_term({}, profile(), rng, cfg));
}

TEST_CASE("short-term samples match the span oracle") {
  PipelineConfig cfg;
  synth::PopulationConfig pc;
  pc.n_beneficiaries = 40;
  pc.horizon_weeks = 20;
  pc.seed = 6;
  auto pop = synth::generate(pc);
  auto calls = dedup_best_outcome(pop.calls);
  auto groups = by_id(calls);
  Rng rng(99);
  for (const auto& p : pop.profiles) {
    const auto& mine = groups[p.beneficiary_id];
    const Date first = mine.front().call_date, last = mine.back().call_date;
    const int starts = days_between(first, last) + 1 - 42;
    REQUIRE(starts >= 0);
    std::vector<SpanOracle> oracles;
    for (int s = 0; s <= starts; ++s) oracles.push_back(span_oracle(mine, p, first.plus_days(s), cfg));
    for (int draw = 0; draw < 5; ++draw) {
      auto got = sample_short_term(mine, p, rng, cfg);
      REQUIRE(got);
      bool matched = std::any_of(oracles.begin(), oracles.end(), [&](const SpanOracle& o) {
        return o.static_x == got->static_x && o.seq_x == got->seq_x && o.seq_len == got->seq_len &&
               o.label == got->label;
      });
      CHECK(matched);
    }
  }
}

TEST_CASE("long-term label examples") {
  RatioLabelConfig waived{0.5, 1, 0};
  std::vector<CallRecord> calls;
  for (int i = 0; i < 15; ++i) calls.push_back(call(i + 1, day0().plus_days(i), i < 5 ? 40 : 10, true));
  auto r = label_long_term_engagement(calls, 12, waived);
  REQUIRE(r.label);
  CHECK(*r.label == RiskLabel::high_risk);

  RatioLabelConfig eng{0.5, 24, 8};
  auto make = [&](int engaged, int connected, int failed) {
    std::vector<CallRecord> v;
    int m = 1;
    for (int i = 0; i < connected; ++i) v.push_back(call(m++, day0(), i < engaged ? 45 : 5, true));
    for (int i = 0; i < failed; ++i) v.push_back(call(m++, day0(), 0, false));
    return v;
  };
  CHECK(*label_long_term_engagement(make(24, 24, 0), 9, eng).label == RiskLabel::low_risk);
  CHECK(*label_long_term_engagement(make(12, 24, 0), 9, eng).label == RiskLabel::low_risk);
  CHECK(*label_long_term_engagement(make(11, 24, 0), 9, eng).label == RiskLabel::high_risk);
  CHECK(label_long_term_engagement(make(12, 23, 30), 9, eng).reason == Ineligibility::few_events);
  CHECK(label_long_term_engagement(make(24, 24, 0), 7, eng).reason == Ineligibility::short_history);

  RatioLabelConfig con{0.25, 24, 8};
  CHECK(*label_long_term_connection(make(0, 5, 19), 9, con).label == RiskLabel::high_risk);
  CHECK(*label_long_term_connection(make(0, 6, 18), 9, con).label == RiskLabel::low_risk);
  auto few = label_long_term_connection(make(0, 6, 17), 9, con);
  CHECK_FALSE(few.label);
  CHECK(few.reason == Ineligibility::few_events);
  CHECK(few.denominator == 23);
}

TEST_CASE("long-term labels match the definition-scan oracle") {
  for (std::uint64_t seed : {1, 2}) {
    Rng rng(seed);
    auto cohort = testing::random_cohort(rng, 250);
    auto calls = dedup_best_outcome(cohort.raw_calls);
    auto raw = by_id(cohort.raw_calls);
    PipelineConfig cfg;
    cfg.observation_end = cohort.observation_end;
    for (auto task : {Task::long_engagement, Task::long_connection}) {
      auto ds = build_dataset(calls, cohort.profiles, task, cfg, 1);
      std::map<std::string, int> got;
      for (const auto& s : ds.samples) got[s.beneficiary_id] = s.label;
      int eligible = 0;
      for (const auto& p : cohort.profiles) {
        auto o = testing::long_term_label_oracle(raw[p.beneficiary_id], *p.registration_date,
                                                 cohort.observation_end, task == Task::long_engagement);
        CAPTURE(p.beneficiary_id);
        CHECK(o.eligible == (got.count(p.beneficiary_id) == 1));
        if (o.eligible && got.count(p.beneficiary_id)) CHECK(o.label == got[p.beneficiary_id]);
        eligible += o.eligible;
      }
      CHECK(eligible > 30);
      CHECK(ds.counts.high_risk > 0);
      CHECK(ds.counts.low_risk > 0);
    }
  }
}

TEST_CASE("long-term labels are invariant to a uniform time shift") {
  Rng rng(44);
  std::uniform_int_distribution<int> shift(-900, 900);
  for (int trial = 0; trial < 200; ++trial) {
    auto cohort = testing::random_cohort(rng, 1);
    auto p = std::get<BeneficiaryProfile>(validate_profile(cohort.profiles[0]));
    auto calls = dedup_best_outcome(cohort.raw_calls);
    const Date end = p.registration_date.plus_days(300);
    const int k = shift(rng);
    auto moved = calls;
    for (auto& c : moved) c.call_date = c.call_date.plus_days(k);
    auto q = p;
    q.registration_date = p.registration_date.plus_days(k);
    PipelineConfig cfg;
    for (auto task : {Task::long_engagement, Task::long_connection}) {
      auto a = sample_long_term(calls, p, task, end, cfg);
      auto b = sample_long_term(moved, q, task, end.plus_days(k), cfg);
      REQUIRE(a.sample.has_value() == b.sample.has_value());
      if (a.sample) {
        CHECK(a.sample->label == b.sample->label);
        CHECK(a.sample->static_x == b.sample->static_x);
        CHECK(a.sample->seq_x == b.sample->seq_x);
      }
    }
  }
}

TEST_CASE("longer calls only lower engagement risk") {
  Rng rng(45);
  PipelineConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    auto cohort = testing::random_cohort(rng, 1);
    auto p = std::get<BeneficiaryProfile>(validate_profile(cohort.profiles[0]));
    auto calls = dedup_best_outcome(cohort.raw_calls);
    auto raised = calls;
    for (auto& c : raised)
      if (c.connected) c.duration_s = std::max(c.duration_s, 30);
    const Date end = p.registration_date.plus_days(300);
    auto a = sample_long_term(calls, p, Task::long_engagement, end, cfg);
    auto b = sample_long_term(raised, p, Task::long_engagement, end, cfg);
    REQUIRE(a.sample.has_value() == b.sample.has_value());
    if (a.sample) CHECK(b.sample->label <= a.sample->label);
    if (calls.back().call_date.serial() - calls.front().call_date.serial() >= 42) {
      Rng r1(trial), r2(trial);
      auto s = sample_short_term(calls, p, r1, cfg);
      auto t = sample_short_term(raised, p, r2, cfg);
      REQUIRE(s);
      REQUIRE(t);
      CHECK(t->label <= s->label);
    }
  }
}

TEST_CASE("pipeline labels recover generator ground truth") {
  for (std::uint64_t seed : {1, 2, 3}) {
    synth::PopulationConfig pc;
    pc.n_beneficiaries = 600;
    pc.horizon_weeks = 52;
    pc.seed = seed;
    auto pop = synth::generate(pc);
    auto calls = dedup_best_outcome(pop.calls);
    std::vector<ProfileCandidate> profiles;
    for (const auto& p : pop.profiles) profiles.push_back(ProfileCandidate::from(p));
    std::map<std::string, synth::LatentTraits> traits;
    for (const auto& t : pop.traits) traits[t.beneficiary_id] = t;
    for (auto task : {Task::long_engagement, Task::long_connection}) {
      auto ds = build_dataset(calls, profiles, task, {}, seed);
      int agree = 0;
      for (const auto& s : ds.samples)
        agree += s.label == static_cast<int>(synth::ground_truth_label(traits[s.beneficiary_id], task));
      CAPTURE(to_string(task));
      CHECK(static_cast<double>(agree) / ds.samples.size() >= 0.95);
    }
  }
}

TEST_CASE("dataset construction") {
  synth::PopulationConfig pc;
  pc.n_beneficiaries = 150;
  pc.horizon_weeks = 40;
  pc.seed = 12;
  auto pop = synth::generate(pc);
  auto calls = dedup_best_outcome(pop.calls);
  std::vector<ProfileCandidate> profiles;
  for (const auto& p : pop.profiles) profiles.push_back(ProfileCandidate::from(p));
  profiles[0].income_group.reset();
  profiles.pop_back();
  PipelineConfig cfg;
  cfg.short_draws = 3;

  auto a = build_dataset(calls, profiles, Task::short_term, cfg, 5, Exec::parallel);
  auto b = build_dataset(calls, profiles, Task::short_term, cfg, 5, Exec::serial);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].beneficiary_id == b.samples[i].beneficiary_id);
    CHECK(a.samples[i].static_x == b.samples[i].static_x);
    CHECK(a.samples[i].seq_x == b.samples[i].seq_x);
    CHECK(a.samples[i].label == b.samples[i].label);
  }
  CHECK(a.exclusions["invalid_profile"] == 1);
  CHECK(a.exclusions["no_profile"] == 1);
  CHECK(a.samples.size() == 3 * 148);
  CHECK(PipelineConfig{}.short_draws == 10);
  CHECK(a.samples[1].draw == 1);
  for (const auto& s : a.samples) {
    CHECK(s.seq_len <= 8);
    for (std::size_t i = static_cast<std::size_t>(s.seq_len) * kPerCallFeatures; i < s.seq_x.size(); ++i)
      CHECK(s.seq_x[i] == 0.0);
  }
  auto c = build_dataset(calls, profiles, Task::short_term, cfg, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) differs = differs || a.samples[i].seq_x != c.samples[i].seq_x;
  CHECK(differs);

  SUBCASE("round trip through samples.jsonl") {
    std::stringstream ss;
    write_samples(ss, a, {{"command", "test"}});
    auto back = read_samples(ss);
    CHECK(back.task == a.task);
    CHECK(back.static_width == a.static_width);
    REQUIRE(back.samples.size() == a.samples.size());
    CHECK(back.samples[7].seq_x == a.samples[7].seq_x);
    CHECK(back.samples[7].static_x == a.samples[7].static_x);
    CHECK(back.counts.high_risk == a.counts.high_risk);
  }
  SUBCASE("unsorted calls are rejected") {
    auto shuffled = calls;
    std::swap(shuffled.front(), shuffled.back());
    CHECK_THROWS_AS(build_dataset(shuffled, profiles, Task::short_term, cfg, 5), Error);
  }
  SUBCASE("no eligible beneficiaries") {
    try {
      build_dataset({}, profiles, Task::short_term, cfg, 5);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("no eligible beneficiaries") != std::string::npos);
    }
  }
}

TEST_CASE("certain engagement gives an all-low-risk long-term dataset") {
  synth::PopulationConfig pc;
  pc.n_beneficiaries = 80;
  pc.horizon_weeks = 52;
  pc.propensity.high_engage_rate = 1.0;
  pc.propensity.engage_coupling = 0.0;
  pc.propensity.engage_high = {1e6, 1e-3};
  auto pop = synth::generate(pc);
  std::vector<ProfileCandidate> profiles;
  for (const auto& p : pop.profiles) profiles.push_back(ProfileCandidate::from(p));
  auto ds = build_dataset(dedup_best_outcome(pop.calls), profiles, Task::long_engagement, {}, 1);
  CHECK(ds.counts.high_risk == 0);
  CHECK(ds.counts.low_risk > 0);
}

}
