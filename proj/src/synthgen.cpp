#include "dropcast/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include <json.hpp>

#include "dropcast/error.hpp"
#include "dropcast/rng.hpp"

namespace dropcast::synth {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

double sample_beta(Rng& rng, BetaPrior prior) {
  std::gamma_distribution<double> ga(prior.a, 1.0);
  std::gamma_distribution<double> gb(prior.b, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

int sample_category(Rng& rng, const std::vector<double>& weights, int count) {
  if (weights.empty()) return std::uniform_int_distribution<int>(0, count - 1)(rng);
  std::discrete_distribution<int> d(weights.begin(), weights.end());
  return d(rng);
}

// Standardized position of a uniformly distributed integer in [lo, hi].
double standardize(int value, int lo, int hi) {
  double n = hi - lo + 1;
  double mean = (lo + hi) / 2.0;
  double sd = std::sqrt((n * n - 1.0) / 12.0);
  return sd > 0.0 ? (value - mean) / sd : 0.0;
}

void check_weights(const std::vector<double>& w, std::size_t expected, const char* name) {
  if (w.empty()) return;
  if (w.size() != expected)
    throw Error(std::string("demographics.") + name + " needs " + std::to_string(expected) + " weights");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw Error(std::string("demographics.") + name + " has a negative weight");
    total += x;
  }
  if (total <= 0.0) throw Error(std::string("demographics.") + name + " weights sum to zero");
}

struct BeneficiaryDraw {
  BeneficiaryProfile profile;
  LatentTraits traits;
  std::vector<CallRecord> calls;
};

BeneficiaryDraw draw_beneficiary(const PopulationConfig& cfg, int index) {
  Rng rng = make_rng(cfg.seed, salt::generator, static_cast<std::uint64_t>(index));
  const auto& demo = cfg.demographics;
  const auto& schema = cfg.schema;
  const auto& prior = cfg.propensity;

  BeneficiaryDraw out;
  auto& p = out.profile;
  p.beneficiary_id = beneficiary_id(index, cfg.n_beneficiaries);
  p.age_years = std::uniform_int_distribution<int>(demo.age_min, demo.age_max)(rng);
  p.education_level = 1 + sample_category(rng, demo.education, schema.education_levels);
  p.income_group = 1 + sample_category(rng, demo.income, schema.income_levels);
  p.gestation_age_weeks = std::uniform_int_distribution<int>(demo.gestation_min, demo.gestation_max)(rng);
  p.call_slot = 1 + sample_category(rng, demo.call_slot, schema.call_slots);
  p.language = schema.languages[static_cast<std::size_t>(
      sample_category(rng, demo.language, static_cast<int>(schema.languages.size())))];
  p.phone_owner = static_cast<PhoneOwner>(sample_category(rng, demo.phone_owner, 4));
  p.registration_date =
      cfg.start_date.plus_days(std::uniform_int_distribution<int>(0, cfg.registration_spread_days)(rng));

  // Demographic scores driving mode membership. Engagement follows
  // education, income and age; connection follows phone ownership and slot.
  double z_engage = (standardize(p.education_level, 1, schema.education_levels) +
                     standardize(p.income_group, 1, schema.income_levels) +
                     standardize(p.age_years, demo.age_min, demo.age_max)) /
                    std::sqrt(3.0);
  double owner_term = p.phone_owner == PhoneOwner::self ? 1.0 : p.phone_owner == PhoneOwner::other ? -1.0 : 0.0;
  double z_connect = (owner_term + standardize(p.call_slot, 1, schema.call_slots)) / std::sqrt(1.5);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool engage_high = unit(rng) < sigmoid(logit(prior.high_engage_rate) + prior.engage_coupling * z_engage);
  bool connect_high = unit(rng) < sigmoid(logit(prior.high_connect_rate) + prior.connect_coupling * z_connect);

  auto& t = out.traits;
  t.beneficiary_id = p.beneficiary_id;
  if (prior.kind == PropensityPrior::Kind::separated_modes) {
    t.p_engage = sample_beta(rng, engage_high ? prior.engage_high : prior.engage_low);
    t.p_connect = sample_beta(rng, connect_high ? prior.connect_high : prior.connect_low);
  } else {
    t.p_engage = engage_high ? std::uniform_real_distribution<double>(kEngagementRiskThreshold, 1.0)(rng)
                             : std::uniform_real_distribution<double>(0.0, kEngagementRiskThreshold)(rng);
    t.p_connect = connect_high ? std::uniform_real_distribution<double>(kConnectionRiskThreshold, 1.0)(rng)
                               : std::uniform_real_distribution<double>(0.0, kConnectionRiskThreshold)(rng);
  }
  if (unit(rng) < prior.dropout_rate) {
    t.dropout_week = std::uniform_int_distribution<int>(1, std::max(1, cfg.horizon_weeks / 2))(rng);
  }

  const int horizon_days = cfg.horizon_weeks * 7;
  const double p_call_connects = t.p_connect * (1.0 - cfg.p_network_fail);
  const int first_id = first_message_id(p.gestation_age_weeks);
  std::uniform_int_distribution<int> engaged_duration(kEngagementSeconds, 120);
  std::uniform_int_distribution<int> short_duration(1, kEngagementSeconds - 1);
  for (int k = 0;; ++k) {
    int day = message_day(k, cfg.calls_per_week);
    int message_id = first_id + k;
    if (day >= horizon_days || message_id > kMaxMessageId) break;
    double p_engage_now = engage_probability(t, day / 7);
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      // First retry is same-day, later ones roll over to following days.
      Date date = p.registration_date.plus_days(day + attempt / 2);
      CallRecord r{p.beneficiary_id, message_id, date, 0, false};
      if (unit(rng) < p_call_connects) {
        r.connected = true;
        r.duration_s = unit(rng) < p_engage_now ? engaged_duration(rng) : short_duration(rng);
        out.calls.push_back(std::move(r));
        break;
      }
      out.calls.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

void validate(const PopulationConfig& c) {
  if (c.n_beneficiaries < 1) throw Error("n_beneficiaries must be >= 1");
  if (c.horizon_weeks < 1) throw Error("horizon_weeks must be >= 1");
  if (c.calls_per_week < 1) throw Error("calls_per_week must be >= 1");
  if (c.max_retries < 0) throw Error("max_retries must be >= 0");
  if (!is_probability(c.p_network_fail)) throw Error("p_network_fail must be in [0,1]");
  const auto& p = c.propensity;
  if (!is_probability(p.high_engage_rate) || !is_probability(p.high_connect_rate) ||
      !is_probability(p.dropout_rate))
    throw Error("propensity rates must be in [0,1]");
  for (auto prior : {p.engage_high, p.engage_low, p.connect_high, p.connect_low})
    if (!(prior.a > 0.0) || !(prior.b > 0.0)) throw Error("beta prior parameters must be positive");
  if (c.registration_spread_days < 0) throw Error("registration_spread_days must be >= 0");
  const auto& d = c.demographics;
  if (d.age_min > d.age_max || d.age_min < c.schema.min_age || d.age_max > c.schema.max_age)
    throw Error("demographics age range must lie within the schema range");
  if (d.gestation_min > d.gestation_max || d.gestation_min < c.schema.min_gestation_weeks ||
      d.gestation_max > c.schema.max_gestation_weeks)
    throw Error("demographics gestation range must lie within the schema range");
  if (c.schema.languages.empty()) throw Error("schema.languages must not be empty");
  check_weights(d.education, static_cast<std::size_t>(c.schema.education_levels), "education");
  check_weights(d.income, static_cast<std::size_t>(c.schema.income_levels), "income");
  check_weights(d.call_slot, static_cast<std::size_t>(c.schema.call_slots), "call_slot");
  check_weights(d.language, c.schema.languages.size(), "language");
  check_weights(d.phone_owner, 4, "phone_owner");
}

int message_day(int k, int calls_per_week) { return k * 7 / calls_per_week; }

int first_message_id(int gestation_weeks) { return 1 + std::max(0, gestation_weeks) / 2; }

double engage_probability(const LatentTraits& traits, int week) {
  if (traits.dropout_week && week >= *traits.dropout_week)
    return traits.p_engage * std::pow(0.5, week - *traits.dropout_week + 1);
  return traits.p_engage;
}

double message_connect_probability(double p_connect, double p_network_fail, int max_retries) {
  return 1.0 - std::pow(1.0 - p_connect * (1.0 - p_network_fail), max_retries + 1);
}

RiskLabel ground_truth_label(const LatentTraits& traits, Task task, double p_network_fail, int max_retries) {
  switch (task) {
    case Task::long_engagement:
      return (traits.p_engage < kEngagementRiskThreshold || traits.dropout_week) ? RiskLabel::high_risk
                                                                                  : RiskLabel::low_risk;
    case Task::long_connection:
      return traits.p_connect < kConnectionRiskThreshold ? RiskLabel::high_risk : RiskLabel::low_risk;
    case Task::short_term: {
      double m = message_connect_probability(traits.p_connect, p_network_fail, max_retries) * traits.p_engage;
      return std::pow(1.0 - m, 4) >= 0.5 ? RiskLabel::high_risk : RiskLabel::low_risk;
    }
  }
  return RiskLabel::low_risk;
}

std::string beneficiary_id(int index, int n_beneficiaries) {
  int width = 1;
  for (int n = std::max(1, n_beneficiaries - 1); n >= 10; n /= 10) ++width;
  width = std::max(width, 5);
  char buf[32];
  std::snprintf(buf, sizeof buf, "B%0*d", width, index);
  return buf;
}

Population generate(const PopulationConfig& config, Exec exec) {
  validate(config);
  const int n = config.n_beneficiaries;
  std::vector<BeneficiaryDraw> draws(static_cast<std::size_t>(n));
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i) draws[static_cast<std::size_t>(i)] = draw_beneficiary(config, i);
  } else {
    for (int i = 0; i < n; ++i) draws[static_cast<std::size_t>(i)] = draw_beneficiary(config, i);
  }
  Population pop;
  pop.profiles.reserve(draws.size());
  pop.traits.reserve(draws.size());
  for (auto& d : draws) {
    pop.profiles.push_back(std::move(d.profile));
    pop.traits.push_back(std::move(d.traits));
    pop.calls.insert(pop.calls.end(), std::make_move_iterator(d.calls.begin()),
                     std::make_move_iterator(d.calls.end()));
  }
  return pop;
}

void write_latent_traits(std::ostream& out, std::span<const LatentTraits> traits) {
  out << "beneficiary_id,p_connect,p_engage,dropout_week\n";
  char buf[64];
  for (const auto& t : traits) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", t.p_connect, t.p_engage);
    out << t.beneficiary_id << ',' << buf << ',';
    if (t.dropout_week) out << *t.dropout_week;
    out << '\n';
  }
}

namespace {

const char* kind_name(PropensityPrior::Kind k) {
  return k == PropensityPrior::Kind::separated_modes ? "separated_modes" : "uniform_mixture";
}

void beta_to_json(nlohmann::json& j, const BetaPrior& b) { j = nlohmann::json{{"a", b.a}, {"b", b.b}}; }
BetaPrior beta_from_json(const nlohmann::json& j, BetaPrior fallback) {
  if (!j.is_object()) return fallback;
  return {j.value("a", fallback.a), j.value("b", fallback.b)};
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const PopulationConfig& c) {
  const auto& p = c.propensity;
  nlohmann::json eh, el, ch, cl;
  beta_to_json(eh, p.engage_high);
  beta_to_json(el, p.engage_low);
  beta_to_json(ch, p.connect_high);
  beta_to_json(cl, p.connect_low);
  const auto& d = c.demographics;
  j = nlohmann::json{
      {"n_beneficiaries", c.n_beneficiaries},
      {"horizon_weeks", c.horizon_weeks},
      {"calls_per_week", c.calls_per_week},
      {"max_retries", c.max_retries},
      {"p_network_fail", c.p_network_fail},
      {"start_date", c.start_date.iso()},
      {"registration_spread_days", c.registration_spread_days},
      {"seed", c.seed},
      {"propensity",
       {{"kind", kind_name(p.kind)},
        {"high_engage_rate", p.high_engage_rate},
        {"high_connect_rate", p.high_connect_rate},
        {"engage_high", eh},
        {"engage_low", el},
        {"connect_high", ch},
        {"connect_low", cl},
        {"engage_coupling", p.engage_coupling},
        {"connect_coupling", p.connect_coupling},
        {"dropout_rate", p.dropout_rate}}},
      {"demographics",
       {{"education", d.education},
        {"income", d.income},
        {"call_slot", d.call_slot},
        {"language", d.language},
        {"phone_owner", d.phone_owner},
        {"age_min", d.age_min},
        {"age_max", d.age_max},
        {"gestation_min", d.gestation_min},
        {"gestation_max", d.gestation_max}}},
      {"schema", c.schema},
  };
}

void from_json(const nlohmann::json& j, PopulationConfig& c) {
  read(j, "n_beneficiaries", c.n_beneficiaries);
  read(j, "horizon_weeks", c.horizon_weeks);
  read(j, "calls_per_week", c.calls_per_week);
  read(j, "max_retries", c.max_retries);
  read(j, "p_network_fail", c.p_network_fail);
  read(j, "registration_spread_days", c.registration_spread_days);
  read(j, "seed", c.seed);
  if (j.contains("start_date")) {
    auto d = Date::parse(j.at("start_date").get<std::string>());
    if (!d) throw Error("start_date must be YYYY-MM-DD");
    c.start_date = *d;
  }
  if (j.contains("propensity")) {
    const auto& pj = j.at("propensity");
    auto& p = c.propensity;
    if (pj.contains("kind")) {
      auto kind = pj.at("kind").get<std::string>();
      if (kind == "separated_modes") p.kind = PropensityPrior::Kind::separated_modes;
      else if (kind == "uniform_mixture") p.kind = PropensityPrior::Kind::uniform_mixture;
      else throw Error("unknown propensity kind '" + kind + "'");
    }
    read(pj, "high_engage_rate", p.high_engage_rate);
    read(pj, "high_connect_rate", p.high_connect_rate);
    // "coupling" sets both slopes; the per-axis keys override it.
    if (pj.contains("coupling")) p.engage_coupling = p.connect_coupling = pj.at("coupling").get<double>();
    read(pj, "engage_coupling", p.engage_coupling);
    read(pj, "connect_coupling", p.connect_coupling);
    read(pj, "dropout_rate", p.dropout_rate);
    if (pj.contains("engage_high")) p.engage_high = beta_from_json(pj["engage_high"], p.engage_high);
    if (pj.contains("engage_low")) p.engage_low = beta_from_json(pj["engage_low"], p.engage_low);
    if (pj.contains("connect_high")) p.connect_high = beta_from_json(pj["connect_high"], p.connect_high);
    if (pj.contains("connect_low")) p.connect_low = beta_from_json(pj["connect_low"], p.connect_low);
  }
  if (j.contains("demographics")) {
    const auto& dj = j.at("demographics");
    auto& d = c.demographics;
    read(dj, "education", d.education);
    read(dj, "income", d.income);
    read(dj, "call_slot", d.call_slot);
    read(dj, "language", d.language);
    read(dj, "phone_owner", d.phone_owner);
    read(dj, "age_min", d.age_min);
    read(dj, "age_max", d.age_max);
    read(dj, "gestation_min", d.gestation_min);
    read(dj, "gestation_max", d.gestation_max);
  }
  if (j.contains("schema")) j.at("schema").get_to(c.schema);
}

}  // namespace dropcast::synth
