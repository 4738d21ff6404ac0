#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropcast/call_data.hpp"
#include "dropcast/exec.hpp"
#include "dropcast/task.hpp"

namespace dropcast::synth {

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};

// Per-beneficiary (p_connect, p_engage) distribution. Each beneficiary
// belongs to a high or low mode on each axis; membership is
// logistic in a demographic score, with one slope per axis.
struct PropensityPrior {
  enum class Kind {
    separated_modes,  // two Beta modes per axis, far apart
    uniform_mixture,  // high mode U(threshold, 1), low mode U(0, threshold)
  };
  Kind kind = Kind::separated_modes;
  double high_engage_rate = 0.6;
  double high_connect_rate = 0.7;
  BetaPrior engage_high{18.0, 2.0};
  BetaPrior engage_low{1.0, 40.0};
  BetaPrior connect_high{17.0, 3.0};
  BetaPrior connect_low{1.0, 60.0};
  double engage_coupling = 5.0;
  double connect_coupling = 3.0;
  // Probability that a beneficiary drops out at some week in the first half
  // of the horizon; afterwards p_engage halves every week.
  double dropout_rate = 0.0;
};

// Sampling weights per category; empty means uniform.
struct DemographicMixture {
  std::vector<double> education;
  std::vector<double> income;
  std::vector<double> call_slot;
  std::vector<double> language;
  std::vector<double> phone_owner;  // self, husband, family, other
  int age_min = 16;
  int age_max = 40;
  int gestation_min = 4;
  int gestation_max = 36;
};

struct PopulationConfig {
  int n_beneficiaries = 1000;
  int horizon_weeks = 26;
  int calls_per_week = 2;
  int max_retries = 2;
  double p_network_fail = 0.05;
  PropensityPrior propensity;
  DemographicMixture demographics;
  ProfileSchema schema;
  Date start_date = Date::from_ymd(2018, 1, 1);
  int registration_spread_days = 28;
  std::uint64_t seed = 1;
};

// Throws Error describing the first violated constraint.
void validate(const PopulationConfig& config);

struct LatentTraits {
  std::string beneficiary_id;
  double p_connect = 0.0;
  double p_engage = 0.0;
  std::optional<int> dropout_week;
};

struct Population {
  std::vector<BeneficiaryProfile> profiles;
  std::vector<CallRecord> calls;  // raw rows incl. retries, grouped by beneficiary
  std::vector<LatentTraits> traits;
};

// Deterministic in config.seed; every beneficiary draws from its own
// sub-seeded stream, so the serial and parallel paths agree exactly.
Population generate(const PopulationConfig& config, Exec exec = Exec::parallel);

// Day offset (from registration) of the k-th scheduled message.
int message_day(int k, int calls_per_week);
// First message id for a beneficiary; later messages increment it.
int first_message_id(int gestation_weeks);
// Effective p_engage during a given week (0-based from registration).
double engage_probability(const LatentTraits& traits, int week);
// Probability that one scheduled message ends up connected after retries.
double message_connect_probability(double p_connect, double p_network_fail, int max_retries);

inline constexpr double kEngagementRiskThreshold = 0.5;
inline constexpr double kConnectionRiskThreshold = 0.25;

// Label implied by latent propensities. Long-term engagement: high iff
// p_engage < 0.5 or the beneficiary drops out. Long-term connection: high
// iff p_connect < 0.25. Short-term: high iff zero engagements over the
// four messages of a two-week period is at least as likely as not.
RiskLabel ground_truth_label(const LatentTraits& traits, Task task, double p_network_fail = 0.0,
                             int max_retries = 0);

std::string beneficiary_id(int index, int n_beneficiaries);

void write_latent_traits(std::ostream& out, std::span<const LatentTraits> traits);

void to_json(nlohmann::json& j, const PopulationConfig& c);
void from_json(const nlohmann::json& j, PopulationConfig& c);

}  // namespace dropcast::synth
