#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dropcast/call_data.hpp"
#include "dropcast/exec.hpp"
#include "dropcast/rng.hpp"
#include "dropcast/task.hpp"

namespace dropcast::pipeline {

// Per-call row: [duration/300 clipped to 1, connected, engaged,
// days since previous attempt / window length, message_id / 141].
inline constexpr int kPerCallFeatures = 5;
inline constexpr int kAggregateFeatures = 6;
inline constexpr double kDurationScale = 300.0;

struct AggregateFeatures {
  int n_attempts = 0;
  int n_connections = 0;
  int n_engagements = 0;
  int days_since_last_attempt = 0;
  int days_since_last_connection = 0;
  int days_since_last_engagement = 0;

  bool operator==(const AggregateFeatures&) const = default;
};

// `window_calls` must lie in [window_end - window_days, window_end). Gaps
// are whole days from the latest qualifying call to window_end; a missing
// event kind gets the sentinel window_days + 1.
AggregateFeatures aggregate_features(std::span<const CallRecord> window_calls, Date window_end, int window_days,
                                     int engagement_threshold_s = kEngagementSeconds);

struct SequenceFeatures {
  int max_len = 0;
  int seq_len = 0;
  std::vector<double> values;  // row-major [max_len x kPerCallFeatures], zero padded
};

// Keeps the most recent `max_len` calls when the window holds more.
SequenceFeatures sequence_features(std::span<const CallRecord> window_calls, Date window_start, int window_days,
                                   int max_len, int engagement_threshold_s = kEngagementSeconds);

// Static vector layout, in order:
//   age (1), gestation weeks (1), education (levels + other),
//   income (levels + other), call slot (slots + other),
//   language (languages + other), phone owner (4),
//   then the six aggregates: attempts, connections, engagements,
//   days since last attempt / connection / engagement.
// Everything before the aggregates is the demographic block.
class StaticLayout {
 public:
  explicit StaticLayout(const ProfileSchema& schema);

  int demographic_width() const { return demographic_width_; }
  int width() const { return demographic_width_ + kAggregateFeatures; }
  std::vector<std::string> slot_names() const;

 private:
  ProfileSchema schema_;
  int demographic_width_ = 0;
};

// Numerics are min-max scaled: age and gestation by the schema ranges,
// counts by max_len, gaps by window_days + 1. Unknown categories land in
// the "other" slot of their block.
std::vector<double> encode_static(const BeneficiaryProfile& profile, const AggregateFeatures& aggregates,
                                  const ProfileSchema& schema, int window_days, int max_len);

struct WindowSample {
  std::string beneficiary_id;
  Task task = Task::short_term;
  int label = 0;  // 1 = high risk
  int draw = 0;   // short-term span index; 0 for long-term tasks
  int max_len = 0;
  int seq_len = 0;
  std::vector<double> static_x;
  std::vector<double> seq_x;  // [max_len x kPerCallFeatures]
};

struct RatioLabelConfig {
  double risk_threshold = 0.5;
  int min_denominator = 24;
  int min_history_months = 8;
};

enum class Ineligibility { none, short_history, few_events };

struct RatioLabel {
  std::optional<RiskLabel> label;  // empty when ineligible
  Ineligibility reason = Ineligibility::none;
  int numerator = 0;
  int denominator = 0;
};

// Engagements / connections over the prediction period; a ratio equal to
// the threshold is low risk.
RatioLabel label_long_term_engagement(std::span<const CallRecord> prediction_calls, int history_months,
                                      const RatioLabelConfig& cfg,
                                      int engagement_threshold_s = kEngagementSeconds);
// Connections / attempts over the prediction period.
RatioLabel label_long_term_connection(std::span<const CallRecord> prediction_calls, int history_months,
                                      const RatioLabelConfig& cfg);

struct PipelineConfig {
  ProfileSchema schema;
  int short_input_days = 28;
  int short_label_days = 14;
  int short_max_len = 8;
  int short_draws = 10;  // spans per beneficiary; training takes one per epoch, cycling
  int long_input_days = 60;
  int long_max_len = 18;
  RatioLabelConfig engagement{0.5, 24, 8};
  RatioLabelConfig connection{0.25, 24, 8};
  std::optional<Date> observation_end;  // default: last call date in the log
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

struct WindowSpec {
  int input_days = 0;
  int max_len = 0;
};
WindowSpec input_window(Task task, const PipelineConfig& cfg);

// Input features for the window [window_start, window_start + days) of one
// beneficiary. `calls` are that beneficiary's deduplicated records in date
// order; calls outside the window are ignored. label is left 0.
WindowSample build_input_sample(std::span<const CallRecord> calls, const BeneficiaryProfile& profile,
                                Date window_start, WindowSpec window, const ProfileSchema& schema, Task task);

// Uniform random six-week span inside [first call, last call]; the first
// four weeks are input, the label is high risk iff the last two hold no
// engagement. Empty when the history is shorter than the span.
std::optional<WindowSample> sample_short_term(std::span<const CallRecord> calls, const BeneficiaryProfile& profile,
                                              Rng& rng, const PipelineConfig& cfg);

// Long-term sample: input from the first long_input_days after
// registration, label from the rest up to observation_end.
struct LongTermOutcome {
  std::optional<WindowSample> sample;
  Ineligibility reason = Ineligibility::none;
};
LongTermOutcome sample_long_term(std::span<const CallRecord> calls, const BeneficiaryProfile& profile,
                                 Task task, Date observation_end, const PipelineConfig& cfg);

struct ClassCounts {
  int low_risk = 0;
  int high_risk = 0;
};

struct Dataset {
  Task task = Task::short_term;
  int max_len = 0;
  int input_days = 0;
  int static_width = 0;
  int demographic_width = 0;
  ProfileSchema schema;
  std::vector<WindowSample> samples;  // ordered by (beneficiary_id, draw)
  ClassCounts counts;
  std::map<std::string, int> exclusions;
};

// `calls` deduplicated and ordered as dedup_best_outcome returns them.
// Throws Error when no beneficiary is eligible.
Dataset build_dataset(std::span<const CallRecord> calls, std::span<const ProfileCandidate> profiles, Task task,
                      const PipelineConfig& cfg, std::uint64_t seed, Exec exec = Exec::parallel);

}  // namespace dropcast::pipeline
