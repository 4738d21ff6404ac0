#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dropcast/date.hpp"

namespace dropcast {

inline constexpr int kMinMessageId = 1;
inline constexpr int kMaxMessageId = 141;
inline constexpr int kEngagementSeconds = 30;

// One attempted call, after CSV parsing.
struct CallRecord {
  std::string beneficiary_id;
  int message_id = kMinMessageId;
  Date call_date;
  int duration_s = 0;
  bool connected = false;

  bool operator==(const CallRecord&) const = default;
};

enum class CallOutcome { FailedAttempt, Connection, Engagement };

// Engagement iff connected and duration >= threshold; Connection iff
// connected otherwise; FailedAttempt when not connected.
CallOutcome classify(const CallRecord& record, int engagement_threshold_s = kEngagementSeconds);

inline bool is_connection(const CallRecord& r) { return r.connected; }
inline bool is_engagement(const CallRecord& r, int threshold_s = kEngagementSeconds) {
  return classify(r, threshold_s) == CallOutcome::Engagement;
}

enum class PhoneOwner { self, husband, family, other };

std::string_view to_string(PhoneOwner owner);
std::optional<PhoneOwner> parse_phone_owner(std::string_view text);

// Category counts and numeric ranges for registration data. Loaded from
// the `schema` object of a config file; defaults below.
struct ProfileSchema {
  int education_levels = 7;
  int income_levels = 8;
  int call_slots = 6;
  std::vector<std::string> languages{"hindi", "marathi", "gujarati"};
  int min_age = 10;
  int max_age = 70;
  int min_gestation_weeks = 0;
  int max_gestation_weeks = 44;
  int engagement_threshold_s = kEngagementSeconds;
};

void to_json(nlohmann::json& j, const ProfileSchema& s);
void from_json(const nlohmann::json& j, ProfileSchema& s);

struct BeneficiaryProfile {
  std::string beneficiary_id;
  int age_years = 0;
  int education_level = 1;  // 1-based ordinal
  int income_group = 1;     // 1-based ordinal
  Date registration_date;
  int gestation_age_weeks = 0;
  int call_slot = 1;  // 1-based program slot
  std::string language;
  PhoneOwner phone_owner = PhoneOwner::self;

  bool operator==(const BeneficiaryProfile&) const = default;
};

// A beneficiaries.csv row before validation; absent fields are empty.
struct ProfileCandidate {
  std::string beneficiary_id;
  std::optional<int> age_years;
  std::optional<int> education_level;
  std::optional<int> income_group;
  std::optional<Date> registration_date;
  std::optional<int> gestation_age_weeks;
  std::optional<int> call_slot;
  std::optional<std::string> language;
  std::optional<PhoneOwner> phone_owner;

  static ProfileCandidate from(const BeneficiaryProfile& p);
};

struct Rejection {
  std::string field;
  std::string reason;
};

std::variant<BeneficiaryProfile, Rejection> validate_profile(const ProfileCandidate& candidate,
                                                             const ProfileSchema& schema = {});

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

template <class Row>
struct ParseResult {
  std::vector<Row> rows;
  std::vector<RowError> errors;
};

inline constexpr const char* kCallsHeader = "beneficiary_id,message_id,call_date,duration_s,connected";
inline constexpr const char* kBeneficiariesHeader =
    "beneficiary_id,age,education,income,registration_date,gestation_weeks,call_slot,language,phone_owner";

// Throws Error when the stream is unreadable or the header does not match.
// An empty stream (no header at all) is an empty log.
ParseResult<CallRecord> parse_call_log(std::istream& in);
ParseResult<ProfileCandidate> parse_beneficiaries(std::istream& in);

void write_call_log(std::ostream& out, std::span<const CallRecord> records);
void write_beneficiaries(std::ostream& out, std::span<const BeneficiaryProfile> profiles);

// Keeps the best outcome (longest duration) per (beneficiary, message).
// Ties go to the earliest date, then to the earliest input position.
// Output is ordered by (beneficiary_id, call_date, message_id).
std::vector<CallRecord> dedup_best_outcome(std::span<const CallRecord> records);

// Groups a (beneficiary_id-sorted) record sequence into contiguous
// per-beneficiary spans.
struct BeneficiaryCalls {
  std::string_view beneficiary_id;
  std::span<const CallRecord> calls;
};
std::vector<BeneficiaryCalls> group_by_beneficiary(std::span<const CallRecord> sorted_records);

}  // namespace dropcast
