#include "dropcast/call_data.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "dropcast/error.hpp"
#include "dropcast/task.hpp"

namespace dropcast {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::short_term: return "short";
    case Task::long_engagement: return "long-engagement";
    case Task::long_connection: return "long-connection";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view name) {
  if (name == "short" || name == "short_term" || name == "short-term") return Task::short_term;
  if (name == "long-engagement" || name == "long_engagement") return Task::long_engagement;
  if (name == "long-connection" || name == "long_connection") return Task::long_connection;
  return std::nullopt;
}

CallOutcome classify(const CallRecord& record, int engagement_threshold_s) {
  if (!record.connected) return CallOutcome::FailedAttempt;
  return record.duration_s >= engagement_threshold_s ? CallOutcome::Engagement : CallOutcome::Connection;
}

std::string_view to_string(PhoneOwner owner) {
  switch (owner) {
    case PhoneOwner::self: return "self";
    case PhoneOwner::husband: return "husband";
    case PhoneOwner::family: return "family";
    case PhoneOwner::other: return "other";
  }
  return "other";
}

std::optional<PhoneOwner> parse_phone_owner(std::string_view text) {
  if (text == "self") return PhoneOwner::self;
  if (text == "husband") return PhoneOwner::husband;
  if (text == "family") return PhoneOwner::family;
  if (text == "other") return PhoneOwner::other;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const ProfileSchema& s) {
  j = nlohmann::json{{"education_levels", s.education_levels},
                     {"income_levels", s.income_levels},
                     {"call_slots", s.call_slots},
                     {"languages", s.languages},
                     {"min_age", s.min_age},
                     {"max_age", s.max_age},
                     {"min_gestation_weeks", s.min_gestation_weeks},
                     {"max_gestation_weeks", s.max_gestation_weeks},
                     {"engagement_threshold_s", s.engagement_threshold_s}};
}

void from_json(const nlohmann::json& j, ProfileSchema& s) {
  s.education_levels = j.value("education_levels", s.education_levels);
  s.income_levels = j.value("income_levels", s.income_levels);
  s.call_slots = j.value("call_slots", s.call_slots);
  s.languages = j.value("languages", s.languages);
  s.min_age = j.value("min_age", s.min_age);
  s.max_age = j.value("max_age", s.max_age);
  s.min_gestation_weeks = j.value("min_gestation_weeks", s.min_gestation_weeks);
  s.max_gestation_weeks = j.value("max_gestation_weeks", s.max_gestation_weeks);
  s.engagement_threshold_s = j.value("engagement_threshold_s", s.engagement_threshold_s);
  if (s.education_levels < 1 || s.income_levels < 1 || s.call_slots < 1 || s.languages.empty())
    throw Error("schema category counts must be positive");
}

ProfileCandidate ProfileCandidate::from(const BeneficiaryProfile& p) {
  return ProfileCandidate{p.beneficiary_id,      p.age_years,  p.education_level, p.income_group,
                          p.registration_date,   p.gestation_age_weeks, p.call_slot, p.language,
                          p.phone_owner};
}

std::variant<BeneficiaryProfile, Rejection> validate_profile(const ProfileCandidate& c,
                                                             const ProfileSchema& schema) {
  auto absent = [](const char* field) { return Rejection{field, std::string(field) + " absent"}; };
  if (c.beneficiary_id.empty()) return absent("beneficiary_id");
  if (!c.age_years) return absent("age_years");
  if (!c.education_level) return absent("education_level");
  if (!c.income_group) return absent("income_group");
  if (!c.registration_date) return absent("registration_date");
  if (!c.gestation_age_weeks) return absent("gestation_age_weeks");
  if (!c.call_slot) return absent("call_slot");
  if (!c.language || c.language->empty()) return absent("language");
  if (!c.phone_owner) return absent("phone_owner");

  if (*c.age_years < schema.min_age || *c.age_years > schema.max_age)
    return Rejection{"age_years", "age out of range"};
  if (*c.gestation_age_weeks < schema.min_gestation_weeks ||
      *c.gestation_age_weeks > schema.max_gestation_weeks)
    return Rejection{"gestation_age_weeks", "gestation weeks out of range"};
  if (*c.education_level < 1 || *c.education_level > schema.education_levels)
    return Rejection{"education_level", "education level out of range"};
  if (*c.income_group < 1 || *c.income_group > schema.income_levels)
    return Rejection{"income_group", "income group out of range"};
  if (*c.call_slot < 1 || *c.call_slot > schema.call_slots)
    return Rejection{"call_slot", "call slot out of range"};

  return BeneficiaryProfile{c.beneficiary_id, *c.age_years,         *c.education_level,
                            *c.income_group,  *c.registration_date, *c.gestation_age_weeks,
                            *c.call_slot,     *c.language,          *c.phone_owner};
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Reads the header line; returns false for a completely empty stream.
bool expect_header(std::istream& in, std::string_view expected) {
  if (!in.good() && !in.eof()) throw Error("unreadable input stream");
  std::string header;
  if (!std::getline(in, header)) {
    if (in.bad()) throw Error("unreadable input stream");
    return false;
  }
  strip_cr(header);
  if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.erase(0, 3);
  if (header != expected) throw Error("unexpected header: '" + header + "', expected '" + std::string(expected) + "'");
  return true;
}

}  // namespace

ParseResult<CallRecord> parse_call_log(std::istream& in) {
  ParseResult<CallRecord> result;
  if (!expect_header(in, kCallsHeader)) return result;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    auto fail = [&](std::string reason) { result.errors.push_back({line_no, std::move(reason)}); };
    if (fields.size() != 5) {
      fail("expected 5 fields, got " + std::to_string(fields.size()));
      continue;
    }
    if (fields[0].empty()) { fail("beneficiary_id absent"); continue; }
    auto msg = parse_int(fields[1]);
    if (!msg) { fail("message_id not an integer"); continue; }
    if (*msg < kMinMessageId || *msg > kMaxMessageId) { fail("message_id out of range"); continue; }
    auto date = Date::parse(fields[2]);
    if (!date) { fail("call_date not an ISO date"); continue; }
    auto duration = parse_int(fields[3]);
    if (!duration || *duration < 0) { fail("duration_s not a non-negative integer"); continue; }
    if (fields[4] != "0" && fields[4] != "1") { fail("connected must be 0 or 1"); continue; }
    bool connected = fields[4] == "1";
    if (*duration > 0 && !connected) { fail("duration without connection"); continue; }
    result.rows.push_back(CallRecord{std::string(fields[0]), *msg, *date, *duration, connected});
  }
  if (in.bad()) throw Error("read error on call log stream");
  return result;
}

ParseResult<ProfileCandidate> parse_beneficiaries(std::istream& in) {
  ParseResult<ProfileCandidate> result;
  if (!expect_header(in, kBeneficiariesHeader)) return result;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 9) {
      result.errors.push_back({line_no, "expected 9 fields, got " + std::to_string(f.size())});
      continue;
    }
    if (f[0].empty()) {
      result.errors.push_back({line_no, "beneficiary_id absent"});
      continue;
    }
    // Values that are present but unparseable are reported and the field is
    // left absent, so validation later rejects the profile.
    auto int_field = [&](std::string_view text, const char* name) -> std::optional<int> {
      if (text.empty()) return std::nullopt;
      auto v = parse_int(text);
      if (!v) result.errors.push_back({line_no, std::string("bad value for ") + name});
      return v;
    };
    ProfileCandidate c;
    c.beneficiary_id = std::string(f[0]);
    c.age_years = int_field(f[1], "age");
    c.education_level = int_field(f[2], "education");
    c.income_group = int_field(f[3], "income");
    if (!f[4].empty()) {
      c.registration_date = Date::parse(f[4]);
      if (!c.registration_date) result.errors.push_back({line_no, "bad value for registration_date"});
    }
    c.gestation_age_weeks = int_field(f[5], "gestation_weeks");
    c.call_slot = int_field(f[6], "call_slot");
    if (!f[7].empty()) c.language = std::string(f[7]);
    if (!f[8].empty()) {
      c.phone_owner = parse_phone_owner(f[8]);
      if (!c.phone_owner) result.errors.push_back({line_no, "bad value for phone_owner"});
    }
    result.rows.push_back(std::move(c));
  }
  if (in.bad()) throw Error("read error on beneficiaries stream");
  return result;
}

void write_call_log(std::ostream& out, std::span<const CallRecord> records) {
  out << kCallsHeader << '\n';
  for (const auto& r : records) {
    out << r.beneficiary_id << ',' << r.message_id << ',' << r.call_date.iso() << ',' << r.duration_s
        << ',' << (r.connected ? 1 : 0) << '\n';
  }
}

void write_beneficiaries(std::ostream& out, std::span<const BeneficiaryProfile> profiles) {
  out << kBeneficiariesHeader << '\n';
  for (const auto& p : profiles) {
    out << p.beneficiary_id << ',' << p.age_years << ',' << p.education_level << ',' << p.income_group
        << ',' << p.registration_date.iso() << ',' << p.gestation_age_weeks << ',' << p.call_slot << ','
        << p.language << ',' << to_string(p.phone_owner) << '\n';
  }
}

std::vector<CallRecord> dedup_best_outcome(std::span<const CallRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Within a (beneficiary, message) group the first element after this sort
  // is the winner: longest duration, then earliest date, then input order.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    if (int c = ra.beneficiary_id.compare(rb.beneficiary_id); c != 0) return c < 0;
    if (ra.message_id != rb.message_id) return ra.message_id < rb.message_id;
    if (ra.duration_s != rb.duration_s) return ra.duration_s > rb.duration_s;
    if (ra.call_date != rb.call_date) return ra.call_date < rb.call_date;
    return a < b;
  });
  std::vector<CallRecord> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = records[order[i]];
    if (!out.empty() && out.back().beneficiary_id == r.beneficiary_id && out.back().message_id == r.message_id)
      continue;
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
    if (int c = a.beneficiary_id.compare(b.beneficiary_id); c != 0) return c < 0;
    if (a.call_date != b.call_date) return a.call_date < b.call_date;
    return a.message_id < b.message_id;
  });
  return out;
}

std::vector<BeneficiaryCalls> group_by_beneficiary(std::span<const CallRecord> sorted_records) {
  std::vector<BeneficiaryCalls> groups;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= sorted_records.size(); ++i) {
    if (i == sorted_records.size() || sorted_records[i].beneficiary_id != sorted_records[start].beneficiary_id) {
      groups.push_back({sorted_records[start].beneficiary_id, sorted_records.subspan(start, i - start)});
      start = i;
    }
  }
  return groups;
}

}  // namespace dropcast
