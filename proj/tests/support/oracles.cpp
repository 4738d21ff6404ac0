#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <unistd.h>

namespace dropcast::testing {

std::vector<CallRecord> brute_force_dedup(std::span<const CallRecord> records) {
  std::vector<CallRecord> out;
  std::vector<bool> done(records.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (done[i]) continue;
    std::size_t best = i;
    for (std::size_t j = i; j < records.size(); ++j) {
      if (records[j].beneficiary_id != records[i].beneficiary_id || records[j].message_id != records[i].message_id)
        continue;
      done[j] = true;
      const auto& b = records[best];
      const auto& c = records[j];
      if (c.duration_s > b.duration_s || (c.duration_s == b.duration_s && c.call_date < b.call_date)) best = j;
    }
    out.push_back(records[best]);
  }
  std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
    return std::tie(a.beneficiary_id, a.call_date, a.message_id) <
           std::tie(b.beneficiary_id, b.call_date, b.message_id);
  });
  return out;
}

double mann_whitney_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return pairs == 0 ? 0.5 : wins / static_cast<double>(pairs);
}

std::vector<CallRecord> random_call_log(Rng& rng, int n_rows, int n_ids, int n_messages, int n_days) {
  std::uniform_int_distribution<int> id(0, n_ids - 1), msg(1, n_messages), day(0, n_days - 1), dur(0, 6);
  std::bernoulli_distribution conn(0.6);
  const Date base = Date::from_ymd(2019, 3, 1);
  std::vector<CallRecord> rows;
  for (int i = 0; i < n_rows; ++i) {
    CallRecord r;
    r.beneficiary_id = "b" + std::to_string(id(rng));
    r.message_id = msg(rng);
    r.call_date = base.plus_days(day(rng));
    r.connected = conn(rng);
    r.duration_s = r.connected ? dur(rng) * 10 : 0;
    rows.push_back(r);
  }
  return rows;
}

int months_oracle(Date from, Date to) {
  using namespace std::chrono;
  if (to < from) return 0;
  year_month_day a{sys_days(days(from.serial()))};
  year_month_day b{sys_days(days(to.serial()))};
  int m = (static_cast<int>(b.year()) - static_cast<int>(a.year())) * 12 +
          (static_cast<int>(static_cast<unsigned>(b.month())) - static_cast<int>(static_cast<unsigned>(a.month())));
  unsigned last = static_cast<unsigned>(year_month_day_last(b.year(), month_day_last(b.month())).day());
  unsigned anchor = std::min(static_cast<unsigned>(a.day()), last);
  if (static_cast<unsigned>(b.day()) < anchor) --m;
  return std::max(m, 0);
}

OracleLabel long_term_label_oracle(std::span<const CallRecord> raw_calls, Date registration, Date observation_end,
                                   bool engagement_task, int input_days) {
  auto kept = brute_force_dedup(raw_calls);
  const Date start = registration.plus_days(input_days);
  int attempts = 0, connections = 0, engagements = 0;
  for (const auto& c : kept) {
    if (c.call_date < start || c.call_date > observation_end) continue;
    ++attempts;
    if (c.connected) ++connections;
    if (c.connected && c.duration_s >= 30) ++engagements;
  }
  OracleLabel out;
  if (months_oracle(registration, observation_end) < 8) return out;
  if (engagement_task) {
    if (connections < 24) return out;
    out.eligible = true;
    out.label = 2 * engagements < connections ? 1 : 0;
  } else {
    if (attempts < 24) return out;
    out.eligible = true;
    out.label = 4 * connections < attempts ? 1 : 0;
  }
  return out;
}

RandomCohort random_cohort(Rng& rng, int n) {
  RandomCohort out;
  out.observation_end = Date::from_ymd(2019, 6, 30);
  std::uniform_int_distribution<int> reg_offset(0, 420), n_msgs(5, 110), gap(1, 5), dur(0, 90);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    ProfileCandidate p;
    p.beneficiary_id = "R" + std::to_string(1000 + i);
    p.age_years = 25;
    p.education_level = 1 + i % 7;
    p.income_group = 1 + i % 8;
    p.registration_date = Date::from_ymd(2018, 1, 1).plus_days(reg_offset(rng));
    p.gestation_age_weeks = 10;
    p.call_slot = 1 + i % 6;
    p.language = "hindi";
    p.phone_owner = PhoneOwner::self;
    const double p_connect = unit(rng), p_engage = unit(rng);
    Date d = *p.registration_date;
    const int messages = n_msgs(rng);
    for (int m = 1; m <= messages; ++m) {
      d = d.plus_days(gap(rng));
      for (int attempt = 0; attempt < 3; ++attempt) {
        CallRecord c{p.beneficiary_id, m, d.plus_days(attempt / 2), 0, false};
        if (unit(rng) < p_connect) {
          c.connected = true;
          c.duration_s = unit(rng) < p_engage ? 30 + dur(rng) : 1 + dur(rng) % 29;
        }
        out.raw_calls.push_back(c);
        if (c.connected && unit(rng) < 0.8) break;
      }
    }
    out.profiles.push_back(std::move(p));
  }
  std::shuffle(out.raw_calls.begin(), out.raw_calls.end(), rng);
  return out;
}

std::filesystem::path make_temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("dropcast_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dropcast::testing
