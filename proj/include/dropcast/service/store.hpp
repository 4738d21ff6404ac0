#pragma once

#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dropcast/call_data.hpp"
#include "dropcast/scoring.hpp"

struct sqlite3;

namespace dropcast::service {

// Single-file SQLite store. Tables:
//   calls(seq INTEGER PK, beneficiary_id, message_id, call_date, duration_s, connected)
//     raw rows in arrival order; deduplicated on read
//   beneficiaries(beneficiary_id PK, age, education, income, registration_date,
//     gestation_weeks, call_slot, language, phone_owner); nullable, latest upload wins
//   scores(id INTEGER PK, beneficiary_id, model_id, probability, risk_band,
//     scored_at, inputs_through)
//   interventions(id INTEGER PK, beneficiary_id, kind, note, created_at)
class Store {
 public:
  explicit Store(const std::filesystem::path& db_path);  // ":memory:" for a private in-memory store
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  struct IngestResult {
    int accepted = 0;
    std::vector<RowError> row_errors;
  };
  // Throws Error on a wrong header; good rows of a file land in one transaction.
  IngestResult ingest_calls(std::istream& csv);
  IngestResult ingest_beneficiaries(std::istream& csv);

  // Raw rows in arrival order, optionally restricted to [from, to).
  std::vector<CallRecord> calls(std::optional<Date> from = std::nullopt, std::optional<Date> to = std::nullopt) const;
  std::vector<CallRecord> calls_for(const std::string& beneficiary_id) const;
  std::vector<ProfileCandidate> profiles() const;
  std::optional<ProfileCandidate> profile(const std::string& beneficiary_id) const;

  void record_scores(const std::string& model_id, const std::string& scored_at,
                     std::span<const scoring::RiskScore> scores);

  struct StoredScore {
    long id = 0;
    std::string beneficiary_id;
    std::string model_id;
    double probability = 0.0;
    std::string risk_band;
    std::string scored_at;
    std::string inputs_through;
  };
  std::vector<StoredScore> score_history(const std::string& beneficiary_id) const;

  enum class Sort { probability_desc, probability_asc, beneficiary_id };
  struct TriageQuery {
    std::optional<std::string> band;
    Sort sort = Sort::probability_desc;
    int page = 1;
    int page_size = 50;
  };
  struct TriageRow {
    StoredScore latest;
    std::optional<std::string> last_engagement_date;
    int interventions_count = 0;
  };
  struct TriagePage {
    long total = 0;
    std::vector<TriageRow> rows;
  };
  // Beneficiaries with at least one score, by their latest score.
  TriagePage triage(const TriageQuery& query) const;

  struct Intervention {
    long id = 0;
    std::string beneficiary_id;
    std::string kind;
    std::string note;
    std::string created_at;
  };
  // Empty when the beneficiary has no profile.
  std::optional<Intervention> add_intervention(const std::string& beneficiary_id, const std::string& kind,
                                               const std::string& note, const std::string& created_at);
  std::vector<Intervention> interventions(const std::string& beneficiary_id) const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mu_;
};

}  // namespace dropcast::service
