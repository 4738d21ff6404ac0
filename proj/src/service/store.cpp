#include "dropcast/service/store.hpp"

#include <sqlite3.h>

#include <istream>

#include "dropcast/error.hpp"

namespace dropcast::service {

namespace {

const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS calls (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  beneficiary_id TEXT NOT NULL,
  message_id INTEGER NOT NULL,
  call_date TEXT NOT NULL,
  duration_s INTEGER NOT NULL,
  connected INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS calls_by_beneficiary ON calls(beneficiary_id);
CREATE INDEX IF NOT EXISTS calls_by_date ON calls(call_date);
CREATE TABLE IF NOT EXISTS beneficiaries (
  beneficiary_id TEXT PRIMARY KEY,
  age INTEGER,
  education INTEGER,
  income INTEGER,
  registration_date TEXT,
  gestation_weeks INTEGER,
  call_slot INTEGER,
  language TEXT,
  phone_owner TEXT
);
CREATE TABLE IF NOT EXISTS scores (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  beneficiary_id TEXT NOT NULL,
  model_id TEXT NOT NULL,
  probability REAL NOT NULL,
  risk_band TEXT NOT NULL,
  scored_at TEXT NOT NULL,
  inputs_through TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS scores_by_beneficiary ON scores(beneficiary_id);
CREATE TABLE IF NOT EXISTS interventions (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  beneficiary_id TEXT NOT NULL,
  kind TEXT NOT NULL,
  note TEXT NOT NULL,
  created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS interventions_by_beneficiary ON interventions(beneficiary_id);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      throw Error(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, long long v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Statement& bind(int i, int v) { return bind(i, static_cast<long long>(v)); }
  Statement& bind(int i, double v) {
    sqlite3_bind_double(stmt_, i, v);
    return *this;
  }
  Statement& bind_null(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }
  template <class T>
  Statement& bind(int i, const std::optional<T>& v) {
    return v ? bind(i, *v) : bind_null(i);
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(std::string("sqlite step failed: ") + sqlite3_errmsg(db_));
  }
  void run() {
    step();
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  long long integer(int c) const { return sqlite3_column_int64(stmt_, c); }
  double real(int c) const { return sqlite3_column_double(stmt_, c); }
  std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }
  std::optional<int> opt_int(int c) const {
    return is_null(c) ? std::nullopt : std::optional<int>(static_cast<int>(integer(c)));
  }
  std::optional<std::string> opt_text(int c) const { return is_null(c) ? std::nullopt : std::optional(text(c)); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec_sql(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error("sqlite: " + msg);
  }
}

class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec_sql(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec_sql(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

CallRecord read_call(const Statement& s, int first) {
  auto date = Date::parse(s.text(first + 2));
  if (!date) throw Error("store holds a malformed call date");
  return CallRecord{s.text(first), static_cast<int>(s.integer(first + 1)), *date,
                    static_cast<int>(s.integer(first + 3)), s.integer(first + 4) != 0};
}

const char* kProfileColumns =
    "beneficiary_id, age, education, income, registration_date, gestation_weeks, call_slot, language, phone_owner";

ProfileCandidate read_profile(const Statement& s) {
  ProfileCandidate p;
  p.beneficiary_id = s.text(0);
  p.age_years = s.opt_int(1);
  p.education_level = s.opt_int(2);
  p.income_group = s.opt_int(3);
  if (auto d = s.opt_text(4)) p.registration_date = Date::parse(*d);
  p.gestation_age_weeks = s.opt_int(5);
  p.call_slot = s.opt_int(6);
  p.language = s.opt_text(7);
  if (auto o = s.opt_text(8)) p.phone_owner = parse_phone_owner(*o);
  return p;
}

Store::StoredScore read_score(const Statement& s, int first) {
  return Store::StoredScore{s.integer(first),     s.text(first + 1), s.text(first + 2), s.real(first + 3),
                            s.text(first + 4),    s.text(first + 5), s.text(first + 6)};
}

}  // namespace

Store::Store(const std::filesystem::path& db_path) {
  if (sqlite3_open(db_path.string().c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error("cannot open store " + db_path.string() + ": " + msg);
  }
  exec_sql(db_, kSchema);
}

Store::~Store() { sqlite3_close(db_); }

Store::IngestResult Store::ingest_calls(std::istream& csv) {
  auto parsed = parse_call_log(csv);
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  Statement ins(db_,
                "INSERT INTO calls (beneficiary_id, message_id, call_date, duration_s, connected) VALUES (?,?,?,?,?)");
  for (const auto& r : parsed.rows)
    ins.bind(1, r.beneficiary_id).bind(2, r.message_id).bind(3, r.call_date.iso()).bind(4, r.duration_s)
        .bind(5, r.connected ? 1 : 0).run();
  tx.commit();
  return {static_cast<int>(parsed.rows.size()), std::move(parsed.errors)};
}

Store::IngestResult Store::ingest_beneficiaries(std::istream& csv) {
  auto parsed = parse_beneficiaries(csv);
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  Statement ins(db_,
                "INSERT OR REPLACE INTO beneficiaries (beneficiary_id, age, education, income, registration_date, "
                "gestation_weeks, call_slot, language, phone_owner) VALUES (?,?,?,?,?,?,?,?,?)");
  for (const auto& p : parsed.rows) {
    std::optional<std::string> reg, owner;
    if (p.registration_date) reg = p.registration_date->iso();
    if (p.phone_owner) owner = std::string(to_string(*p.phone_owner));
    ins.bind(1, p.beneficiary_id).bind(2, p.age_years).bind(3, p.education_level).bind(4, p.income_group)
        .bind(5, reg).bind(6, p.gestation_age_weeks).bind(7, p.call_slot).bind(8, p.language).bind(9, owner).run();
  }
  tx.commit();
  return {static_cast<int>(parsed.rows.size()), std::move(parsed.errors)};
}

std::vector<CallRecord> Store::calls(std::optional<Date> from, std::optional<Date> to) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT beneficiary_id, message_id, call_date, duration_s, connected FROM calls "
              "WHERE (?1 IS NULL OR call_date >= ?1) AND (?2 IS NULL OR call_date < ?2) ORDER BY seq");
  std::optional<std::string> f, t;
  if (from) f = from->iso();
  if (to) t = to->iso();
  q.bind(1, f).bind(2, t);
  std::vector<CallRecord> out;
  while (q.step()) out.push_back(read_call(q, 0));
  return out;
}

std::vector<CallRecord> Store::calls_for(const std::string& beneficiary_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT beneficiary_id, message_id, call_date, duration_s, connected FROM calls "
              "WHERE beneficiary_id = ? ORDER BY seq");
  q.bind(1, beneficiary_id);
  std::vector<CallRecord> out;
  while (q.step()) out.push_back(read_call(q, 0));
  return out;
}

std::vector<ProfileCandidate> Store::profiles() const {
  std::lock_guard lock(mu_);
  Statement q(db_, (std::string("SELECT ") + kProfileColumns + " FROM beneficiaries ORDER BY beneficiary_id").c_str());
  std::vector<ProfileCandidate> out;
  while (q.step()) out.push_back(read_profile(q));
  return out;
}

std::optional<ProfileCandidate> Store::profile(const std::string& beneficiary_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, (std::string("SELECT ") + kProfileColumns + " FROM beneficiaries WHERE beneficiary_id = ?").c_str());
  q.bind(1, beneficiary_id);
  if (!q.step()) return std::nullopt;
  return read_profile(q);
}

void Store::record_scores(const std::string& model_id, const std::string& scored_at,
                          std::span<const scoring::RiskScore> scores) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  Statement ins(db_,
                "INSERT INTO scores (beneficiary_id, model_id, probability, risk_band, scored_at, inputs_through) "
                "VALUES (?,?,?,?,?,?)");
  for (const auto& s : scores)
    ins.bind(1, s.beneficiary_id).bind(2, model_id).bind(3, s.probability).bind(4, s.risk_band).bind(5, scored_at)
        .bind(6, s.inputs_through.iso()).run();
  tx.commit();
}

std::vector<Store::StoredScore> Store::score_history(const std::string& beneficiary_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT id, beneficiary_id, model_id, probability, risk_band, scored_at, inputs_through FROM scores "
              "WHERE beneficiary_id = ? ORDER BY id");
  q.bind(1, beneficiary_id);
  std::vector<StoredScore> out;
  while (q.step()) out.push_back(read_score(q, 0));
  return out;
}

Store::TriagePage Store::triage(const TriageQuery& query) const {
  std::lock_guard lock(mu_);
  const char* order = query.sort == Sort::probability_desc  ? "s.probability DESC, s.beneficiary_id ASC"
                      : query.sort == Sort::probability_asc ? "s.probability ASC, s.beneficiary_id ASC"
                                                            : "s.beneficiary_id ASC";
  const std::string latest =
      "FROM scores s JOIN (SELECT beneficiary_id, MAX(id) AS mid FROM scores GROUP BY beneficiary_id) m "
      "ON s.id = m.mid WHERE (?1 IS NULL OR s.risk_band = ?1) ";
  TriagePage page;
  {
    Statement count(db_, ("SELECT COUNT(*) " + latest).c_str());
    count.bind(1, query.band);
    if (count.step()) page.total = count.integer(0);
  }
  Statement q(db_, ("SELECT s.id, s.beneficiary_id, s.model_id, s.probability, s.risk_band, s.scored_at, "
                    "s.inputs_through, "
                    "(SELECT MAX(call_date) FROM calls c WHERE c.beneficiary_id = s.beneficiary_id AND c.connected = 1 "
                    "AND c.duration_s >= ?2), "
                    "(SELECT COUNT(*) FROM interventions i WHERE i.beneficiary_id = s.beneficiary_id) " +
                    latest + "ORDER BY " + order + " LIMIT ?3 OFFSET ?4")
                       .c_str());
  q.bind(1, query.band).bind(2, kEngagementSeconds).bind(3, query.page_size)
      .bind(4, static_cast<long long>(query.page - 1) * query.page_size);
  while (q.step()) page.rows.push_back(TriageRow{read_score(q, 0), q.opt_text(7), static_cast<int>(q.integer(8))});
  return page;
}

std::optional<Store::Intervention> Store::add_intervention(const std::string& beneficiary_id, const std::string& kind,
                                                           const std::string& note, const std::string& created_at) {
  std::lock_guard lock(mu_);
  Statement exists(db_, "SELECT 1 FROM beneficiaries WHERE beneficiary_id = ?");
  exists.bind(1, beneficiary_id);
  if (!exists.step()) return std::nullopt;
  Statement ins(db_, "INSERT INTO interventions (beneficiary_id, kind, note, created_at) VALUES (?,?,?,?)");
  ins.bind(1, beneficiary_id).bind(2, kind).bind(3, note).bind(4, created_at).run();
  return Intervention{sqlite3_last_insert_rowid(db_), beneficiary_id, kind, note, created_at};
}

std::vector<Store::Intervention> Store::interventions(const std::string& beneficiary_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT id, beneficiary_id, kind, note, created_at FROM interventions WHERE beneficiary_id = ? ORDER BY id");
  q.bind(1, beneficiary_id);
  std::vector<Intervention> out;
  while (q.step()) out.push_back({q.integer(0), q.text(1), q.text(2), q.text(3), q.text(4)});
  return out;
}

}  // namespace dropcast::service
