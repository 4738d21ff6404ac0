#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace dropcast {

// Calendar date with day precision.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}

  static Date from_ymd(int year, unsigned month, unsigned day);
  static constexpr Date from_serial(int serial) {
    return Date(std::chrono::sys_days(std::chrono::days(serial)));
  }
  // Strict YYYY-MM-DD.
  static std::optional<Date> parse(std::string_view iso);

  std::string iso() const;
  constexpr int serial() const { return days_.time_since_epoch().count(); }
  constexpr Date plus_days(int n) const { return Date(days_ + std::chrono::days(n)); }
  // Calendar-month addition, clamping to the last day of the target month.
  Date plus_months(int n) const;

  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

// Signed number of days from `from` to `to`.
constexpr int days_between(Date from, Date to) { return to.serial() - from.serial(); }

// Largest m with from.plus_months(m) <= to; 0 when to < from.
int whole_months_between(Date from, Date to);

}  // namespace dropcast
