#include "dropcast/date.hpp"

#include <charconv>
#include <cstdio>

namespace dropcast {

namespace chr = std::chrono;

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  return Date(chr::sys_days(chr::year_month_day{chr::year{year}, chr::month{month}, chr::day{day}}));
}

std::optional<Date> Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
  auto number = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    const char* first = iso.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) return std::nullopt;
    return v;
  };
  auto y = number(0, 4);
  auto m = number(5, 2);
  auto d = number(8, 2);
  if (!y || !m || !d) return std::nullopt;
  chr::year_month_day ymd{chr::year{*y}, chr::month{static_cast<unsigned>(*m)},
                          chr::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date(chr::sys_days(ymd));
}

std::string Date::iso() const {
  chr::year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Date Date::plus_months(int n) const {
  chr::year_month_day ymd{days_};
  auto shifted = ymd + chr::months(n);
  if (!shifted.ok()) {
    shifted = chr::year_month_day_last(shifted.year(), chr::month_day_last(shifted.month()));
  }
  return Date(chr::sys_days(shifted));
}

int whole_months_between(Date from, Date to) {
  if (to < from) return 0;
  chr::year_month_day a{chr::sys_days(chr::days(from.serial()))};
  chr::year_month_day b{chr::sys_days(chr::days(to.serial()))};
  int m = (static_cast<int>(b.year()) - static_cast<int>(a.year())) * 12 +
          (static_cast<int>(static_cast<unsigned>(b.month())) -
           static_cast<int>(static_cast<unsigned>(a.month())));
  while (m > 0 && from.plus_months(m) > to) --m;
  return m;
}

}  // namespace dropcast
