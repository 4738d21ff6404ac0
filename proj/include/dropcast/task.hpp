#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace dropcast {

enum class Task { short_term, long_engagement, long_connection };

// Binary risk label as stored in datasets: high_risk = 1, low_risk = 0.
enum class RiskLabel : int { low_risk = 0, high_risk = 1 };

std::string_view to_string(Task task);
// Accepts "short", "long-engagement", "long-connection" (and the
// underscore spellings used in JSON).
std::optional<Task> parse_task(std::string_view name);

constexpr bool is_long_term(Task task) { return task != Task::short_term; }

}  // namespace dropcast
