#pragma once

#include <cstdint>
#include <vector>

#include "dropcast/call_data.hpp"
#include "dropcast/model.hpp"

namespace dropcast::testing {

// Forest model with one stump on the phone_owner=husband slot: probability
// 1 for husband-owned phones, 0 otherwise.
Model owner_oracle_model(Task task, int input_days, int max_len);

struct BimodalCohort {
  std::vector<CallRecord> raw_calls;
  std::vector<ProfileCandidate> profiles;
  std::vector<int> high_risk;  // parallel to profiles
};

// Registered from 2019-01-01 at one-day steps; calls every third day, all
// connected. High-risk beneficiaries (phone owner husband) never engage,
// the rest always do. Post-input call counts vary in [0, 30].
BimodalCohort bimodal_cohort(int n, std::uint64_t seed);

}  // namespace dropcast::testing
