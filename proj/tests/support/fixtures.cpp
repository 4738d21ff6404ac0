#include "support/fixtures.hpp"

#include <algorithm>

#include "dropcast/pipeline.hpp"
#include "dropcast/rng.hpp"

namespace dropcast::testing {

Model owner_oracle_model(Task task, int input_days, int max_len) {
  ProfileSchema schema;
  pipeline::StaticLayout layout(schema);
  const auto names = layout.slot_names();
  const int slot = static_cast<int>(std::find(names.begin(), names.end(), "phone_owner=husband") - names.begin());
  forest::Tree tree{{forest::TreeNode{slot, 0.5, 1, 2, 0.5}, forest::TreeNode{-1, 0.0, -1, -1, 0.0},
                     forest::TreeNode{-1, 0.0, -1, -1, 1.0}}};
  forest::Forest f(layout.demographic_width(), {tree}, forest::ForestConfig{});
  return Model(ModelLayout{task, input_days, max_len, layout.width(), layout.demographic_width(), schema}, std::move(f));
}

BimodalCohort bimodal_cohort(int n, std::uint64_t seed) {
  BimodalCohort out;
  Rng rng(seed);
  std::uniform_int_distribution<int> post(0, 30);
  const Date first = Date::from_ymd(2019, 1, 1);
  for (int i = 0; i < n; ++i) {
    const bool high = i % 3 == 0;
    ProfileCandidate p;
    p.beneficiary_id = "P" + std::to_string(100 + i);
    p.age_years = 25;
    p.education_level = 3;
    p.income_group = 2;
    p.registration_date = first.plus_days(i);
    p.gestation_age_weeks = 14;
    p.call_slot = 2;
    p.language = "hindi";
    p.phone_owner = high ? PhoneOwner::husband : PhoneOwner::self;
    const int n_calls = 20 + post(rng);
    for (int k = 0; k < n_calls; ++k) {
      const Date d = p.registration_date->plus_days(3 * k);
      out.raw_calls.push_back(CallRecord{p.beneficiary_id, 10 + k, d, high ? 12 : 75, true});
      if (k % 4 == 0) out.raw_calls.push_back(CallRecord{p.beneficiary_id, 10 + k, d.plus_days(-1), 0, false});
    }
    out.profiles.push_back(std::move(p));
    out.high_risk.push_back(high);
  }
  std::shuffle(out.raw_calls.begin(), out.raw_calls.end(), rng);
  return out;
}

}  // namespace dropcast::testing
