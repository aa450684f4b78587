#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dopf/errors.hpp"
#include "dopf/network.hpp"
#include "dopf/util/rng.hpp"

namespace dopf {

// Per-(bus, phase) exogenous record, per unit. Single-phase networks use the
// phase-a slot only. s_cap carries the time-varying apparent capacity where
// the bus has one (constant for Box/Disk, the rated s for PvResidual).
struct DerRecord {
  double p_c = 0;    // uncontrollable real consumption
  double q_c = 0;    // uncontrollable reactive consumption
  double p_g = 0;    // uncontrollable real generation (PV)
  double s_cap = 0;  // apparent-power capacity
};

enum class SplitLabel : uint8_t { Train = 0, Test = 1, Validation = 2 };

inline const char* split_name(SplitLabel s) {
  switch (s) {
    case SplitLabel::Train: return "train";
    case SplitLabel::Test: return "test";
    case SplitLabel::Validation: return "validation";
  }
  return "?";
}

struct Scenario {
  int64_t t = 0;
  std::vector<std::array<DerRecord, 3>> d;  // indexed by bus, then phase slot
  std::vector<double> extra;                // d^other channels

  // aggregate over phases, used by the single-phase paths
  const DerRecord& at(int bus) const { return d[bus][0]; }
};

struct ScenarioSet {
  std::vector<Scenario> scenarios;
  std::vector<SplitLabel> split;  // same length as scenarios
  std::vector<std::string> extra_names;
  std::string provenance;  // "ingested" or "synthetic"

  size_t size() const { return scenarios.size(); }
  std::vector<size_t> indices(SplitLabel lab) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < split.size(); ++i)
      if (split[i] == lab) out.push_back(i);
    return out;
  }
};

// Random permutation by seed, then contiguous slices sized by rounded
// cumulative fractions. Fractions must sum to 1.
inline void split_scenarios(ScenarioSet& set, double f_train, double f_test, double f_val,
                            uint64_t seed) {
  if (f_train < 0 || f_test < 0 || f_val < 0 ||
      std::abs(f_train + f_test + f_val - 1.0) > 1e-9)
    throw Error(Err::BadFractions, "split fractions must be nonnegative and sum to 1");
  size_t n = set.scenarios.size();
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  auto nd = static_cast<double>(n);
  size_t b1 = static_cast<size_t>(std::llround(f_train * nd));
  size_t b2 = static_cast<size_t>(std::llround((f_train + f_test) * nd));
  set.split.assign(n, SplitLabel::Train);
  for (size_t k = 0; k < n; ++k) {
    SplitLabel lab = k < b1 ? SplitLabel::Train : (k < b2 ? SplitLabel::Test : SplitLabel::Validation);
    set.split[perm[k]] = lab;
  }
}

}  // namespace dopf
