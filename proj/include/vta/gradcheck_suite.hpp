// SPDX-License-Identifier: Apache-2.0
//
// Named registry of finite-difference gradient checks: every tape
// primitive on randomized instances, plus end-to-end pipeline checks on a
// tiny two-sample batch.

#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace vta {

struct GradcheckEntry {
  std::string name;
  // Returns max relative error over all checked coordinates.
  std::function<double()> run;
};

const std::vector<GradcheckEntry>& gradcheck_registry();

// Runs entries whose name contains `filter` (all when empty); prints one
// line per entry to `out`. Returns true when every entry stays within
// `tol`. Throws ValidationError when the filter matches nothing.
bool run_gradcheck_suite(std::ostream& out, const std::string& filter = "",
                         double tol = 1e-4);

}  // namespace vta
