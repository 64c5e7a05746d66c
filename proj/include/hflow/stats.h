// Copyright 2026 The hflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// MUSHRA response tables: aggregation, paired t-tests and Holm correction.
//
// Scores are resolved to 1e-6. Group means are computed exactly in integer
// micro-units and rounded once, so they do not depend on row order.

#ifndef HFLOW_STATS_H_
#define HFLOW_STATS_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hflow/json_io.h"

namespace hflow {

// Malformed response data. what() carries the 1-based CSV line when known.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MushraResponse {
  std::string listener_id;
  std::string system;
  std::string utterance_id;
  std::string intensity;  // "low", "medium" or "high"
  double score = 0.0;     // [0, 100]
};

// Throws InputError for empty ids, unknown intensities or scores outside
// [0, 100].
void validate(const MushraResponse& response);

// Header: listener_id,system,utterance_id,intensity,score
std::vector<MushraResponse> parse_mushra_csv(const std::string& text);
std::string mushra_csv(const std::vector<MushraResponse>& responses);

enum class GroupBy { kSystem, kSystemIntensity };

struct SummaryRow {
  std::string system;
  std::string intensity;  // "all" when grouped by system only
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;  // quartiles by linear interpolation between order stats
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// One row per group, sorted by (system, intensity). Throws InputError on an
// empty table.
std::vector<SummaryRow> aggregate(const std::vector<MushraResponse>& responses,
                                  GroupBy group_by);

// system\tintensity\tn\tmean\tmedian\tq1\tq3\tmin\tmax
std::string summary_tsv(const std::vector<SummaryRow>& rows);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
  // Differences had zero variance and nonzero mean: t is infinite, p = 0.
  bool degenerate = false;
};

// Paired t-test on a[i] - b[i]. Throws std::invalid_argument when n < 2 and
// DimensionError on unequal lengths.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees
// of freedom.
double student_t_two_sided(double t, double df);

// Holm step-down. Flags are returned in input order. Throws
// std::invalid_argument for p outside [0, 1] or alpha outside (0, 1).
std::vector<bool> bonferroni_holm(std::span<const double> pvalues, double alpha = 0.05);

struct TestOutcome {
  std::string system_a;
  std::string system_b;
  std::string slice;  // intensity level, or "all"
  std::size_t n = 0;  // aligned (listener, utterance) cells
  double mean_difference = 0.0;  // a - b
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;
  std::size_t rank = 0;      // 1-based position in the ascending p order
  double threshold = 0.0;    // alpha / (m - rank + 1)
  bool reject = false;
};

struct ComparisonFamily {
  std::string slice;
  std::vector<TestOutcome> outcomes;  // pairs (i < j) of sorted system names
  // Cells present for only one system of a pair, summed over pairs.
  std::size_t dropped_cells = 0;
};

// Paired comparisons of every system pair within one intensity slice
// ("all" pools every intensity), Holm-corrected across the pairs. Pairs with
// fewer than two aligned cells get p = 1. Throws InputError for fewer than
// two systems or a repeated (listener, system, utterance, intensity) cell.
ComparisonFamily mushra_compare(const std::vector<MushraResponse>& responses,
                                const std::string& slice, double alpha = 0.05);

// The "all" family followed by one family per intensity present.
std::vector<ComparisonFamily> mushra_compare_all(
    const std::vector<MushraResponse>& responses, double alpha = 0.05);

Json outcomes_json(const std::vector<ComparisonFamily>& families,
                   const std::string& question, double alpha);

}  // namespace hflow

#endif  // HFLOW_STATS_H_
