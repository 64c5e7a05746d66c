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

#include "hflow/stats.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "hflow/numerics.h"

namespace hflow {

namespace {

bool known_intensity(const std::string& s) {
  return s == "low" || s == "medium" || s == "high";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Plain decimal: [+-]?digits[.digits] or [+-]?.digits
bool parse_decimal(const std::string& s, double& out) {
  std::size_t i = (!s.empty() && (s[0] == '+' || s[0] == '-')) ? 1 : 0;
  std::size_t digits = 0;
  bool dot = false;
  for (std::size_t j = i; j < s.size(); ++j) {
    if (s[j] >= '0' && s[j] <= '9') {
      ++digits;
    } else if (s[j] == '.' && !dot) {
      dot = true;
    } else {
      return false;
    }
  }
  if (digits == 0) return false;
  const char* begin = s.data() + (s[0] == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::int64_t micro_units(double score) {
  return static_cast<std::int64_t>(std::llround(score * 1e6));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Linear interpolation between order statistics of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void validate(const MushraResponse& r) {
  if (r.listener_id.empty() || r.system.empty() || r.utterance_id.empty()) {
    throw InputError("empty listener, system or utterance id");
  }
  if (!known_intensity(r.intensity)) {
    throw InputError("unknown intensity '" + r.intensity + "'");
  }
  if (!(r.score >= 0.0 && r.score <= 100.0)) {
    throw InputError("score " + fmt(r.score) + " outside [0, 100]");
  }
}

std::vector<MushraResponse> parse_mushra_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<MushraResponse> out;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (!header_seen) {
      const std::vector<std::string> expected = {"listener_id", "system", "utterance_id",
                                                 "intensity", "score"};
      if (fields != expected) {
        throw InputError(where + "expected header listener_id,system,utterance_id,intensity,score");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 5) {
      throw InputError(where + "expected 5 fields, found " + std::to_string(fields.size()));
    }
    MushraResponse r{fields[0], fields[1], fields[2], fields[3], 0.0};
    if (!parse_decimal(fields[4], r.score)) {
      throw InputError(where + "score '" + fields[4] + "' is not a decimal number");
    }
    try {
      validate(r);
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
    out.push_back(std::move(r));
  }
  if (!header_seen) throw InputError("line 1: missing header");
  return out;
}

std::string mushra_csv(const std::vector<MushraResponse>& responses) {
  std::string out = "listener_id,system,utterance_id,intensity,score\n";
  for (const MushraResponse& r : responses) {
    out += r.listener_id + ',' + r.system + ',' + r.utterance_id + ',' + r.intensity +
           ',' + fmt(r.score) + '\n';
  }
  return out;
}

std::vector<SummaryRow> aggregate(const std::vector<MushraResponse>& responses,
                                  GroupBy group_by) {
  if (responses.empty()) throw InputError("aggregate: empty response table");
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const MushraResponse& r : responses) {
    const std::string slice = group_by == GroupBy::kSystem ? "all" : r.intensity;
    groups[{r.system, slice}].push_back(r.score);
  }
  std::vector<SummaryRow> rows;
  for (auto& [key, scores] : groups) {
    std::sort(scores.begin(), scores.end());
    std::int64_t total = 0;
    for (double s : scores) total += micro_units(s);
    SummaryRow row;
    row.system = key.first;
    row.intensity = key.second;
    row.n = scores.size();
    // Both operands are exact integers below 2^53, so this rounds once.
    row.mean = static_cast<double>(total) / (static_cast<double>(row.n) * 1e6);
    row.median = quantile(scores, 0.5);
    row.q1 = quantile(scores, 0.25);
    row.q3 = quantile(scores, 0.75);
    row.min = scores.front();
    row.max = scores.back();
    rows.push_back(row);
  }
  return rows;
}

std::string summary_tsv(const std::vector<SummaryRow>& rows) {
  std::string out = "system\tintensity\tn\tmean\tmedian\tq1\tq3\tmin\tmax\n";
  for (const SummaryRow& r : rows) {
    out += r.system + '\t' + r.intensity + '\t' + std::to_string(r.n) + '\t' + fmt(r.mean) +
           '\t' + fmt(r.median) + '\t' + fmt(r.q1) + '\t' + fmt(r.q3) + '\t' + fmt(r.min) +
           '\t' + fmt(r.max) + '\n';
  }
  return out;
}

double student_t_two_sided(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("paired_t_test: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.df = static_cast<double>(n - 1);
  if (!std::isfinite(mean) || !std::isfinite(sd)) {
    throw NonFiniteError("paired_t_test: non-finite scores");
  }
  // Identical differences: treat spread at rounding level as zero.
  const bool constant = std::all_of(d.begin(), d.end(), [&](double x) { return x == d[0]; });
  if (constant || sd == 0.0) {
    if (mean == 0.0 || (constant && d[0] == 0.0)) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.degenerate = true;
      r.t = std::copysign(std::numeric_limits<double>::infinity(), constant ? d[0] : mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided(r.t, r.df);
  return r;
}

namespace {

std::vector<std::size_t> ascending_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  return order;
}

void check_holm_inputs(std::span<const double> pvalues, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  for (double p : pvalues) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p-value outside [0, 1]");
  }
}

}  // namespace

std::vector<bool> bonferroni_holm(std::span<const double> pvalues, double alpha) {
  check_holm_inputs(pvalues, alpha);
  const std::size_t m = pvalues.size();
  std::vector<bool> reject(m, false);
  const std::vector<std::size_t> order = ascending_order(pvalues);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(pvalues[order[i]] <= alpha / static_cast<double>(m - i))) break;
    reject[order[i]] = true;
  }
  return reject;
}

ComparisonFamily mushra_compare(const std::vector<MushraResponse>& responses,
                                const std::string& slice, double alpha) {
  using Cell = std::tuple<std::string, std::string, std::string>;  // listener, utt, level
  std::map<std::string, std::map<Cell, double>> by_system;
  std::set<std::string> systems;
  for (const MushraResponse& r : responses) {
    systems.insert(r.system);
    if (slice != "all" && r.intensity != slice) continue;
    auto [it, inserted] =
        by_system[r.system].emplace(Cell{r.listener_id, r.utterance_id, r.intensity}, r.score);
    if (!inserted) {
      throw InputError("duplicate response for listener '" + r.listener_id + "', system '" +
                       r.system + "', utterance '" + r.utterance_id + "'");
    }
  }
  if (systems.size() < 2) throw InputError("mushra_compare: need at least two systems");

  ComparisonFamily family;
  family.slice = slice;
  const std::vector<std::string> names(systems.begin(), systems.end());
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      const auto& ca = by_system[names[i]];
      const auto& cb = by_system[names[j]];
      std::vector<double> a, b;
      for (const auto& [cell, score] : ca) {
        auto it = cb.find(cell);
        if (it == cb.end()) {
          ++family.dropped_cells;
          continue;
        }
        a.push_back(score);
        b.push_back(it->second);
      }
      family.dropped_cells += cb.size() - a.size();
      TestOutcome o;
      o.system_a = names[i];
      o.system_b = names[j];
      o.slice = slice;
      o.n = a.size();
      if (a.size() >= 2) {
        const TTestResult t = paired_t_test(a, b);
        o.t = t.t;
        o.df = t.df;
        o.p = t.p;
        o.degenerate = t.degenerate;
        double diff = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) diff += a[k] - b[k];
        o.mean_difference = diff / static_cast<double>(a.size());
      }
      family.outcomes.push_back(o);
    }
  }

  std::vector<double> p;
  for (const TestOutcome& o : family.outcomes) p.push_back(o.p);
  const std::vector<bool> reject = bonferroni_holm(p, alpha);
  const std::vector<std::size_t> order = ascending_order(p);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    TestOutcome& o = family.outcomes[order[rank]];
    o.rank = rank + 1;
    o.threshold = alpha / static_cast<double>(order.size() - rank);
    o.reject = reject[order[rank]];
  }
  return family;
}

std::vector<ComparisonFamily> mushra_compare_all(
    const std::vector<MushraResponse>& responses, double alpha) {
  std::vector<ComparisonFamily> out = {mushra_compare(responses, "all", alpha)};
  for (const char* level : {"low", "medium", "high"}) {
    const bool present = std::any_of(responses.begin(), responses.end(),
                                     [&](const MushraResponse& r) { return r.intensity == level; });
    if (present) out.push_back(mushra_compare(responses, level, alpha));
  }
  return out;
}

Json outcomes_json(const std::vector<ComparisonFamily>& families,
                   const std::string& question, double alpha) {
  Json fams = Json::array();
  for (const ComparisonFamily& f : families) {
    Json outcomes = Json::array();
    for (const TestOutcome& o : f.outcomes) {
      outcomes.push_back({{"system_a", o.system_a},
                          {"system_b", o.system_b},
                          {"n", o.n},
                          {"mean_difference", o.mean_difference},
                          {"t", std::isfinite(o.t) ? Json(o.t) : Json(o.t > 0 ? "inf" : "-inf")},
                          {"df", o.df},
                          {"p", o.p},
                          {"degenerate", o.degenerate},
                          {"rank", o.rank},
                          {"threshold", o.threshold},
                          {"reject", o.reject}});
    }
    fams.push_back({{"slice", f.slice},
                    {"dropped_cells", f.dropped_cells},
                    {"outcomes", std::move(outcomes)}});
  }
  return {{"question", question},
          {"alpha", alpha},
          {"test", "paired t-test, Holm step-down per family"},
          {"families", std::move(fams)}};
}

}  // namespace hflow
