#pragma once

// Reference implementations written straight from the definitions. They are
// slow on purpose and share no code with the library.

#include <algorithm>
#include <climits>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

/// Points for one round: one per slot where a player's label matches the truth.
inline int round_points(const std::vector<bool>& truth_a, const std::vector<bool>& truth_b,
                        const std::vector<bool>& guess_a, const std::vector<bool>& guess_b) {
  int points = 0;
  for (std::size_t k = 0; k < truth_a.size(); ++k) {
    if (truth_a[k] == guess_a[k]) ++points;
    if (truth_b[k] == guess_b[k]) ++points;
  }
  return points;
}

struct Edits {
  int ins = 0;
  int sub = 0;
  int del = 0;
};

namespace detail {

struct AlignmentSearch {
  const std::vector<std::string>& prev;
  const std::vector<std::string>& curr;
  Edits best;
  int best_cost = INT_MAX;
  int best_is = INT_MAX;

  void walk(std::size_t i, std::size_t j, int ins, int sub, int del) {
    if (i == prev.size() && j == curr.size()) {
      const int cost = ins + sub + del;
      if (cost < best_cost || (cost == best_cost && ins + sub < best_is)) {
        best = {ins, sub, del};
        best_cost = cost;
        best_is = ins + sub;
      }
      return;
    }
    if (i < prev.size() && j < curr.size()) walk(i + 1, j + 1, ins, sub + (prev[i] != curr[j] ? 1 : 0), del);
    if (i < prev.size()) walk(i + 1, j, ins, sub, del + 1);
    if (j < curr.size()) walk(i, j + 1, ins + 1, sub, del);
  }
};

}  // namespace detail

/// Walks every alignment path from prev to curr (match, substitute, delete,
/// insert) and keeps the cheapest; ties go to fewer insertions + substitutions.
inline Edits min_alignment(const std::vector<std::string>& prev, const std::vector<std::string>& curr) {
  detail::AlignmentSearch search{prev, curr};
  search.walk(0, 0, 0, 0, 0);
  return search.best;
}

inline double kl(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double sum = 0.0;
  for (const auto& [w, pw] : p) {
    if (pw > 0.0) sum += pw * std::log(pw / q.at(w));
  }
  return sum;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// Mean of d(x_i, y_j) over all ordered pairs.
inline double mean_distance(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) sum += distance(x[i], y[j]);
  }
  return sum / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

inline double energy_raw(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  const double a = mean_distance(x, y);
  const double b = mean_distance(x, x);
  const double c = mean_distance(y, y);
  return std::max(2.0 * a - b - c, 0.0);
}

}  // namespace oracle
