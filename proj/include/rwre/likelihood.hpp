#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rwre/bpire.hpp"
#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/walk.hpp"

namespace rwre {

struct PairCounts {
  std::uint64_t l1 = 0;
  std::uint64_t l2 = 0;
  bool operator==(const PairCounts&) const = default;
};

/// Left-jump pairs L_x = (l1, l2) for x = 0..n+1, the sufficient statistic
/// of the criterion function.
struct CountsView {
  std::int64_t n = 0;
  std::vector<PairCounts> pairs;  // index x = 0..n+1

  static CountsView from_record(const WalkRecord& rec) {
    CountsView cv;
    cv.n = rec.target;
    cv.pairs.resize(static_cast<std::size_t>(rec.target) + 2);
    for (std::int64_t x = 0; x <= rec.target + 1; ++x) {
      SiteCounts c = rec.counts_at(x);
      cv.pairs[static_cast<std::size_t>(x)] = PairCounts{c.l1, c.l2};
    }
    return cv;
  }

  static CountsView from_counts_file(const CountsFile& file) {
    CountsView cv;
    cv.n = file.n;
    cv.pairs.resize(static_cast<std::size_t>(file.n) + 2);
    for (const auto& [site, c] : file.rows) {
      if (site < 0 || site > file.n + 1) continue;  // outside the criterion window
      cv.pairs[static_cast<std::size_t>(site)] = PairCounts{c.l1, c.l2};
    }
    return cv;
  }

  PairCounts at(std::int64_t x) const {
    if (x < 0 || x >= static_cast<std::int64_t>(pairs.size())) return PairCounts{};
    return pairs[static_cast<std::size_t>(x)];
  }
};

namespace detail {

struct MomentTriple {
  std::uint64_t y1 = 0, y2 = 0, r = 0;
  auto operator<=>(const MomentTriple&) const = default;
};

// Shared evaluation path for both likelihood routes: group repeated moment
// triples, evaluate each log-moment once, and sum with compensation. Two
// calls given the same multiset of triples return bit-identical values.
inline double eval_moment_triples(std::vector<MomentTriple>& triples, const FamilySpec& family,
                                  const ParamPoint& theta) {
  std::sort(triples.begin(), triples.end());
  double sum = 0.0, comp = 0.0;
  std::size_t i = 0;
  while (i < triples.size()) {
    std::size_t j = i;
    while (j < triples.size() && triples[j] == triples[i]) ++j;
    double lm = log_moment(family, theta, triples[i].y1, triples[i].y2, triples[i].r);
    if (lm == kNegInf) return kNegInf;
    double term = static_cast<double>(j - i) * lm - comp;
    double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
    i = j;
  }
  return sum;
}

}  // namespace detail

/// phi_theta(y1, y2, y3): the log moment with left-jump exponents from y1 and
/// right-jump exponent y2.l1 + y2.l2 + y3.l2 + 1. Always <= 0.
inline double phi(const FamilySpec& family, const ParamPoint& theta, PairCounts y1, PairCounts y2,
                  PairCounts y3) {
  return log_moment(family, theta, y1.l1, y1.l2, y2.l1 + y2.l2 + y3.l2 + 1);
}

/// Criterion function l_n(theta) = sum_{x=0}^{n-1} phi(L_x, L_{x+1}, L_{x+2}).
inline double loglik(const CountsView& counts, const FamilySpec& family, const ParamPoint& theta) {
  std::vector<detail::MomentTriple> triples;
  triples.reserve(static_cast<std::size_t>(counts.n));
  for (std::int64_t x = 0; x < counts.n; ++x) {
    PairCounts y1 = counts.at(x), y2 = counts.at(x + 1), y3 = counts.at(x + 2);
    triples.push_back({y1.l1, y1.l2, y2.l1 + y2.l2 + y3.l2 + 1});
  }
  return detail::eval_moment_triples(triples, family, theta);
}

/// l_n(theta) as a functional of a Z-trajectory (Z_0..Z_n):
/// sum_k log-moment with exponents (Z_{k+1,1}, Z_{k+1,2}, |Z_k| + 1).
/// Feeding the reversed U-sequence of a walk reproduces loglik exactly.
inline double loglik_via_Z(std::span<const GenVector> z, const FamilySpec& family,
                           const ParamPoint& theta) {
  if (z.empty()) throw ConfigError("loglik_via_Z: empty trajectory");
  std::vector<detail::MomentTriple> triples;
  triples.reserve(z.size() - 1);
  for (std::size_t k = 0; k + 1 < z.size(); ++k)
    triples.push_back({z[k + 1].z1, z[k + 1].z2, z[k].total() + 1});
  return detail::eval_moment_triples(triples, family, theta);
}

/// Annealed one-step transition kernel of the Z-chain. The offspring
/// structure forces y.z3 = x.z2; on that support
/// Q(x,y) = (|x|+y1+y2)! / (y1! y2! |x|!) * moment(y1, y2, |x|+1).
inline double kernel_Q(const FamilySpec& family, const ParamPoint& theta, const GenVector& x,
                       const GenVector& y) {
  if (y.z3 != x.z2) return 0.0;
  std::uint64_t xs = x.total();
  double lm = log_moment(family, theta, y.z1, y.z2, xs + 1);
  if (lm == kNegInf) return 0.0;
  double log_coeff = std::lgamma(static_cast<double>(xs + y.z1 + y.z2) + 1.0) -
                     std::lgamma(static_cast<double>(y.z1) + 1.0) -
                     std::lgamma(static_cast<double>(y.z2) + 1.0) -
                     std::lgamma(static_cast<double>(xs) + 1.0);
  return std::exp(log_coeff + lm);
}

}  // namespace rwre
