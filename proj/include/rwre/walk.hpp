#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/random.hpp"

namespace rwre {

struct SiteCounts {
  std::uint64_t l1 = 0;  // jumps x -> x-1
  std::uint64_t l2 = 0;  // jumps x -> x-2
  std::uint64_t r = 0;   // jumps x -> x+1
  bool operator==(const SiteCounts&) const = default;
};

/// A quenched walk path observed until it first hits `target`, together with
/// the lazily drawn environment and per-site jump counts.
struct WalkRecord {
  std::int64_t target = 0;
  std::uint64_t t_n = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> path;  // kept only while short enough, see path_complete
  bool path_complete = true;
  bool reached_target = false;
  std::int64_t min_site = 0;
  std::unordered_map<std::int64_t, SiteLaw> env_used;
  std::map<std::int64_t, SiteCounts> counts;

  SiteCounts counts_at(std::int64_t x) const {
    auto it = counts.find(x);
    return it == counts.end() ? SiteCounts{} : it->second;
  }
};

struct WalkOptions {
  std::uint64_t step_cap = 0;          // 0 -> 1000 * target
  std::size_t path_cap = 10'000'000;   // beyond this only counts are kept
};

/// Budget exceeded before the walk reached its target. Carries the partial
/// record so callers can inspect how far it got.
struct BudgetExceededError : std::runtime_error {
  BudgetExceededError(std::string msg, WalkRecord rec)
      : std::runtime_error(std::move(msg)),
        partial(std::make_shared<WalkRecord>(std::move(rec))) {}
  std::shared_ptr<WalkRecord> partial;
};

inline int step(const SiteLaw& site, RandomStream& rng) { return site.draw_jump(rng); }

/// Simulates until the walk first hits `target`. The environment is drawn
/// from nu_theta at first visit and memoized, so the record is a function of
/// (family, theta, target, seed) only.
inline WalkRecord simulate_to(const FamilySpec& family, const ParamPoint& theta,
                              std::int64_t target, RandomStream& rng, WalkOptions opts = {},
                              std::uint64_t seed_label = 0) {
  if (target < 1) throw ConfigError("simulate_to: target must be >= 1");
  std::uint64_t cap = opts.step_cap ? opts.step_cap : 1000ULL * static_cast<std::uint64_t>(target);
  if (cap < static_cast<std::uint64_t>(target))
    throw ConfigError("simulate_to: step_cap must be >= target");
  family.require_inside(theta);

  WalkRecord rec;
  rec.target = target;
  rec.seed = seed_label;
  rec.path.push_back(0);

  std::int64_t pos = 0;
  std::uint64_t t = 0;
  auto site_at = [&](std::int64_t x) -> const SiteLaw& {
    auto it = rec.env_used.find(x);
    if (it == rec.env_used.end())
      it = rec.env_used.emplace(x, sample_site(family, theta, rng)).first;
    return it->second;
  };

  while (pos != target) {
    if (t >= cap) {
      rec.t_n = t;
      throw BudgetExceededError(
          "step budget (" + std::to_string(cap) + ") exceeded before hitting " +
              std::to_string(target) + "; theta is likely not ballistic",
          std::move(rec));
    }
    int jump = site_at(pos).draw_jump(rng);
    SiteCounts& c = rec.counts[pos];
    if (jump == +1)
      ++c.r;
    else if (jump == -1)
      ++c.l1;
    else
      ++c.l2;
    pos += jump;
    if (pos < rec.min_site) rec.min_site = pos;
    ++t;
    if (rec.path_complete) {
      if (rec.path.size() <= opts.path_cap)
        rec.path.push_back(pos);
      else {
        rec.path.clear();
        rec.path_complete = false;
      }
    }
  }
  rec.t_n = t;
  rec.reached_target = true;
  return rec;
}

/// Rebuilds a record (counts, t_n) from an explicit path; the path must start
/// at 0, move by jumps in {-2,-1,+1} and end at its first visit of `target`.
inline WalkRecord record_from_path(std::span<const std::int64_t> path, std::int64_t target) {
  if (path.empty() || path.front() != 0) throw ConfigError("path must start at 0");
  WalkRecord rec;
  rec.target = target;
  rec.path.assign(path.begin(), path.end());
  for (std::size_t s = 0; s + 1 < path.size(); ++s) {
    std::int64_t d = path[s + 1] - path[s];
    if (path[s] >= target) throw ConfigError("path visits target before its final step");
    SiteCounts& c = rec.counts[path[s]];
    if (d == +1)
      ++c.r;
    else if (d == -1)
      ++c.l1;
    else if (d == -2)
      ++c.l2;
    else
      throw ConfigError("path contains a jump outside {-2,-1,+1}");
    if (path[s] < rec.min_site) rec.min_site = path[s];
  }
  if (path.back() != target) throw ConfigError("path does not end at target");
  rec.t_n = path.size() - 1;
  rec.reached_target = true;
  return rec;
}

/// Verifies R_x = L_{x+1,1} + L_{x+1,2} + L_{x+2,2} + 1 for 0 <= x <= n-1,
/// the combinatorial identity every completed right-transient path satisfies.
inline bool count_identity_check(const WalkRecord& rec) {
  if (!rec.reached_target) return false;
  for (std::int64_t x = 0; x < rec.target; ++x) {
    std::uint64_t lhs = rec.counts_at(x).r;
    std::uint64_t rhs = rec.counts_at(x + 1).l1 + rec.counts_at(x + 1).l2 +
                        rec.counts_at(x + 2).l2 + 1;
    if (lhs != rhs) return false;
  }
  return true;
}

/// Position after a fixed number of steps (annealed long-run simulation used
/// for speed checks; counts are not tracked).
inline std::int64_t position_after(const FamilySpec& family, const ParamPoint& theta,
                                   std::uint64_t steps, RandomStream& rng) {
  family.require_inside(theta);
  std::unordered_map<std::int64_t, SiteLaw> env;
  std::int64_t pos = 0;
  for (std::uint64_t t = 0; t < steps; ++t) {
    auto it = env.find(pos);
    if (it == env.end()) it = env.emplace(pos, sample_site(family, theta, rng)).first;
    pos += it->second.draw_jump(rng);
  }
  return pos;
}

// -- columnar counts file -----------------------------------------------
//
//   n <tab> t_n <tab> seed
//   <values>
//   site <tab> l1 <tab> l2 <tab> r
//   <one row per visited site>

inline void write_counts(std::ostream& os, const WalkRecord& rec) {
  os << "n\tt_n\tseed\n"
     << rec.target << '\t' << rec.t_n << '\t' << rec.seed << '\n'
     << "site\tl1\tl2\tr\n";
  for (const auto& [site, c] : rec.counts)
    os << site << '\t' << c.l1 << '\t' << c.l2 << '\t' << c.r << '\n';
}

struct CountsFile {
  std::int64_t n = 0;
  std::uint64_t t_n = 0;
  std::uint64_t seed = 0;
  std::map<std::int64_t, SiteCounts> rows;
};

inline CountsFile read_counts(std::istream& is) {
  CountsFile out;
  std::string line;
  if (!std::getline(is, line) || line != "n\tt_n\tseed")
    throw ConfigError("counts file: bad header line 1 (expected 'n\\tt_n\\tseed')");
  if (!std::getline(is, line)) throw ConfigError("counts file: missing header values");
  {
    std::istringstream ss(line);
    if (!(ss >> out.n >> out.t_n >> out.seed))
      throw ConfigError("counts file: unparsable header values");
  }
  if (!std::getline(is, line) || line != "site\tl1\tl2\tr")
    throw ConfigError("counts file: bad column header (expected 'site\\tl1\\tl2\\tr')");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::int64_t site;
    SiteCounts c;
    if (!(ss >> site >> c.l1 >> c.l2 >> c.r))
      throw ConfigError("counts file: unparsable row: " + line);
    out.rows[site] = c;
  }
  return out;
}

}  // namespace rwre
