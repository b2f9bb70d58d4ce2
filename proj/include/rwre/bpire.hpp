#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/parallel.hpp"
#include "rwre/random.hpp"
#include "rwre/walk.hpp"

namespace rwre {

/// Generation count of the 3-type branching process.
struct GenVector {
  std::uint64_t z1 = 0;
  std::uint64_t z2 = 0;
  std::uint64_t z3 = 0;

  std::uint64_t total() const { return z1 + z2 + z3; }
  bool operator==(const GenVector&) const = default;
};

struct GenVectorHash {
  std::size_t operator()(const GenVector& v) const {
    std::uint64_t h = mix_index(v.z1, v.z2);
    return static_cast<std::size_t>(mix_index(h, v.z3));
  }
};

/// One offspring brood: categorical draws at `site` until the first +1
/// outcome; -1 draws become type-1 children, -2 draws type-2, and a type-2
/// parent additionally leaves one type-3 child.
inline GenVector offspring_sample(const SiteLaw& site, int parent_type, RandomStream& rng) {
  if (parent_type < 1 || parent_type > 3) throw DomainError("parent_type must be 1, 2 or 3");
  GenVector v;
  for (;;) {
    int jump = site.draw_jump(rng);
    if (jump == +1) break;
    if (jump == -1)
      ++v.z1;
    else
      ++v.z2;
  }
  if (parent_type == 2) v.z3 = 1;
  return v;
}

/// Closed-form offspring pmf: (a+b)!/(a!b!) w(-1)^a w(-2)^b w(1), with the
/// type-3 coordinate forced to 1 for a type-2 parent and 0 otherwise.
inline double offspring_pmf(const SiteLaw& site, int parent_type, const GenVector& v) {
  if (parent_type < 1 || parent_type > 3) throw DomainError("parent_type must be 1, 2 or 3");
  std::uint64_t want_z3 = parent_type == 2 ? 1 : 0;
  if (v.z3 != want_z3) return 0.0;
  double log_coeff = std::lgamma(static_cast<double>(v.z1 + v.z2) + 1.0) -
                     std::lgamma(static_cast<double>(v.z1) + 1.0) -
                     std::lgamma(static_cast<double>(v.z2) + 1.0);
  double log_mass = detail::log_point_moment(site, v.z1, v.z2, 1);
  if (log_mass == kNegInf) return 0.0;
  return std::exp(log_coeff + log_mass);
}

/// The U-process read off a completed walk: seq[j] = U_{target-j}, covering
/// sites target, target-1, ..., min_site. U_{i,1} and U_{i,2} are the -1/-2
/// jump counts at i; U_{i,3} the -2 jump count at i+1.
struct USeq {
  std::int64_t target = 0;
  std::int64_t min_site = 0;
  std::vector<GenVector> seq;

  GenVector at_site(std::int64_t i) const {
    if (i > target || i < min_site) return GenVector{};
    return seq[static_cast<std::size_t>(target - i)];
  }
};

inline USeq extract_U(const WalkRecord& rec) {
  if (!rec.reached_target) throw ConfigError("extract_U requires a completed record");
  USeq u;
  u.target = rec.target;
  u.min_site = rec.min_site;
  u.seq.reserve(static_cast<std::size_t>(rec.target - rec.min_site) + 1);
  for (std::int64_t i = rec.target; i >= rec.min_site; --i) {
    SiteCounts own = rec.counts_at(i);
    u.seq.push_back(GenVector{own.l1, own.l2, rec.counts_at(i + 1).l2});
  }
  return u;
}

/// T_n = n + sum_k U_k . (2,1,2): every step of the walk is accounted for by
/// the generation sizes. Exact integer identity on completed paths.
inline bool tn_identity(const WalkRecord& rec) {
  if (!rec.reached_target) return false;
  USeq u = extract_U(rec);
  std::uint64_t acc = 0;
  for (const GenVector& v : u.seq) acc += 2 * v.z1 + v.z2 + 2 * v.z3;
  return rec.t_n == static_cast<std::uint64_t>(rec.target) + acc;
}

/// Runs the Z-recursion over the given site laws (sites[k-1] is the law used
/// by generation k). Returns Z_0 = 0, Z_1, ..., Z_n. Each generation has one
/// type-1 immigrant on top of the previous generation's individuals.
inline std::vector<GenVector> simulate_Z(std::span<const SiteLaw> sites, RandomStream& rng) {
  std::vector<GenVector> z;
  z.reserve(sites.size() + 1);
  z.push_back(GenVector{});
  for (const SiteLaw& site : sites) {
    const GenVector& prev = z.back();
    GenVector next;
    auto spawn = [&](int type, std::uint64_t parents) {
      for (std::uint64_t j = 0; j < parents; ++j) {
        GenVector kid = offspring_sample(site, type, rng);
        next.z1 += kid.z1;
        next.z2 += kid.z2;
        next.z3 += kid.z3;
      }
    };
    spawn(1, prev.z1 + 1);
    spawn(2, prev.z2);
    spawn(3, prev.z3);
    z.push_back(next);
  }
  return z;
}

/// Per-generation comparison between the law of (U^n_{n-k})_k across
/// simulated walks and the law of (Z_k)_k across simulated trajectories.
struct UZReport {
  struct PerGen {
    double tv = 0.0;            // total variation over retained vectors
    double trunc_mass_u = 0.0;  // empirical U-mass dropped by the cutoff
    double trunc_mass_z = 0.0;
  };
  std::int64_t n = 0;
  std::size_t replicates = 0;
  double mass_cutoff = 0.0;
  std::vector<PerGen> per_gen;  // index k = 0..n

  double max_tv() const {
    double m = 0.0;
    for (const auto& g : per_gen) m = std::max(m, g.tv);
    return m;
  }
};

/// Samples `replicates` annealed walks and `replicates` annealed Z
/// trajectories and reports the per-generation TV distance between the two
/// empirical laws, truncated to vectors with empirical mass above
/// `mass_cutoff`. Caller is expected to have checked ballisticity
/// (spectral classify) beforehand; a non-ballistic theta surfaces as a
/// BudgetExceededError from the walk side.
inline UZReport u_z_distribution_check(const FamilySpec& family, const ParamPoint& theta,
                                       std::int64_t n, std::size_t replicates, std::uint64_t seed,
                                       unsigned threads = 0, double mass_cutoff = 1e-4,
                                       WalkOptions walk_opts = {}) {
  if (n < 0) throw ConfigError("u_z_distribution_check: n must be >= 0");
  std::size_t gens = static_cast<std::size_t>(n) + 1;

  std::vector<std::vector<GenVector>> u_rows(replicates), z_rows(replicates);
  parallel_for(replicates, threads, [&](std::size_t i) {
    RandomStream rs = RandomStream::substream(seed, mix_index(1, i));
    WalkRecord rec = simulate_to(family, theta, n, rs, walk_opts);
    USeq u = extract_U(rec);
    std::vector<GenVector> row(gens);
    for (std::size_t k = 0; k < gens; ++k) row[k] = u.at_site(n - static_cast<std::int64_t>(k));
    u_rows[i] = std::move(row);

    RandomStream zs = RandomStream::substream(seed, mix_index(2, i));
    std::vector<SiteLaw> sites(static_cast<std::size_t>(n));
    for (auto& s : sites) s = sample_site(family, theta, zs);
    z_rows[i] = simulate_Z(sites, zs);
  });

  UZReport report;
  report.n = n;
  report.replicates = replicates;
  report.mass_cutoff = mass_cutoff;
  report.per_gen.resize(gens);
  const double inv = 1.0 / static_cast<double>(replicates);
  for (std::size_t k = 0; k < gens; ++k) {
    std::unordered_map<GenVector, std::uint64_t, GenVectorHash> cu, cz;
    for (std::size_t i = 0; i < replicates; ++i) {
      ++cu[u_rows[i][k]];
      ++cz[z_rows[i][k]];
    }
    auto& g = report.per_gen[k];
    double half_abs = 0.0;
    for (const auto& [v, count_u] : cu) {
      double pu = count_u * inv;
      auto it = cz.find(v);
      double pz = it == cz.end() ? 0.0 : it->second * inv;
      if (pu >= mass_cutoff || pz >= mass_cutoff)
        half_abs += std::abs(pu - pz);
      else
        g.trunc_mass_u += pu;
    }
    for (const auto& [v, count_z] : cz) {
      double pz = count_z * inv;
      auto it = cu.find(v);
      double pu = it == cu.end() ? 0.0 : it->second * inv;
      if (pu >= mass_cutoff || pz >= mass_cutoff) {
        if (it == cu.end()) half_abs += pz;  // u-side contributed nothing above
      } else {
        g.trunc_mass_z += pz;
      }
    }
    g.tv = 0.5 * half_abs;
  }
  return report;
}

/// Columnar export of a generation sequence: generation, z1, z2, z3.
inline void write_gen_sequence(std::ostream& os, std::span<const GenVector> seq) {
  os << "generation\tz1\tz2\tz3\n";
  for (std::size_t k = 0; k < seq.size(); ++k)
    os << k << '\t' << seq[k].z1 << '\t' << seq[k].z2 << '\t' << seq[k].z3 << '\n';
}

}  // namespace rwre
