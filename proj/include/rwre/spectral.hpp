#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rwre/bpire.hpp"
#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/parallel.hpp"
#include "rwre/random.hpp"

namespace rwre {

/// The site matrices A_k (3x3 offspring means) and B_k (2x2 companion of the
/// hitting-time recursion), built from a = w(-1)/w(1), b = w(-2)/w(1).
struct MatView {
  Eigen::Matrix3d a3;
  Eigen::Matrix2d b2;
};

inline Eigen::Matrix3d mat_a(const SiteLaw& s) {
  double a = s.a(), b = s.b();
  Eigen::Matrix3d m;
  m << a, b, 0.0,
       a, b, 1.0,
       a, b, 0.0;
  return m;
}

inline Eigen::Matrix2d mat_b(const SiteLaw& s) {
  double a = s.a(), b = s.b();
  Eigen::Matrix2d m;
  m << a + b, b,
       1.0,   0.0;
  return m;
}

inline MatView site_matrices(const SiteLaw& s) {
  s.validate();
  return MatView{mat_a(s), mat_b(s)};
}

enum class MatrixFamily { A, B };

enum class Regime { transient_right, recurrent_band, transient_left };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::transient_right: return "transient-right";
    case Regime::recurrent_band: return "recurrent-band";
    case Regime::transient_left: return "transient-left";
  }
  return "?";
}

struct LyapunovEstimate {
  double gamma = 0.0;
  double se = 0.0;
  std::uint64_t steps = 0;
};

/// Top Lyapunov exponent of the i.i.d. products, by renormalized
/// row-vector iteration. Standard error from 100 batch means. A product that
/// collapses to the zero vector (no left jumps possible) yields gamma = -inf.
inline LyapunovEstimate lyapunov(const FamilySpec& family, const ParamPoint& theta,
                                 std::uint64_t steps, MatrixFamily which, RandomStream& rng) {
  if (steps < 10'000) throw ConfigError("lyapunov: need steps >= 10^4");
  family.require_inside(theta);

  constexpr int kBatches = 100;
  const std::uint64_t batch_size = steps / kBatches;
  std::vector<double> batch_sum(kBatches, 0.0);
  double total = 0.0;

  Eigen::RowVector3d v3 = Eigen::RowVector3d::Zero();
  Eigen::RowVector2d v2 = Eigen::RowVector2d::Zero();
  v3(0) = 1.0;
  v2(0) = 1.0;

  for (std::uint64_t t = 0; t < steps; ++t) {
    SiteLaw site = sample_site(family, theta, rng);
    double norm;
    if (which == MatrixFamily::A) {
      v3 = v3 * mat_a(site);
      norm = v3.lpNorm<1>();
      if (norm > 0.0) v3 /= norm;
    } else {
      v2 = v2 * mat_b(site);
      norm = v2.lpNorm<1>();
      if (norm > 0.0) v2 /= norm;
    }
    if (norm == 0.0) return LyapunovEstimate{kNegInf, 0.0, steps};
    if (!std::isfinite(norm))
      throw NumericError(
          "lyapunov: matrix product overflowed; the family admits sites with w(1) "
          "near 0 -- restrict the box");
    double inc = std::log(norm);
    total += inc;
    std::uint64_t bi = t / batch_size;
    if (bi >= kBatches) bi = kBatches - 1;  // remainder folds into last batch
    batch_sum[bi] += inc;
  }

  double gamma = total / static_cast<double>(steps);
  // batch means; the last batch absorbs steps % 100 extra increments
  double mean_acc = 0.0;
  std::vector<double> means(kBatches);
  for (int b = 0; b < kBatches; ++b) {
    std::uint64_t size = batch_size + (b == kBatches - 1 ? steps % kBatches : 0);
    means[b] = batch_sum[b] / static_cast<double>(size);
    mean_acc += means[b];
  }
  mean_acc /= kBatches;
  double var = 0.0;
  for (double m : means) var += (m - mean_acc) * (m - mean_acc);
  var /= (kBatches - 1);
  return LyapunovEstimate{gamma, std::sqrt(var / kBatches), steps};
}

/// transient-right iff the 3-sigma band is entirely below 0; transient-left
/// iff entirely above; recurrent-band otherwise (inconclusive near 0).
inline Regime classify(double gamma, double se) {
  if (gamma == kNegInf) return Regime::transient_right;
  if (gamma + 3.0 * se < 0.0) return Regime::transient_right;
  if (gamma - 3.0 * se > 0.0) return Regime::transient_left;
  return Regime::recurrent_band;
}

inline Regime classify(const LyapunovEstimate& est) { return classify(est.gamma, est.se); }

/// e1 A_0...A_{k-1} e2^t = e1 B_0...B_{k-1} e2^t, checked to 1e-10 relative.
inline bool ab_bridge_check(std::span<const SiteLaw> sites) {
  if (sites.empty()) throw ConfigError("ab_bridge_check: need at least one site");
  Eigen::RowVector3d va(1.0, 0.0, 0.0);
  Eigen::RowVector2d vb(1.0, 0.0);
  for (const SiteLaw& s : sites) {
    va = va * mat_a(s);
    vb = vb * mat_b(s);
  }
  double lhs = va(1), rhs = vb(1);
  if (!std::isfinite(lhs) || !std::isfinite(rhs))
    throw NumericError("ab_bridge_check: product overflowed");
  double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
  return std::abs(lhs - rhs) <= 1e-10 * scale;
}

/// The partial sums parameterizing the quenched p.g.f. of Z_n.
struct SSums {
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;

  double total() const { return 1.0 + s1 + s2 + s3; }
  double p0() const { return 1.0 / total(); }
  double p(int i) const { return (i == 1 ? s1 : i == 2 ? s2 : s3) / total(); }
};

// Orientation of the partial-sum family. `reversed` is the parameterization
// of the quenched pmf of Z_n (suffix products ending at site n); `forward`
// is its image under environment reversal (prefix products ending at site 1),
// whose terms stabilize as n grows and whose limit parameterizes pi_theta.
enum class Orientation {
  reversed,  // S_n^i  = e1 sum_j A_j A_{j+1} ... A_n e_i^t
  forward,   // S~_n^i = e1 sum_j A_j A_{j-1} ... A_1 e_i^t
};

inline SSums s_sums(std::span<const SiteLaw> sites, Orientation orientation) {
  if (sites.empty()) throw ConfigError("s_sums: need at least one site");
  SSums out;
  // either way the new factor joins on the left; only the site order differs
  Eigen::Matrix3d prod = Eigen::Matrix3d::Identity();
  auto absorb = [&](const SiteLaw& s) {
    prod = (mat_a(s) * prod).eval();
    out.s1 += prod(0, 0);
    out.s2 += prod(0, 1);
    out.s3 += prod(0, 2);
  };
  if (orientation == Orientation::forward) {
    for (const SiteLaw& s : sites) absorb(s);
  } else {
    for (std::size_t j = sites.size(); j-- > 0;) absorb(sites[j]);
  }
  if (!prod.allFinite()) throw NumericError("s_sums: overflow (gamma_A >= 0 environment?)");
  return out;
}

/// Multivariate-geometric pmf with success parameters taken from S-sums:
/// P(v) = (|v|)!/(z1!z2!z3!) p1^z1 p2^z2 p3^z3 p0.
inline double multivariate_geometric_pmf(const SSums& s, const GenVector& v) {
  double lp = std::log(s.p0());
  double coeff = std::lgamma(static_cast<double>(v.total()) + 1.0) -
                 std::lgamma(static_cast<double>(v.z1) + 1.0) -
                 std::lgamma(static_cast<double>(v.z2) + 1.0) -
                 std::lgamma(static_cast<double>(v.z3) + 1.0);
  const std::uint64_t z[3] = {v.z1, v.z2, v.z3};
  for (int i = 0; i < 3; ++i) {
    if (z[i] == 0) continue;
    double pi = s.p(i + 1);
    if (pi <= 0.0) return 0.0;
    lp += static_cast<double>(z[i]) * std::log(pi);
  }
  return std::exp(coeff + lp);
}

/// Quenched pmf of Z_n for the environment (omega_1..omega_n).
inline double zn_pmf(std::span<const SiteLaw> sites, const GenVector& v) {
  return multivariate_geometric_pmf(s_sums(sites, Orientation::reversed), v);
}

struct TailOptions {
  double tail_tol = 1e-12;
  std::uint64_t k_cap = 100'000;
};

namespace detail {

// Limit sums S^i = e1 (A_1 + A_2 A_1 + A_3 A_2 A_1 + ...) e_i^t for one
// sampled environment: the a.s. limit of the forward orientation, whose terms
// stabilize. Returns false if the k-cap was hit before the tail tolerance.
inline bool hat_s_sums(const FamilySpec& family, const ParamPoint& theta, RandomStream& rng,
                       const TailOptions& tail, SSums& out) {
  Eigen::Matrix3d prod = Eigen::Matrix3d::Identity();
  out = SSums{};
  for (std::uint64_t k = 1; k <= tail.k_cap; ++k) {
    prod = (mat_a(sample_site(family, theta, rng)) * prod).eval();
    if (!prod.allFinite())
      throw NumericError("environment series overflowed; gamma_A >= 0 suspected");
    out.s1 += prod(0, 0);
    out.s2 += prod(0, 1);
    out.s3 += prod(0, 2);
    if (prod.lpNorm<1>() < tail.tail_tol) return true;
  }
  return false;
}

}  // namespace detail

/// Monte Carlo table of the limit invariant law pi_theta over all v with
/// |v| <= v_max, with a per-entry standard error across environments.
struct InvariantTable {
  int v_max = 0;
  std::size_t env_samples = 0;
  std::vector<double> prob;
  std::vector<double> se;
  double cap_hit_fraction = 0.0;
  bool truncation_warning = false;  // set when > 1% of environments hit the k-cap

  std::size_t index(std::uint64_t z1, std::uint64_t z2, std::uint64_t z3) const {
    std::uint64_t m1 = static_cast<std::uint64_t>(v_max) - z1;
    // offset of the z1-block, then of the z2-row inside it
    std::uint64_t vm = static_cast<std::uint64_t>(v_max);
    std::uint64_t block = 0;
    // sum_{u < z1} T(vm - u), T(m) = (m+1)(m+2)/2, closed form below
    for (std::uint64_t u = 0; u < z1; ++u) block += (vm - u + 1) * (vm - u + 2) / 2;
    std::uint64_t row = z2 * (m1 + 1) - z2 * (z2 - 1) / 2;
    return static_cast<std::size_t>(block + row + z3);
  }

  double at(std::uint64_t z1, std::uint64_t z2, std::uint64_t z3) const {
    if (z1 + z2 + z3 > static_cast<std::uint64_t>(v_max)) return 0.0;
    return prob[index(z1, z2, z3)];
  }

  double total_mass() const {
    double acc = 0.0;
    for (double p : prob) acc += p;
    return acc;
  }

  static std::size_t entry_count(int v_max) {
    std::uint64_t m = static_cast<std::uint64_t>(v_max);
    return static_cast<std::size_t>((m + 1) * (m + 2) * (m + 3) / 6);
  }
};

inline InvariantTable invariant_dist(const FamilySpec& family, const ParamPoint& theta,
                                     std::size_t env_samples, TailOptions tail, int v_max,
                                     std::uint64_t seed, unsigned threads = 0) {
  if (env_samples == 0) throw ConfigError("invariant_dist: env_samples must be > 0");
  if (v_max < 0) throw ConfigError("invariant_dist: v_max must be >= 0");
  family.require_inside(theta);

  // phase 1: per-environment geometric parameters (parallel, slot-per-index)
  struct EnvParams {
    double p0, p1, p2, p3;
  };
  std::vector<EnvParams> envs(env_samples);
  std::vector<unsigned char> cap_hit(env_samples, 0);
  parallel_for(env_samples, threads, [&](std::size_t e) {
    RandomStream rng = RandomStream::substream(seed, mix_index(3, e));
    SSums s;
    bool converged = detail::hat_s_sums(family, theta, rng, tail, s);
    cap_hit[e] = converged ? 0 : 1;
    envs[e] = EnvParams{s.p0(), s.p(1), s.p(2), s.p(3)};
  });

  InvariantTable table;
  table.v_max = v_max;
  table.env_samples = env_samples;
  std::size_t entries = InvariantTable::entry_count(v_max);
  table.prob.assign(entries, 0.0);
  table.se.assign(entries, 0.0);
  std::vector<double> sumsq(entries, 0.0);

  // phase 2: accumulate the pmf recursively; parallel over z1-blocks so every
  // entry sees environments in index order regardless of thread count
  std::size_t blocks = static_cast<std::size_t>(v_max) + 1;
  parallel_for(blocks, threads, [&](std::size_t z1) {
    std::size_t base = table.index(z1, 0, 0);
    std::uint64_t m1 = static_cast<std::uint64_t>(v_max) - z1;
    for (std::size_t e = 0; e < env_samples; ++e) {
      const EnvParams& p = envs[e];
      double head = std::pow(p.p1, static_cast<double>(z1)) * p.p0;
      std::size_t idx = base;
      double row_head = head;
      for (std::uint64_t z2 = 0; z2 <= m1; ++z2) {
        double pmf = row_head;
        for (std::uint64_t z3 = 0; z3 <= m1 - z2; ++z3) {
          table.prob[idx] += pmf;
          sumsq[idx] += pmf * pmf;
          ++idx;
          pmf *= p.p3 * static_cast<double>(z1 + z2 + z3 + 1) / static_cast<double>(z3 + 1);
        }
        row_head *= p.p2 * static_cast<double>(z1 + z2 + 1) / static_cast<double>(z2 + 1);
      }
    }
  });

  double inv_m = 1.0 / static_cast<double>(env_samples);
  for (std::size_t i = 0; i < entries; ++i) {
    double mean = table.prob[i] * inv_m;
    double var = std::max(0.0, sumsq[i] * inv_m - mean * mean);
    table.prob[i] = mean;
    table.se[i] = std::sqrt(var * inv_m);
  }

  std::size_t hits = 0;
  for (unsigned char h : cap_hit) hits += h;
  table.cap_hit_fraction = static_cast<double>(hits) * inv_m;
  table.truncation_warning = table.cap_hit_fraction > 0.01;
  return table;
}

struct SpeedEstimate {
  double speed = 0.0;
  double se = 0.0;
  double pi_mean = 0.0;  // E pi(omega), the expected one-site hitting time
  double pi_se = 0.0;
};

/// Ballistic speed 1 / E pi(omega) with pi(omega) = 1 + sum_k e1 A_k...A_1 (2,1,2)^t,
/// by Monte Carlo over environments. Throws if the series fails to converge
/// in more than 1% of the sampled environments.
inline SpeedEstimate speed(const FamilySpec& family, const ParamPoint& theta,
                           std::size_t env_samples, TailOptions tail, std::uint64_t seed,
                           unsigned threads = 0) {
  if (env_samples == 0) throw ConfigError("speed: env_samples must be > 0");
  family.require_inside(theta);

  const Eigen::Vector3d w(2.0, 1.0, 2.0);
  std::vector<double> pis(env_samples);
  std::vector<unsigned char> cap_hit(env_samples, 0);
  parallel_for(env_samples, threads, [&](std::size_t e) {
    RandomStream rng = RandomStream::substream(seed, mix_index(4, e));
    Eigen::Vector3d u = w;
    double pi = 1.0;
    bool converged = false;
    for (std::uint64_t k = 1; k <= tail.k_cap; ++k) {
      u = (mat_a(sample_site(family, theta, rng)) * u).eval();
      if (!u.allFinite()) throw NumericError("speed: pi(omega) series overflowed");
      pi += u(0);
      if (u.lpNorm<1>() < tail.tail_tol) {
        converged = true;
        break;
      }
    }
    cap_hit[e] = converged ? 0 : 1;
    pis[e] = pi;
  });

  std::size_t hits = 0;
  for (unsigned char h : cap_hit) hits += h;
  double frac = static_cast<double>(hits) / static_cast<double>(env_samples);
  if (frac > 0.01)
    throw NumericError("speed: pi(omega) series hit the k-cap in " +
                       std::to_string(100.0 * frac) +
                       "% of environments; theta does not look ballistic");

  double mean = 0.0;
  for (double p : pis) mean += p;
  mean /= static_cast<double>(env_samples);
  double var = 0.0;
  for (double p : pis) var += (p - mean) * (p - mean);
  var = env_samples > 1 ? var / static_cast<double>(env_samples - 1) : 0.0;
  double pi_se = std::sqrt(var / static_cast<double>(env_samples));

  SpeedEstimate out;
  out.pi_mean = mean;
  out.pi_se = pi_se;
  out.speed = 1.0 / mean;
  out.se = pi_se / (mean * mean);  // delta method
  return out;
}

/// Quenched expected hitting time E_omega T_n = n + sum_{i=0}^{n-1}
/// sum_{k<=i} e1 A_i...A_k (2,1,2)^t, truncating the inner sum at site
/// -neg_cut or when the running vector drops below tail_tol.
template <class EnvFn>
double expected_hitting(EnvFn&& env, std::int64_t n, std::int64_t neg_cut = 1000,
                        double tail_tol = 1e-12) {
  if (n < 1) throw ConfigError("expected_hitting: n must be >= 1");
  const Eigen::Vector3d w(2.0, 1.0, 2.0);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    Eigen::Vector3d q = mat_a(env(i)).transpose() * Eigen::Vector3d(1.0, 0.0, 0.0);
    for (std::int64_t k = i;;) {
      acc += w.dot(q);
      if (!std::isfinite(acc)) throw NumericError("expected_hitting: series overflowed");
      --k;
      if (k < -neg_cut || 2.0 * q.lpNorm<1>() < tail_tol) break;
      q = (mat_a(env(k)).transpose() * q).eval();
    }
  }
  return static_cast<double>(n) + acc;
}

}  // namespace rwre
