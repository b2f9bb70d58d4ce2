#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "rwre/bpire.hpp"
#include "rwre/env.hpp"
#include "rwre/spectral.hpp"
#include "rwre/walk.hpp"
#include "support/test_support.hpp"

using namespace rwre;
using test_support::RunningStats;

namespace {

const FamilySpec kPoint = FamilySpec::point();
const ParamPoint kTheta{0.2, 0.1};
const SiteLaw kSite = SiteLaw::make(0.1, 0.2, 0.7);

FamilySpec wide_point() { return FamilySpec::point({{0.0, 0.55}, {0.0, 0.35}}); }

// spectral radius of B via the quadratic formula, the lyapunov oracle for
// point environments
double log_rho(const SiteLaw& s) {
  double a = s.a(), b = s.b();
  return std::log(((a + b) + std::sqrt((a + b) * (a + b) + 4.0 * b)) / 2.0);
}

// limit sums for a constant environment: S^i = e1 A (I - A)^{-1} e_i
SSums hat_s_closed_form(const SiteLaw& s) {
  Eigen::Matrix3d a = mat_a(s);
  Eigen::Matrix3d resolvent = (Eigen::Matrix3d::Identity() - a).inverse();
  Eigen::RowVector3d row = (a * resolvent).row(0);
  return SSums{row(0), row(1), row(2)};
}

double pi_closed_form(const SiteLaw& s) {
  Eigen::Matrix3d a = mat_a(s);
  Eigen::Vector3d w(2.0, 1.0, 2.0);
  Eigen::Vector3d y = (Eigen::Matrix3d::Identity() - a).lu().solve(w);
  return 1.0 + (a * y)(0);
}

std::vector<SiteLaw> random_sites(const FamilySpec& family, const ParamPoint& theta, int n,
                                  std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<SiteLaw> sites;
  sites.reserve(n);
  for (int i = 0; i < n; ++i) sites.push_back(sample_site(family, theta, rng));
  return sites;
}

}  // namespace

TEST_CASE("site matrices", "[spectral]") {
  MatView m = site_matrices(SiteLaw::make(0.0, 0.0, 1.0));
  REQUIRE(m.a3.isZero(0.0) == false);  // only the (2,3) entry is set
  REQUIRE(m.a3(1, 2) == 1.0);
  REQUIRE(m.a3.sum() == 1.0);
  REQUIRE(m.b2(1, 0) == 1.0);
  REQUIRE(m.b2.sum() == 1.0);

  MatView n = site_matrices(kSite);
  REQUIRE(n.a3(0, 0) == Catch::Approx(2.0 / 7.0).epsilon(1e-14));
  REQUIRE(n.a3(0, 1) == Catch::Approx(1.0 / 7.0).epsilon(1e-14));
  double a = 2.0 / 7.0, b = 1.0 / 7.0;
  REQUIRE(n.a3.row(0).sum() == Catch::Approx(a + b).epsilon(1e-14));
  REQUIRE(n.a3.row(1).sum() == Catch::Approx(a + b + 1.0).epsilon(1e-14));
  REQUIRE(n.a3.row(2).sum() == Catch::Approx(a + b).epsilon(1e-14));
  REQUIRE(n.b2(0, 0) == Catch::Approx(a + b).epsilon(1e-14));
}

TEST_CASE("lyapunov sentinel for the collapsing product", "[spectral]") {
  RandomStream rng(31);
  LyapunovEstimate est = lyapunov(wide_point(), ParamPoint{0.0, 0.0}, 10'000, MatrixFamily::A, rng);
  REQUIRE(est.gamma == kNegInf);
  REQUIRE(est.se == 0.0);
  REQUIRE(classify(est) == Regime::transient_right);
}

TEST_CASE("lyapunov rejects too-short products", "[spectral]") {
  RandomStream rng(32);
  REQUIRE_THROWS_AS(lyapunov(kPoint, kTheta, 9'999, MatrixFamily::A, rng), ConfigError);
}

TEST_CASE("lyapunov matches the point-family oracle", "[spectral]") {
  double oracle = log_rho(kSite);
  RandomStream ra(33), rb(34);
  LyapunovEstimate a = lyapunov(kPoint, kTheta, 1'000'000, MatrixFamily::A, ra);
  LyapunovEstimate b = lyapunov(kPoint, kTheta, 1'000'000, MatrixFamily::B, rb);
  REQUIRE(std::abs(a.gamma - oracle) < 5e-3);
  REQUIRE(std::abs(b.gamma - oracle) < 5e-3);
  double combined = std::sqrt(a.se * a.se + b.se * b.se);
  REQUIRE(std::abs(a.gamma - b.gamma) <= 3.0 * combined);
}

TEST_CASE("gamma_A equals gamma_B for random families", "[spectral]") {
  struct Case {
    FamilySpec family;
    ParamPoint theta;
  };
  const Case cases[] = {
      {FamilySpec::dirichlet(), ParamPoint{1, 1, 6}},
      {FamilySpec::finite_mixture(SiteLaw::make(0.1, 0.2, 0.7), SiteLaw::make(0.02, 0.08, 0.9)),
       ParamPoint{0.35}},
  };
  for (const auto& [family, theta] : cases) {
    RandomStream ra(35), rb(36);
    LyapunovEstimate a = lyapunov(family, theta, 1'000'000, MatrixFamily::A, ra);
    LyapunovEstimate b = lyapunov(family, theta, 1'000'000, MatrixFamily::B, rb);
    double combined = std::sqrt(a.se * a.se + b.se * b.se);
    REQUIRE(std::abs(a.gamma - b.gamma) <= 3.0 * combined);
    REQUIRE(classify(a) == Regime::transient_right);
  }
}

TEST_CASE("regime classification", "[spectral]") {
  REQUIRE(classify(-0.43, 0.003) == Regime::transient_right);
  REQUIRE(classify(0.0, 0.01) == Regime::recurrent_band);
  REQUIRE(classify(0.05, 0.01) == Regime::transient_left);
  REQUIRE(classify(kNegInf, 0.0) == Regime::transient_right);
  REQUIRE(classify(-0.01, 0.005) == Regime::recurrent_band);  // band straddles 0
}

TEST_CASE("A and B products agree on the (1,2) entry", "[spectral]") {
  // k = 1: both sides equal b
  REQUIRE(ab_bridge_check(std::vector<SiteLaw>{kSite}));
  // k = 5 random sites
  REQUIRE(ab_bridge_check(random_sites(FamilySpec::dirichlet(), ParamPoint{1, 1, 6}, 5, 37)));
  // k = 20 constant environment
  REQUIRE(ab_bridge_check(std::vector<SiteLaw>(20, kSite)));
}

TEST_CASE("s_sums for a single site", "[spectral]") {
  std::vector<SiteLaw> one{kSite};
  for (Orientation o : {Orientation::forward, Orientation::reversed}) {
    SSums s = s_sums(one, o);
    REQUIRE(s.s1 == Catch::Approx(kSite.a()).epsilon(1e-14));
    REQUIRE(s.s2 == Catch::Approx(kSite.b()).epsilon(1e-14));
    REQUIRE(s.s3 == 0.0);
  }
}

TEST_CASE("s_sums orientations coincide for a constant environment", "[spectral]") {
  std::vector<SiteLaw> sites(12, kSite);
  SSums fwd = s_sums(sites, Orientation::forward);
  SSums rev = s_sums(sites, Orientation::reversed);
  REQUIRE(fwd.s1 == Catch::Approx(rev.s1).epsilon(1e-12));
  REQUIRE(fwd.s2 == Catch::Approx(rev.s2).epsilon(1e-12));
  REQUIRE(fwd.s3 == Catch::Approx(rev.s3).epsilon(1e-12));
}

TEST_CASE("zn_pmf closed-form values", "[spectral]") {
  std::vector<SiteLaw> one{kSite};
  SSums s = s_sums(one, Orientation::reversed);
  REQUIRE(zn_pmf(one, GenVector{0, 0, 0}) == Catch::Approx(1.0 / s.total()).epsilon(1e-12));
  // P(Z_1 = (1,0,0)) = (a/S)(1/S) = 0.14 = offspring pmf of the lone immigrant
  REQUIRE(zn_pmf(one, GenVector{1, 0, 0}) == Catch::Approx(0.14).margin(1e-12));
  REQUIRE(zn_pmf(one, GenVector{1, 0, 0}) ==
          Catch::Approx(offspring_pmf(kSite, 1, GenVector{1, 0, 0})).margin(1e-12));

  // normalization at n = 3 under truncation
  std::vector<SiteLaw> three(3, kSite);
  double mass = 0.0;
  for (std::uint64_t z1 = 0; z1 <= 60; ++z1)
    for (std::uint64_t z2 = 0; z1 + z2 <= 60; ++z2)
      for (std::uint64_t z3 = 0; z1 + z2 + z3 <= 60; ++z3)
        mass += zn_pmf(three, GenVector{z1, z2, z3});
  REQUIRE(mass >= 1.0 - 1e-6);
}

TEST_CASE("invariant law of a point family matches the resolvent", "[spectral]") {
  InvariantTable table = invariant_dist(kPoint, kTheta, 8, TailOptions{}, 20, 38, 2);
  SSums oracle = hat_s_closed_form(kSite);
  REQUIRE(table.cap_hit_fraction == 0.0);
  for (const GenVector& v :
       {GenVector{0, 0, 0}, GenVector{1, 0, 0}, GenVector{2, 1, 1}, GenVector{0, 3, 2}}) {
    double expected = multivariate_geometric_pmf(oracle, v);
    REQUIRE(table.at(v.z1, v.z2, v.z3) == Catch::Approx(expected).margin(1e-9));
    // identical environments: se is zero up to one-pass variance cancellation
    REQUIRE(table.se[table.index(v.z1, v.z2, v.z3)] < 1e-8);
  }
  double p000 = table.at(0, 0, 0);
  REQUIRE(p000 > 0.0);
  REQUIRE(p000 < 1.0);
}

TEST_CASE("invariant table mass for a random family", "[spectral]") {
  InvariantTable table =
      invariant_dist(FamilySpec::dirichlet(), ParamPoint{1, 1, 6}, 400, TailOptions{}, 80, 39, 2);
  REQUIRE(table.total_mass() >= 1.0 - 1e-3);
  REQUIRE_FALSE(table.truncation_warning);
}

TEST_CASE("speed closed forms", "[spectral]") {
  SpeedEstimate unit = speed(wide_point(), ParamPoint{0.0, 0.0}, 100, TailOptions{}, 40, 2);
  REQUIRE(unit.speed == 1.0);
  REQUIRE(unit.pi_mean == 1.0);

  SpeedEstimate point = speed(kPoint, kTheta, 100, TailOptions{}, 41, 2);
  double pi_oracle = pi_closed_form(kSite);
  REQUIRE(pi_oracle == Catch::Approx(10.0 / 3.0).epsilon(1e-12));
  REQUIRE(point.pi_mean == Catch::Approx(pi_oracle).epsilon(1e-10));
  REQUIRE(point.speed == Catch::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("point-family speed agrees with a long simulation", "[spectral]") {
  RandomStream rng(42);
  const std::uint64_t t = 1'000'000;
  std::int64_t x = position_after(kPoint, kTheta, t, rng);
  double simulated = static_cast<double>(x) / static_cast<double>(t);
  REQUIRE(std::abs(simulated - 0.3) / 0.3 < 0.01);
}

TEST_CASE("dirichlet speed is ballistic and matches walk hitting times", "[spectral]") {
  FamilySpec dir = FamilySpec::dirichlet();
  ParamPoint theta{1, 1, 6};
  SpeedEstimate est = speed(dir, theta, 20'000, TailOptions{}, 43, 2);
  REQUIRE(est.speed > 0.0);
  REQUIRE(est.speed < 1.0);

  RunningStats tn_over_n;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    RandomStream rng = RandomStream::substream(44, rep);
    WalkRecord rec = simulate_to(dir, theta, 2000, rng);
    tn_over_n.add(static_cast<double>(rec.t_n) / 2000.0);
  }
  double combined = std::sqrt(tn_over_n.stderr_of_mean() * tn_over_n.stderr_of_mean() +
                              est.pi_se * est.pi_se);
  REQUIRE(std::abs(tn_over_n.mean() - est.pi_mean) <= 2.0 * combined);
}

TEST_CASE("expected hitting time", "[spectral]") {
  SiteLaw right = SiteLaw::make(0.0, 0.0, 1.0);
  REQUIRE(expected_hitting([&](std::int64_t) { return right; }, 10) == 10.0);

  double e100 = expected_hitting([&](std::int64_t) { return kSite; }, 100);
  REQUIRE(std::abs(e100 / 100.0 - 10.0 / 3.0) / (10.0 / 3.0) < 0.01);

  // annealed mean of t_n across quenched point environments
  double e50 = expected_hitting([&](std::int64_t) { return kSite; }, 50);
  RunningStats stats;
  for (std::uint64_t rep = 0; rep < 1000; ++rep) {
    RandomStream rng = RandomStream::substream(45, rep);
    stats.add(static_cast<double>(simulate_to(kPoint, kTheta, 50, rng).t_n));
  }
  REQUIRE(std::abs(stats.mean() - e50) <= 3.0 * stats.stderr_of_mean());
}

TEST_CASE("averaged pmf is orientation-free over random environments", "[spectral]") {
  FamilySpec dir = FamilySpec::dirichlet();
  ParamPoint theta{1, 1, 6};
  const int n = 5, envs = 10'000, v_cap = 4;

  std::vector<GenVector> vs;
  for (std::uint64_t z1 = 0; z1 <= v_cap; ++z1)
    for (std::uint64_t z2 = 0; z1 + z2 <= v_cap; ++z2)
      for (std::uint64_t z3 = 0; z1 + z2 + z3 <= v_cap; ++z3) vs.push_back({z1, z2, z3});

  std::vector<RunningStats> rev(vs.size()), fwd(vs.size());
  for (int e = 0; e < envs; ++e) {
    std::vector<SiteLaw> sites = random_sites(dir, theta, n, 46'000 + e);
    SSums sr = s_sums(sites, Orientation::reversed);
    SSums sf = s_sums(sites, Orientation::forward);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      rev[i].add(multivariate_geometric_pmf(sr, vs[i]));
      fwd[i].add(multivariate_geometric_pmf(sf, vs[i]));
    }
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    double combined = std::sqrt(rev[i].stderr_of_mean() * rev[i].stderr_of_mean() +
                                fwd[i].stderr_of_mean() * fwd[i].stderr_of_mean());
    REQUIRE(std::abs(rev[i].mean() - fwd[i].mean()) <= 3.0 * combined + 1e-12);
  }
}

TEST_CASE("annealed law of Z_30 approaches the invariant table", "[spectral]") {
  FamilySpec dir = FamilySpec::dirichlet();
  ParamPoint theta{1, 1, 6};
  const int envs = 2000, per_env = 30, v_max = 40;
  InvariantTable table = invariant_dist(dir, theta, envs, TailOptions{}, v_max, 47, 2);

  // annealed law of Z_30: several trajectories per sampled environment keep
  // the per-atom noise below the environment-sampling error
  std::unordered_map<GenVector, std::uint64_t, GenVectorHash> hist;
  const double total = double(envs) * per_env;
  for (int e = 0; e < envs; ++e) {
    RandomStream rng = RandomStream::substream(48, e);
    std::vector<SiteLaw> sites;
    for (int k = 0; k < 30; ++k) sites.push_back(sample_site(dir, theta, rng));
    for (int j = 0; j < per_env; ++j) ++hist[simulate_Z(sites, rng).back()];
  }
  double abs_sum = 0.0, emp_outside = 0.0;
  for (std::uint64_t z1 = 0; z1 <= v_max; ++z1)
    for (std::uint64_t z2 = 0; z1 + z2 <= v_max; ++z2)
      for (std::uint64_t z3 = 0; z1 + z2 + z3 <= v_max; ++z3) {
        auto it = hist.find(GenVector{z1, z2, z3});
        double p = it == hist.end() ? 0.0 : it->second / total;
        abs_sum += std::abs(p - table.at(z1, z2, z3));
      }
  for (const auto& [v, count] : hist)
    if (v.total() > static_cast<std::uint64_t>(v_max)) emp_outside += count / total;
  double tv = 0.5 * (abs_sum + emp_outside + (1.0 - table.total_mass()));
  REQUIRE(tv < 0.05);  // acceptance runs the full-size version of this check
}
