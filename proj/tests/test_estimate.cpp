#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/estimate.hpp"
#include "rwre/likelihood.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

const FamilySpec kPoint = FamilySpec::point();
const ParamPoint kTheta{0.2, 0.1};

CountsView zero_counts(std::int64_t n) {
  CountsView cv;
  cv.n = n;
  cv.pairs.assign(static_cast<std::size_t>(n) + 2, PairCounts{});
  return cv;
}

// closed-form argmax of the point-family criterion: jump frequencies of the
// substituted counts
ParamPoint point_frequency_mle(const CountsView& counts) {
  double c1 = 0.0, c2 = 0.0, rr = 0.0;
  for (std::int64_t x = 0; x < counts.n; ++x) {
    c1 += static_cast<double>(counts.at(x).l1);
    c2 += static_cast<double>(counts.at(x).l2);
    rr += static_cast<double>(counts.at(x + 1).l1 + counts.at(x + 1).l2 + counts.at(x + 2).l2 + 1);
  }
  double total = c1 + c2 + rr;
  return ParamPoint{c1 / total, c2 / total};
}

}  // namespace

TEST_CASE("mle recovers the point parameter from one long walk", "[estimate]") {
  RandomStream rng(800);
  WalkRecord rec = simulate_to(kPoint, kTheta, 10'000, rng);
  CountsView counts = CountsView::from_record(rec);

  MleOptions opts;
  opts.threads = 2;
  EstimateResult est = mle(counts, kPoint, opts);

  ParamPoint oracle = point_frequency_mle(counts);
  REQUIRE(std::abs(est.theta_hat[0] - oracle[0]) < 1e-3);  // simplex tolerance scale
  REQUIRE(std::abs(est.theta_hat[1] - oracle[1]) < 1e-3);
  REQUIRE(std::abs(est.theta_hat[0] - kTheta[0]) < est.grid_step[0]);
  REQUIRE(std::abs(est.theta_hat[1] - kTheta[1]) < est.grid_step[1]);
  REQUIRE(est.loglik_at_hat >= loglik(counts, kPoint, est.ties.front()));
}

TEST_CASE("all-zero counts push the estimate to the low corner", "[estimate]") {
  CountsView counts = zero_counts(40);
  EstimateResult est = mle(counts, kPoint);
  REQUIRE(est.theta_hat[0] == Catch::Approx(kPoint.box[0].lo).margin(1e-4));
  REQUIRE(est.theta_hat[1] == Catch::Approx(kPoint.box[1].lo).margin(1e-4));
}

TEST_CASE("swapping count columns swaps the symmetric-family estimate", "[estimate]") {
  // sites 2..n+1 carry symmetric pairs so the substituted right-jump exponent
  // (which reads l2 two sites ahead) is itself swap-invariant
  CountsView a = zero_counts(6);
  a.pairs[0] = {3, 1};
  a.pairs[1] = {2, 0};
  a.pairs[2] = {2, 2};
  a.pairs[3] = {1, 1};
  a.pairs[4] = {3, 3};
  CountsView b = a;
  for (auto& p : b.pairs) std::swap(p.l1, p.l2);

  FamilySpec dir = FamilySpec::dirichlet();  // box symmetric in the first two coordinates
  MleOptions opts;
  opts.grid_points = 9;
  opts.refine = false;
  EstimateResult ea = mle(a, dir, opts);
  EstimateResult eb = mle(b, dir, opts);
  REQUIRE(ea.theta_hat[0] == eb.theta_hat[1]);
  REQUIRE(ea.theta_hat[1] == eb.theta_hat[0]);
  REQUIRE(ea.theta_hat[2] == eb.theta_hat[2]);
}

TEST_CASE("near-flat criterion reports all grid ties", "[estimate]") {
  RandomStream rng(801);
  WalkRecord rec = simulate_to(kPoint, kTheta, 20, rng);
  CountsView counts = CountsView::from_record(rec);

  MleOptions opts;
  opts.grid_points = 5;
  opts.refine = false;
  opts.box = std::vector<Interval>{{0.2, 0.2 + 1e-12}, {0.2, 0.2 + 1e-12}};
  EstimateResult est = mle(counts, kPoint, opts);
  REQUIRE(est.ties.size() == 25);  // every grid point is within tie_tol of the max
  REQUIRE(est.theta_hat[0] == 0.2);
  REQUIRE(est.theta_hat[1] == 0.2);  // lexicographically smallest tie
}

TEST_CASE("mle input validation and degenerate data", "[estimate]") {
  CountsView counts = zero_counts(10);
  MleOptions opts;
  opts.grid_points = 4;
  REQUIRE_THROWS_AS(mle(counts, kPoint, opts), ConfigError);

  // no theta in the box can explain a -1 jump when both atoms forbid it
  FamilySpec blind = FamilySpec::finite_mixture(SiteLaw::make(0.1, 0.0, 0.9),
                                                SiteLaw::make(0.2, 0.0, 0.8));
  CountsView impossible = zero_counts(10);
  impossible.pairs[3] = PairCounts{2, 0};
  REQUIRE_THROWS_AS(mle(impossible, blind), DegenerateDataError);
}

TEST_CASE("estimates are reproducible across thread counts", "[estimate]") {
  RandomStream rng(802);
  WalkRecord rec = simulate_to(FamilySpec::dirichlet(), ParamPoint{1, 1, 6}, 300, rng);
  CountsView counts = CountsView::from_record(rec);

  MleOptions one;
  one.grid_points = 7;
  one.threads = 1;
  MleOptions four = one;
  four.threads = 4;
  EstimateResult ea = mle(counts, FamilySpec::dirichlet(), one);
  EstimateResult eb = mle(counts, FamilySpec::dirichlet(), four);
  EstimateResult ec = mle(counts, FamilySpec::dirichlet(), four);
  REQUIRE(ea.theta_hat.coords == eb.theta_hat.coords);
  REQUIRE(eb.theta_hat.coords == ec.theta_hat.coords);
  REQUIRE(ea.loglik_at_hat == eb.loglik_at_hat);
  REQUIRE(ea.ties.size() == eb.ties.size());
}

TEST_CASE("profile argmax matches the grid stage of mle", "[estimate]") {
  RandomStream rng(803);
  WalkRecord rec = simulate_to(kPoint, kTheta, 500, rng);
  CountsView counts = CountsView::from_record(rec);

  ProfileTable table = profile(counts, kPoint, 11, 2);
  MleOptions opts;
  opts.grid_points = 11;
  opts.refine = false;
  EstimateResult est = mle(counts, kPoint, opts);
  REQUIRE(table.theta[table.argmax()].coords == est.theta_hat.coords);
  // profile stores the normalized criterion
  REQUIRE(table.value[table.argmax()] ==
          Catch::Approx(est.loglik_at_hat / 500.0).epsilon(1e-12));
}

TEST_CASE("profiles of independent walks at the same theta agree", "[estimate]") {
  // measured concentration: worst pointwise gap ~0.28 at n = 10^4 (the count
  // sums fluctuate ~0.01-0.04 per site and meet |log| coefficients up to ~3),
  // dropping to 0.02-0.06 at n = 1.6*10^5 on a box of moderate log range
  {
    RandomStream ra(804), rb(805);
    CountsView ca = CountsView::from_record(simulate_to(kPoint, kTheta, 10'000, ra));
    CountsView cb = CountsView::from_record(simulate_to(kPoint, kTheta, 10'000, rb));
    ProfileTable pa = profile(ca, kPoint, 11, 2);
    ProfileTable pb = profile(cb, kPoint, 11, 2);
    for (std::size_t i = 0; i < pa.value.size(); ++i)
      REQUIRE(std::abs(pa.value[i] - pb.value[i]) < 0.45);
  }
  {
    FamilySpec fam = FamilySpec::point({{0.12, 0.30}, {0.04, 0.18}});
    RandomStream ra(812), rb(813);
    CountsView ca = CountsView::from_record(simulate_to(fam, kTheta, 160'000, ra));
    CountsView cb = CountsView::from_record(simulate_to(fam, kTheta, 160'000, rb));
    ProfileTable pa = profile(ca, fam, 11, 2);
    ProfileTable pb = profile(cb, fam, 11, 2);
    for (std::size_t i = 0; i < pa.value.size(); ++i)
      REQUIRE(std::abs(pa.value[i] - pb.value[i]) < 0.10);
  }
}

TEST_CASE("profile spread shrinks with the walk length", "[estimate]") {
  auto spread = [&](std::int64_t n, std::uint64_t seed_base) {
    std::vector<ProfileTable> tables;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
      RandomStream rng = RandomStream::substream(seed_base, rep);
      tables.push_back(
          profile(CountsView::from_record(simulate_to(kPoint, kTheta, n, rng)), kPoint, 9, 2));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < tables[0].value.size(); ++i) {
      double lo = tables[0].value[i], hi = lo;
      for (const ProfileTable& t : tables) {
        lo = std::min(lo, t.value[i]);
        hi = std::max(hi, t.value[i]);
      }
      worst = std::max(worst, hi - lo);
    }
    return worst;
  };
  REQUIRE(spread(10'000, 806) < spread(100, 807));
}

TEST_CASE("consistency experiment aborts for a non-ballistic parameter", "[estimate]") {
  FamilySpec family = FamilySpec::point({{0.0, 0.55}, {0.0, 0.35}});
  std::vector<std::int64_t> ns{100};
  REQUIRE_THROWS_AS(
      consistency_experiment(family, ParamPoint{0.5, 0.3}, ns, 2, 808),
      ConfigError);
}

TEST_CASE("consistency experiment report structure", "[estimate]") {
  std::vector<std::int64_t> ns{200, 2000};
  MleOptions opts;
  opts.grid_points = 11;
  ConsistencyReport report = consistency_experiment(kPoint, kTheta, ns, 6, 809, opts, 2);
  REQUIRE(report.rows.size() == 12);
  REQUIRE(report.summary.size() == 2);
  REQUIRE(report.gamma_hat < 0.0);
  for (const ConsistencyRow& row : report.rows) {
    REQUIRE(row.error >= 0.0);
    REQUIRE(kPoint.contains(row.theta_hat));
  }
  // medians recomputed by hand from the rows
  for (std::size_t ni = 0; ni < 2; ++ni) {
    std::vector<double> errs;
    for (std::size_t rep = 0; rep < 6; ++rep) errs.push_back(report.rows[ni * 6 + rep].error);
    std::sort(errs.begin(), errs.end());
    double median = 0.5 * (errs[2] + errs[3]);
    REQUIRE(report.summary[ni].median == Catch::Approx(median).margin(1e-15));
    REQUIRE(report.summary[ni].q1 <= report.summary[ni].median);
    REQUIRE(report.summary[ni].median <= report.summary[ni].q3);
  }

  // thread-count invariance of the whole report
  ConsistencyReport again = consistency_experiment(kPoint, kTheta, ns, 6, 809, opts, 1);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    REQUIRE(report.rows[i].error == again.rows[i].error);
    REQUIRE(report.rows[i].theta_hat.coords == again.rows[i].theta_hat.coords);
  }
}
