#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/likelihood.hpp"
#include "rwre/parallel.hpp"
#include "rwre/spectral.hpp"
#include "rwre/walk.hpp"

namespace rwre {

struct EstimateResult {
  ParamPoint theta_hat;
  double loglik_at_hat = kNegInf;
  std::vector<double> grid_step;     // per-coordinate grid resolution
  int refine_iterations = 0;
  std::vector<ParamPoint> ties;      // grid points within tie_tol of the grid max
};

struct MleOptions {
  int grid_points = 21;
  bool refine = true;
  double tie_tol = 1e-9;
  int max_refine_iter = 200;
  double simplex_tol = 1e-5;         // per-coordinate simplex diameter
  unsigned threads = 0;
  std::optional<std::vector<Interval>> box;  // defaults to the family box
};

namespace detail {

inline std::vector<double> grid_axis(Interval iv, int points) {
  std::vector<double> axis(points);
  double step = (iv.hi - iv.lo) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i) axis[i] = iv.lo + step * i;
  axis.back() = iv.hi;
  return axis;
}

inline ParamPoint clamp_to_box(ParamPoint p, const std::vector<Interval>& box) {
  for (std::size_t i = 0; i < box.size(); ++i)
    p.coords[i] = std::clamp(p.coords[i], box[i].lo, box[i].hi);
  return p;
}

// Nelder-Mead confined to the box by clamping every trial point. Returns the
// best vertex; never worse than the start value by construction.
template <class Objective>
std::pair<ParamPoint, double> simplex_descent(Objective&& value, ParamPoint start,
                                              double start_value,
                                              const std::vector<Interval>& box,
                                              std::span<const double> init_step,
                                              int max_iter, double tol, int& iterations) {
  const std::size_t d = start.dim();
  struct Vertex {
    ParamPoint x;
    double f;
  };
  std::vector<Vertex> simplex;
  simplex.push_back({start, start_value});
  for (std::size_t i = 0; i < d; ++i) {
    ParamPoint p = start;
    double h = init_step[i] != 0.0 ? init_step[i] : 1e-3;
    if (p.coords[i] + h > box[i].hi) h = -h;
    p.coords[i] += h;
    p = clamp_to_box(p, box);
    simplex.push_back({p, value(p)});
  }

  auto by_value = [](const Vertex& a, const Vertex& b) { return a.f > b.f; };  // maximize
  std::sort(simplex.begin(), simplex.end(), by_value);

  iterations = 0;
  for (; iterations < max_iter; ++iterations) {
    // stop once the simplex has collapsed in every coordinate
    double diameter = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double lo = simplex[0].x[i], hi = lo;
      for (const Vertex& v : simplex) {
        lo = std::min(lo, v.x[i]);
        hi = std::max(hi, v.x[i]);
      }
      diameter = std::max(diameter, hi - lo);
    }
    if (diameter < tol) break;

    ParamPoint centroid;
    centroid.coords.assign(d, 0.0);
    for (std::size_t v = 0; v + 1 < simplex.size(); ++v)
      for (std::size_t i = 0; i < d; ++i) centroid.coords[i] += simplex[v].x[i];
    for (std::size_t i = 0; i < d; ++i) centroid.coords[i] /= static_cast<double>(d);

    const Vertex& worst = simplex.back();
    auto blend = [&](double t) {
      ParamPoint p;
      p.coords.resize(d);
      for (std::size_t i = 0; i < d; ++i)
        p.coords[i] = centroid[i] + t * (centroid[i] - worst.x[i]);
      return clamp_to_box(std::move(p), box);
    };

    ParamPoint refl = blend(1.0);
    double f_refl = value(refl);
    if (f_refl > simplex[0].f) {
      ParamPoint expa = blend(2.0);
      double f_expa = value(expa);
      if (f_expa > f_refl)
        simplex.back() = {std::move(expa), f_expa};
      else
        simplex.back() = {std::move(refl), f_refl};
    } else if (f_refl > simplex[simplex.size() - 2].f) {
      simplex.back() = {std::move(refl), f_refl};
    } else {
      ParamPoint contr = blend(-0.5);
      double f_contr = value(contr);
      if (f_contr > worst.f) {
        simplex.back() = {std::move(contr), f_contr};
      } else {
        for (std::size_t v = 1; v < simplex.size(); ++v) {
          for (std::size_t i = 0; i < d; ++i)
            simplex[v].x.coords[i] = 0.5 * (simplex[v].x[i] + simplex[0].x[i]);
          simplex[v].f = value(simplex[v].x);
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(), by_value);
  }
  return {simplex[0].x, simplex[0].f};
}

struct GridScan {
  std::vector<std::vector<double>> axes;
  std::vector<ParamPoint> points;  // lexicographic in coordinates
  std::vector<double> values;
};

template <class Objective>
GridScan scan_grid(const std::vector<Interval>& box, int grid_points, unsigned threads,
                   Objective&& value) {
  if (grid_points < 5) throw ConfigError("grid_points_per_dim must be >= 5");
  GridScan scan;
  const std::size_t d = box.size();
  scan.axes.reserve(d);
  std::size_t total = 1;
  for (const Interval& iv : box) {
    scan.axes.push_back(grid_axis(iv, grid_points));
    total *= static_cast<std::size_t>(grid_points);
  }
  scan.points.resize(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    ParamPoint p;
    p.coords.resize(d);
    std::size_t rest = flat;
    for (std::size_t i = d; i-- > 0;) {
      p.coords[i] = scan.axes[i][rest % grid_points];
      rest /= grid_points;
    }
    scan.points[flat] = std::move(p);
  }
  scan.values.resize(total);
  parallel_for(total, threads, [&](std::size_t i) { scan.values[i] = value(scan.points[i]); });
  return scan;
}

}  // namespace detail

/// Maximizes l_n over the box: full grid scan, then optional simplex descent
/// from the best grid point. Grid ties within tie_tol are reported and broken
/// lexicographically (the scan order is lexicographic in coordinates).
inline EstimateResult mle(const CountsView& counts, const FamilySpec& family,
                          MleOptions opts = {}) {
  const std::vector<Interval>& box = opts.box ? *opts.box : family.box;
  if (box.size() != family.dim()) throw ConfigError("mle: box dimension mismatch");

  auto objective = [&](const ParamPoint& p) { return loglik(counts, family, p); };
  detail::GridScan scan = detail::scan_grid(box, opts.grid_points, opts.threads, objective);

  std::size_t best = 0;
  double max_value = scan.values[0];
  for (std::size_t i = 1; i < scan.values.size(); ++i)
    if (scan.values[i] > max_value) max_value = scan.values[i];
  if (max_value == kNegInf)
    throw DegenerateDataError("mle: criterion is -inf on the whole grid");
  // scan order is lexicographic, so the first exact maximum is the
  // lexicographically smallest one
  while (scan.values[best] != max_value) ++best;

  EstimateResult result;
  for (std::size_t i = 0; i < box.size(); ++i)
    result.grid_step.push_back((box[i].hi - box[i].lo) / static_cast<double>(opts.grid_points - 1));
  for (std::size_t i = 0; i < scan.values.size(); ++i)
    if (scan.values[i] >= max_value - opts.tie_tol) result.ties.push_back(scan.points[i]);

  result.theta_hat = scan.points[best];
  result.loglik_at_hat = max_value;

  if (opts.refine) {
    std::vector<double> half_step(result.grid_step);
    for (double& h : half_step) h *= 0.5;
    auto [refined, f_refined] = detail::simplex_descent(
        objective, result.theta_hat, result.loglik_at_hat, box, half_step, opts.max_refine_iter,
        opts.simplex_tol, result.refine_iterations);
    if (f_refined > result.loglik_at_hat) {
      result.theta_hat = refined;
      result.loglik_at_hat = f_refined;
    }
  }
  return result;
}

/// Normalized criterion l_n(theta)/n over the grid, for plotting and
/// identification checks.
struct ProfileTable {
  std::vector<ParamPoint> theta;
  std::vector<double> value;

  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < value.size(); ++i)
      if (value[i] > value[best]) best = i;
    return best;
  }
};

inline ProfileTable profile(const CountsView& counts, const FamilySpec& family,
                            int grid_points = 21, unsigned threads = 0,
                            std::optional<std::vector<Interval>> box_override = {}) {
  const std::vector<Interval>& box = box_override ? *box_override : family.box;
  auto objective = [&](const ParamPoint& p) { return loglik(counts, family, p); };
  detail::GridScan scan = detail::scan_grid(box, grid_points, threads, objective);
  ProfileTable table;
  table.theta = std::move(scan.points);
  table.value = std::move(scan.values);
  double inv_n = 1.0 / static_cast<double>(counts.n);
  for (double& v : table.value) v *= inv_n;
  return table;
}

struct ConsistencyRow {
  std::int64_t n = 0;
  std::size_t replicate = 0;
  double error = 0.0;  // euclidean distance to theta_star
  ParamPoint theta_hat;
};

struct ConsistencySummary {
  std::int64_t n = 0;
  double median = 0.0, q1 = 0.0, q3 = 0.0;
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;
  std::vector<ConsistencySummary> summary;  // in n_list order
  bool median_non_increasing = true;
  double gamma_hat = 0.0;  // ballisticity precheck output
  double gamma_se = 0.0;
};

namespace detail {

inline double quantile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Simulate-estimate loop: for each n and replicate, a fresh walk at
/// theta_star is simulated and the estimator error recorded. Aborts unless
/// the ballisticity precheck classifies theta_star as transient-right.
inline ConsistencyReport consistency_experiment(const FamilySpec& family,
                                                const ParamPoint& theta_star,
                                                std::span<const std::int64_t> n_list,
                                                std::size_t replicates, std::uint64_t seed,
                                                MleOptions mle_opts = {}, unsigned threads = 0,
                                                std::uint64_t precheck_steps = 200'000) {
  if (n_list.empty() || replicates == 0)
    throw ConfigError("consistency_experiment: need n_list and replicates");
  family.require_inside(theta_star);

  ConsistencyReport report;
  {
    RandomStream rng = RandomStream::substream(seed, mix_index(5, 0));
    LyapunovEstimate est = lyapunov(family, theta_star, precheck_steps, MatrixFamily::A, rng);
    report.gamma_hat = est.gamma;
    report.gamma_se = est.se;
    if (classify(est) != Regime::transient_right)
      throw ConfigError("consistency_experiment: theta_star failed the ballisticity precheck "
                        "(gamma_hat = " + std::to_string(est.gamma) + ", se = " +
                        std::to_string(est.se) + ")");
  }

  MleOptions inner = mle_opts;
  inner.threads = 1;  // replicates are the parallel axis
  report.rows.resize(n_list.size() * replicates);
  parallel_for(report.rows.size(), threads, [&](std::size_t task) {
    std::size_t ni = task / replicates;
    std::size_t rep = task % replicates;
    std::int64_t n = n_list[ni];
    RandomStream rng = RandomStream::substream(seed, mix_index(6 + ni, rep));
    WalkRecord rec = simulate_to(family, theta_star, n, rng);
    EstimateResult est = mle(CountsView::from_record(rec), family, inner);
    double err = 0.0;
    for (std::size_t i = 0; i < theta_star.dim(); ++i) {
      double d = est.theta_hat[i] - theta_star[i];
      err += d * d;
    }
    report.rows[task] = ConsistencyRow{n, rep, std::sqrt(err), est.theta_hat};
  });

  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    std::vector<double> errs;
    errs.reserve(replicates);
    for (std::size_t rep = 0; rep < replicates; ++rep)
      errs.push_back(report.rows[ni * replicates + rep].error);
    std::sort(errs.begin(), errs.end());
    report.summary.push_back(ConsistencySummary{n_list[ni], detail::quantile(errs, 0.5),
                                                detail::quantile(errs, 0.25),
                                                detail::quantile(errs, 0.75)});
  }
  for (std::size_t i = 1; i < report.summary.size(); ++i)
    if (report.summary[i].median > report.summary[i - 1].median)
      report.median_non_increasing = false;
  return report;
}

}  // namespace rwre
