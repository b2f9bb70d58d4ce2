#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rwre/errors.hpp"
#include "rwre/random.hpp"

namespace rwre {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// One site's jump law (probabilities of jumps -2, -1, +1).
struct SiteLaw {
  double w_m2 = 0.0;
  double w_m1 = 0.0;
  double w_p1 = 1.0;

  double a() const { return w_m1 / w_p1; }
  double b() const { return w_m2 / w_p1; }

  void validate() const {
    double sum = w_m2 + w_m1 + w_p1;
    if (w_m2 < 0.0 || w_m1 < 0.0 || !(w_p1 > 0.0))
      throw DomainError("SiteLaw: probabilities must be >= 0 with w_p1 > 0");
    if (std::abs(sum - 1.0) > 1e-12)
      throw DomainError("SiteLaw: probabilities must sum to 1 (got " + std::to_string(sum) + ")");
  }

  static SiteLaw make(double m2, double m1, double p1) {
    SiteLaw law{m2, m1, p1};
    law.validate();
    return law;
  }

  /// One quenched jump: -2, -1 or +1.
  int draw_jump(RandomStream& rng) const {
    double u = rng.uniform();
    if (u < w_m2) return -2;
    if (u < w_m2 + w_m1) return -1;
    return +1;
  }

  bool operator==(const SiteLaw&) const = default;
};

struct ParamPoint {
  std::vector<double> coords;

  ParamPoint() = default;
  ParamPoint(std::initializer_list<double> c) : coords(c) {}
  explicit ParamPoint(std::vector<double> c) : coords(std::move(c)) {}

  std::size_t dim() const { return coords.size(); }
  double operator[](std::size_t i) const { return coords[i]; }
  bool operator==(const ParamPoint&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

enum class FamilyKind { dirichlet, point, finite_mixture };

inline const char* to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::dirichlet: return "dirichlet";
    case FamilyKind::point: return "point";
    case FamilyKind::finite_mixture: return "finite-mixture";
  }
  return "?";
}

/// Parametric family nu_theta of site laws over a compact box Theta.
///
/// dirichlet: theta = (t1,t2,t3), density on the simplex proportional to
///   a1^{t1-1} a2^{t2-1} (1-a1-a2)^{t3-1} with a1 = w(-1), a2 = w(-2).
/// point: theta = (w(-1), w(-2)), a single deterministic site law.
/// finite-mixture: theta = mixture weight of atom1 (atom2 has weight 1-theta).
struct FamilySpec {
  FamilyKind kind = FamilyKind::point;
  std::vector<Interval> box;
  SiteLaw atom1, atom2;  // finite_mixture only

  static FamilySpec dirichlet(std::vector<Interval> box = {{0.1, 20.0}, {0.1, 20.0}, {0.1, 20.0}}) {
    FamilySpec f;
    f.kind = FamilyKind::dirichlet;
    f.box = std::move(box);
    f.validate();
    return f;
  }

  static FamilySpec point(std::vector<Interval> box = {{0.01, 0.45}, {0.01, 0.45}}) {
    FamilySpec f;
    f.kind = FamilyKind::point;
    f.box = std::move(box);
    f.validate();
    return f;
  }

  static FamilySpec finite_mixture(SiteLaw a1, SiteLaw a2, Interval box = {0.01, 0.99}) {
    FamilySpec f;
    f.kind = FamilyKind::finite_mixture;
    f.box = {box};
    f.atom1 = a1;
    f.atom2 = a2;
    f.validate();
    return f;
  }

  std::size_t dim() const { return box.size(); }

  void validate() const {
    if (box.empty()) throw DomainError("FamilySpec: empty box");
    for (const auto& iv : box) {
      if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi))
        throw DomainError("FamilySpec: box bounds must be finite with lo < hi");
    }
    switch (kind) {
      case FamilyKind::dirichlet:
        if (box.size() != 3) throw DomainError("dirichlet family requires a 3-d box");
        for (const auto& iv : box)
          if (!(iv.lo > 0.0)) throw DomainError("dirichlet box coordinates must be > 0");
        break;
      case FamilyKind::point:
        if (box.size() != 2) throw DomainError("point family requires a 2-d box");
        for (const auto& iv : box)
          if (iv.lo < 0.0) throw DomainError("point box coordinates must be >= 0");
        if (!(box[0].hi + box[1].hi < 1.0))
          throw DomainError("point box must enforce w(-1) + w(-2) < 1");
        break;
      case FamilyKind::finite_mixture:
        if (box.size() != 1) throw DomainError("finite-mixture family requires a 1-d box");
        if (box[0].lo < 0.01 || box[0].hi > 0.99)
          throw DomainError("finite-mixture box must lie within [0.01, 0.99]");
        atom1.validate();
        atom2.validate();
        if (atom1 == atom2)
          throw DomainError("finite-mixture atoms must differ (weight unidentifiable otherwise)");
        break;
    }
  }

  bool contains(const ParamPoint& theta) const {
    if (theta.dim() != dim()) return false;
    for (std::size_t i = 0; i < box.size(); ++i)
      if (theta[i] < box[i].lo || theta[i] > box[i].hi) return false;
    return true;
  }

  void require_inside(const ParamPoint& theta) const {
    if (!contains(theta))
      throw DomainError(std::string("theta outside the ") + to_string(kind) + " family box");
  }
};

/// One i.i.d. draw of a site law from nu_theta.
inline SiteLaw sample_site(const FamilySpec& family, const ParamPoint& theta, RandomStream& rng) {
  family.require_inside(theta);
  switch (family.kind) {
    case FamilyKind::point:
      return SiteLaw{theta[1], theta[0], 1.0 - theta[0] - theta[1]};
    case FamilyKind::finite_mixture:
      return rng.uniform() < theta[0] ? family.atom1 : family.atom2;
    case FamilyKind::dirichlet: {
      for (int attempt = 0; attempt < 100; ++attempt) {
        double g1 = rng.gamma(theta[0]);
        double g2 = rng.gamma(theta[1]);
        double g3 = rng.gamma(theta[2]);
        double s = g1 + g2 + g3;
        if (!(s > 0.0) || !(g3 / s > 0.0)) continue;  // gamma underflow, redraw
        return SiteLaw{g2 / s, g1 / s, g3 / s};
      }
      throw NumericError("dirichlet sampling underflow: shape parameters too small");
    }
  }
  throw DomainError("unknown family kind");
}

namespace detail {

// log of a1^y1 a2^y2 (1-a1-a2)^r at a fixed site law, with 0^0 = 1.
inline double log_point_moment(const SiteLaw& s, std::uint64_t y1, std::uint64_t y2,
                               std::uint64_t r) {
  double acc = 0.0;
  if (y1 > 0) {
    if (s.w_m1 <= 0.0) return kNegInf;
    acc += static_cast<double>(y1) * std::log(s.w_m1);
  }
  if (y2 > 0) {
    if (s.w_m2 <= 0.0) return kNegInf;
    acc += static_cast<double>(y2) * std::log(s.w_m2);
  }
  if (r > 0) acc += static_cast<double>(r) * std::log(s.w_p1);
  return acc;
}

}  // namespace detail

/// log of the moment integral  int a1^y1 a2^y2 (1-a1-a2)^r dnu_theta(a1,a2),
/// the quantity every likelihood term reduces to. Always <= 0.
inline double log_moment(const FamilySpec& family, const ParamPoint& theta, std::uint64_t y1,
                         std::uint64_t y2, std::uint64_t r) {
  family.require_inside(theta);
  switch (family.kind) {
    case FamilyKind::point: {
      SiteLaw s{theta[1], theta[0], 1.0 - theta[0] - theta[1]};
      return detail::log_point_moment(s, y1, y2, r);
    }
    case FamilyKind::finite_mixture: {
      double la = detail::log_point_moment(family.atom1, y1, y2, r);
      double lb = detail::log_point_moment(family.atom2, y1, y2, r);
      double wa = std::log(theta[0]), wb = std::log1p(-theta[0]);
      double x = wa + la, y = wb + lb;
      if (x == kNegInf) return y;
      if (y == kNegInf) return x;
      double hi = std::max(x, y);
      return hi + std::log1p(std::exp(std::min(x, y) - hi));
    }
    case FamilyKind::dirichlet: {
      double t1 = theta[0], t2 = theta[1], t3 = theta[2];
      double ts = t1 + t2 + t3;
      double cs = static_cast<double>(y1) + static_cast<double>(y2) + static_cast<double>(r);
      return std::lgamma(t1 + static_cast<double>(y1)) + std::lgamma(t2 + static_cast<double>(y2)) +
             std::lgamma(t3 + static_cast<double>(r)) - std::lgamma(ts + cs) -
             std::lgamma(t1) - std::lgamma(t2) - std::lgamma(t3) + std::lgamma(ts);
    }
  }
  throw DomainError("unknown family kind");
}

}  // namespace rwre
