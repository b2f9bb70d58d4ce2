#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"

namespace rwre {

/// Plain-text run configuration: `section.key = value` lines, `#` comments.
/// Unknown keys are rejected.
class RunConfig {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "family.kind",        "family.box",          "family.theta",
        "family.atom1",       "family.atom2",        "run.seed",
        "run.threads",        "walk.n",              "walk.step_cap_factor",
        "walk.path_cap",      "estimate.grid",       "estimate.refine",
        "bpire.n",            "bpire.replicates",    "invariant.env_samples",
        "invariant.v_max",    "invariant.tail_tol",  "invariant.k_cap",
        "kernel.x",           "kernel.samples",      "speed.env_samples",
        "speed.tail_tol",     "lyapunov.steps",      "lyapunov.which",
        "consistency.n_list", "consistency.replicates", "loglik.theta",
    };
    return keys;
  }

  static RunConfig parse(std::istream& is) {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    std::ostringstream raw;
    while (std::getline(is, line)) {
      ++line_no;
      raw << line << '\n';
      std::string body = line.substr(0, line.find('#'));
      std::string trimmed = trim(body);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (!known_keys().count(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      if (cfg.values_.count(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      cfg.values_[key] = value;
    }
    cfg.raw_text_ = raw.str();
    if (!cfg.values_.count("run.seed"))
      throw ConfigError("config: run.seed is required (no entropy default)");
    cfg.seed();     // validate eagerly
    cfg.threads();
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::uint64_t get_u64(const std::string& key) const {
    return parse_u64(key, get_string(key));
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return parse_double(key, get_string(key));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' must be a boolean, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split(get_string(key), ','))
      out.push_back(parse_double(key, item));
    return out;
  }

  std::vector<std::int64_t> get_i64s(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const std::string& item : split(get_string(key), ',')) {
      try {
        out.push_back(std::stoll(trim(item)));
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has a non-integer entry '" + item + "'");
      }
    }
    return out;
  }

  std::uint64_t seed() const { return get_u64("run.seed"); }

  unsigned threads() const {
    std::string v = get_string("run.threads", "auto");
    if (v == "auto") return 0;
    std::uint64_t t = parse_u64("run.threads", v);
    if (t == 0 || t > 4096) throw ConfigError("config: run.threads must be in [1, 4096] or auto");
    return static_cast<unsigned>(t);
  }

  /// Family section -> validated FamilySpec. Box entries are `lo:hi` pairs,
  /// atoms are `w_m2, w_m1, w_p1` triples.
  FamilySpec family() const {
    std::string kind = get_string("family.kind");
    std::vector<Interval> box;
    if (has("family.box")) {
      for (const std::string& item : split(get_string("family.box"), ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
          throw ConfigError("config: family.box entries must be lo:hi pairs");
        box.push_back(Interval{parse_double("family.box", item.substr(0, colon)),
                               parse_double("family.box", item.substr(colon + 1))});
      }
    }
    if (kind == "dirichlet")
      return box.empty() ? FamilySpec::dirichlet() : FamilySpec::dirichlet(box);
    if (kind == "point")
      return box.empty() ? FamilySpec::point() : FamilySpec::point(box);
    if (kind == "finite-mixture") {
      SiteLaw a1 = parse_atom("family.atom1");
      SiteLaw a2 = parse_atom("family.atom2");
      return box.empty() ? FamilySpec::finite_mixture(a1, a2)
                         : FamilySpec::finite_mixture(a1, a2, box.at(0));
    }
    throw ConfigError("config: family.kind must be dirichlet, point or finite-mixture");
  }

  ParamPoint theta(const std::string& key = "family.theta") const {
    return ParamPoint(get_doubles(key));
  }

  const std::string& raw_text() const { return raw_text_; }

  /// FNV-1a hash of the raw config text, recorded in run manifests.
  std::uint64_t content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : raw_text_) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      std::size_t used = 0;
      std::uint64_t x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing characters");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' must be an unsigned integer, got '" + v + "'");
    }
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double x = std::stod(trim(v), &used);
      if (used != trim(v).size()) throw std::invalid_argument("trailing characters");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' must be numeric, got '" + v + "'");
    }
  }

  SiteLaw parse_atom(const std::string& key) const {
    std::vector<double> w = get_doubles(key);
    if (w.size() != 3)
      throw ConfigError("config: " + key + " must be 'w_m2, w_m1, w_p1'");
    return SiteLaw::make(w[0], w[1], w[2]);
  }

  std::map<std::string, std::string> values_;
  std::string raw_text_;
};

/// Writes a family back out as its config section, parseable by
/// RunConfig::family().
inline void serialize_family(std::ostream& os, const FamilySpec& family) {
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  os << "family.kind = " << to_string(family.kind) << '\n';
  os << "family.box = ";
  for (std::size_t i = 0; i < family.box.size(); ++i)
    os << (i ? ", " : "") << num(family.box[i].lo) << ':' << num(family.box[i].hi);
  os << '\n';
  if (family.kind == FamilyKind::finite_mixture) {
    os << "family.atom1 = " << num(family.atom1.w_m2) << ", " << num(family.atom1.w_m1) << ", "
       << num(family.atom1.w_p1) << '\n';
    os << "family.atom2 = " << num(family.atom2.w_m2) << ", " << num(family.atom2.w_m1) << ", "
       << num(family.atom2.w_p1) << '\n';
  }
}

}  // namespace rwre
