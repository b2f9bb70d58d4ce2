// Command-line surface tying the library into reproducible pipelines.
// Every run reads a plain-text config, derives all randomness from run.seed,
// and writes tab-separated tables plus a manifest into --out.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/rwre.hpp"

namespace fs = std::filesystem;
using namespace rwre;

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

struct RunContext {
  RunConfig config;
  fs::path out_dir;
  std::string command;
  std::string args_line;
  unsigned threads = 0;

  std::ofstream open_out(const std::string& name) const {
    std::ofstream os(out_dir / name);
    if (!os) throw ConfigError("cannot open output file: " + (out_dir / name).string());
    return os;
  }

  void write_manifest() const {
    std::ofstream os = open_out("manifest.tsv");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016" PRIx64, config.content_hash());
    os << "key\tvalue\n"
       << "tool\trwre " << kVersion << "\n"
       << "command\t" << command << "\n"
       << "args\t" << args_line << "\n"
       << "config_hash\t" << hash << "\n"
       << "seed\t" << config.seed() << "\n";
  }
};

RunContext make_context(const std::string& config_path, const std::string& out_path,
                        std::string command, int argc, char** argv) {
  std::ifstream is(config_path);
  if (!is) throw ConfigError("cannot open config file: " + config_path);
  RunContext ctx{RunConfig::parse(is), fs::path(out_path), std::move(command), "", 0};
  // record the semantic arguments only: paths vary between runs that should
  // produce byte-identical outputs (the config itself is covered by its hash)
  std::ostringstream args;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" || arg == "--out") {
      ++i;
      continue;
    }
    if (!args.str().empty()) args << ' ';
    args << arg;
  }
  ctx.args_line = args.str();
  ctx.threads = ctx.config.threads();
  fs::create_directories(ctx.out_dir);
  return ctx;
}

void require_ballistic(const RunContext& ctx, const FamilySpec& family, const ParamPoint& theta) {
  RandomStream rng = RandomStream::substream(ctx.config.seed(), mix_index(99, 0));
  LyapunovEstimate est = lyapunov(family, theta, 200'000, MatrixFamily::A, rng);
  if (classify(est) != Regime::transient_right)
    throw ConfigError("family.theta failed the ballisticity check (gamma_hat = " +
                      fmt(est.gamma) + ", se = " + fmt(est.se) + ", regime = " +
                      to_string(classify(est)) + ")");
}

GenVector parse_gen_vector(const std::string& text) {
  std::istringstream ss(text);
  std::uint64_t z1, z2, z3;
  char c1, c2;
  if (!(ss >> z1 >> c1 >> z2 >> c2 >> z3) || c1 != ',' || c2 != ',')
    throw ConfigError("expected a 'z1,z2,z3' vector, got '" + text + "'");
  return GenVector{z1, z2, z3};
}

WalkOptions walk_options(const RunConfig& cfg, std::int64_t n) {
  WalkOptions opts;
  opts.step_cap = cfg.get_u64("walk.step_cap_factor", 1000) * static_cast<std::uint64_t>(n);
  opts.path_cap = cfg.get_u64("walk.path_cap", 10'000'000);
  return opts;
}

// --- subcommands -------------------------------------------------------

void cmd_simulate(const RunContext& ctx, std::int64_t n_flag) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  std::int64_t n = n_flag > 0 ? n_flag
                              : static_cast<std::int64_t>(ctx.config.get_u64("walk.n"));
  RandomStream rng(ctx.config.seed());
  WalkRecord rec = simulate_to(family, theta, n, rng, walk_options(ctx.config, n),
                               ctx.config.seed());
  {
    std::ofstream os = ctx.open_out("walk.tsv");
    write_counts(os, rec);
  }
  if (rec.path_complete) {
    std::ofstream os = ctx.open_out("path.tsv");
    os << "t\tx\n";
    for (std::size_t t = 0; t < rec.path.size(); ++t) os << t << '\t' << rec.path[t] << '\n';
  }
  {
    USeq u = extract_U(rec);
    std::ofstream os = ctx.open_out("u.tsv");
    write_gen_sequence(os, u.seq);
  }
  ctx.write_manifest();
  std::cout << "simulate: n=" << n << " t_n=" << rec.t_n << " min_site=" << rec.min_site
            << " identities=" << (count_identity_check(rec) && tn_identity(rec) ? "ok" : "FAIL")
            << "\n";
}

void cmd_counts(const RunContext& ctx, const std::string& path_file) {
  std::ifstream is(path_file);
  if (!is) throw ConfigError("cannot open path file: " + path_file);
  std::string line;
  if (!std::getline(is, line) || line != "t\tx")
    throw ConfigError("path file: expected 't\\tx' header");
  std::vector<std::int64_t> path;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::uint64_t t;
    std::int64_t x;
    if (!(ss >> t >> x)) throw ConfigError("path file: unparsable row: " + line);
    path.push_back(x);
  }
  if (path.empty()) throw ConfigError("path file: no rows");
  WalkRecord rec = record_from_path(path, path.back());
  rec.seed = ctx.config.seed();
  {
    std::ofstream os = ctx.open_out("counts.tsv");
    write_counts(os, rec);
  }
  ctx.write_manifest();
  bool ok = count_identity_check(rec) && tn_identity(rec);
  std::cout << "counts: n=" << rec.target << " t_n=" << rec.t_n
            << " identities=" << (ok ? "ok" : "FAIL") << "\n";
  if (!ok) throw NumericError("count identities failed on the supplied path");
}

ParamPoint parse_theta_flag(const std::string& text) {
  std::vector<double> v;
  std::istringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  } catch (const std::exception&) {
    throw ConfigError("--theta must be a comma-separated numeric list, got '" + text + "'");
  }
  return ParamPoint(v);
}

void cmd_loglik(const RunContext& ctx, const std::string& counts_file,
                const std::string& theta_flag) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta =
      theta_flag.empty() ? ctx.config.theta("loglik.theta") : parse_theta_flag(theta_flag);
  std::ifstream is(counts_file);
  if (!is) throw ConfigError("cannot open counts file: " + counts_file);
  CountsView counts = CountsView::from_counts_file(read_counts(is));
  double value = loglik(counts, family, theta);
  std::ofstream os = ctx.open_out("loglik.tsv");
  for (std::size_t i = 0; i < theta.dim(); ++i) os << "theta_" << i + 1 << '\t';
  os << "loglik\tnormalized\n";
  for (std::size_t i = 0; i < theta.dim(); ++i) os << fmt(theta[i]) << '\t';
  os << fmt(value) << '\t' << fmt(value / static_cast<double>(counts.n)) << '\n';
  ctx.write_manifest();
  std::cout << "loglik: " << fmt(value) << "\n";
}

void cmd_estimate(const RunContext& ctx, const std::string& counts_file) {
  FamilySpec family = ctx.config.family();
  std::ifstream is(counts_file);
  if (!is) throw ConfigError("cannot open counts file: " + counts_file);
  CountsView counts = CountsView::from_counts_file(read_counts(is));

  MleOptions opts;
  opts.grid_points = static_cast<int>(ctx.config.get_u64("estimate.grid", 21));
  opts.refine = ctx.config.get_bool("estimate.refine", true);
  opts.threads = ctx.threads;
  EstimateResult result = mle(counts, family, opts);

  {
    std::ofstream os = ctx.open_out("estimate.tsv");
    for (std::size_t i = 0; i < result.theta_hat.dim(); ++i) os << "theta_" << i + 1 << '\t';
    os << "loglik\trefine_iterations\tties\n";
    for (std::size_t i = 0; i < result.theta_hat.dim(); ++i) os << fmt(result.theta_hat[i]) << '\t';
    os << fmt(result.loglik_at_hat) << '\t' << result.refine_iterations << '\t'
       << result.ties.size() << '\n';
  }
  {
    std::ofstream os = ctx.open_out("ties.tsv");
    for (std::size_t i = 0; i < family.dim(); ++i) os << "theta_" << i + 1 << (i + 1 < family.dim() ? '\t' : '\n');
    for (const ParamPoint& p : result.ties)
      for (std::size_t i = 0; i < p.dim(); ++i) os << fmt(p[i]) << (i + 1 < p.dim() ? '\t' : '\n');
  }
  {
    ProfileTable table = profile(counts, family, opts.grid_points, ctx.threads);
    std::ofstream os = ctx.open_out("profile.tsv");
    for (std::size_t i = 0; i < family.dim(); ++i) os << "theta_" << i + 1 << '\t';
    os << "loglik_over_n\n";
    for (std::size_t row = 0; row < table.theta.size(); ++row) {
      for (std::size_t i = 0; i < table.theta[row].dim(); ++i) os << fmt(table.theta[row][i]) << '\t';
      os << fmt(table.value[row]) << '\n';
    }
  }
  ctx.write_manifest();
  std::cout << "estimate: theta_hat =";
  for (std::size_t i = 0; i < result.theta_hat.dim(); ++i)
    std::cout << ' ' << fmt(result.theta_hat[i]);
  std::cout << " (loglik " << fmt(result.loglik_at_hat) << ")\n";
}

void cmd_lyapunov(const RunContext& ctx, std::uint64_t steps_flag) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  std::uint64_t steps = steps_flag ? steps_flag : ctx.config.get_u64("lyapunov.steps", 1'000'000);
  std::string which = ctx.config.get_string("lyapunov.which", "A");
  if (which != "A" && which != "B") throw ConfigError("lyapunov.which must be A or B");
  RandomStream rng(ctx.config.seed());
  LyapunovEstimate est = lyapunov(family, theta, steps,
                                  which == "A" ? MatrixFamily::A : MatrixFamily::B, rng);
  Regime regime = classify(est);
  std::ofstream os = ctx.open_out("lyapunov.tsv");
  os << "gamma\tse\tregime\n" << fmt(est.gamma) << '\t' << fmt(est.se) << '\t'
     << to_string(regime) << '\n';
  ctx.write_manifest();
  std::cout << "lyapunov(" << which << "): gamma=" << fmt(est.gamma) << " se=" << fmt(est.se)
            << " regime=" << to_string(regime) << "\n";
}

void cmd_speed(const RunContext& ctx) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  require_ballistic(ctx, family, theta);
  TailOptions tail;
  tail.tail_tol = ctx.config.get_double("speed.tail_tol", 1e-12);
  std::size_t env_samples = ctx.config.get_u64("speed.env_samples", 10'000);
  SpeedEstimate est = speed(family, theta, env_samples, tail, ctx.config.seed(), ctx.threads);
  std::ofstream os = ctx.open_out("speed.tsv");
  os << "speed\tse\tpi_mean\tpi_se\tenv_samples\n"
     << fmt(est.speed) << '\t' << fmt(est.se) << '\t' << fmt(est.pi_mean) << '\t'
     << fmt(est.pi_se) << '\t' << env_samples << '\n';
  ctx.write_manifest();
  std::cout << "speed: " << fmt(est.speed) << " (se " << fmt(est.se) << ")\n";
}

void cmd_bpire_check(const RunContext& ctx) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  require_ballistic(ctx, family, theta);
  std::int64_t n = static_cast<std::int64_t>(ctx.config.get_u64("bpire.n", 6));
  std::size_t replicates = ctx.config.get_u64("bpire.replicates", 100'000);
  UZReport report = u_z_distribution_check(family, theta, n, replicates, ctx.config.seed(),
                                           ctx.threads, 1e-4, walk_options(ctx.config, n));
  {
    std::ofstream os = ctx.open_out("uz_report.tsv");
    os << "k\ttv\ttrunc_mass_u\ttrunc_mass_z\n";
    for (std::size_t k = 0; k < report.per_gen.size(); ++k)
      os << k << '\t' << fmt(report.per_gen[k].tv) << '\t' << fmt(report.per_gen[k].trunc_mass_u)
         << '\t' << fmt(report.per_gen[k].trunc_mass_z) << '\n';
  }
  {
    RandomStream rng = RandomStream::substream(ctx.config.seed(), mix_index(98, 0));
    std::vector<SiteLaw> sites(static_cast<std::size_t>(n));
    for (auto& s : sites) s = sample_site(family, theta, rng);
    std::vector<GenVector> z = simulate_Z(sites, rng);
    std::ofstream os = ctx.open_out("z_sample.tsv");
    write_gen_sequence(os, z);
  }
  ctx.write_manifest();
  std::cout << "bpire-check: max TV over k=0.." << n << " is " << fmt(report.max_tv()) << "\n";
}

void cmd_invariant(const RunContext& ctx) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  require_ballistic(ctx, family, theta);
  TailOptions tail;
  tail.tail_tol = ctx.config.get_double("invariant.tail_tol", 1e-12);
  tail.k_cap = ctx.config.get_u64("invariant.k_cap", 100'000);
  std::size_t env_samples = ctx.config.get_u64("invariant.env_samples", 10'000);
  int v_max = static_cast<int>(ctx.config.get_u64("invariant.v_max", 80));
  InvariantTable table =
      invariant_dist(family, theta, env_samples, tail, v_max, ctx.config.seed(), ctx.threads);
  std::ofstream os = ctx.open_out("invariant.tsv");
  os << "z1\tz2\tz3\tprob\tse\n";
  for (std::uint64_t z1 = 0; z1 <= static_cast<std::uint64_t>(v_max); ++z1)
    for (std::uint64_t z2 = 0; z1 + z2 <= static_cast<std::uint64_t>(v_max); ++z2)
      for (std::uint64_t z3 = 0; z1 + z2 + z3 <= static_cast<std::uint64_t>(v_max); ++z3) {
        std::size_t i = table.index(z1, z2, z3);
        os << z1 << '\t' << z2 << '\t' << z3 << '\t' << fmt(table.prob[i]) << '\t'
           << fmt(table.se[i]) << '\n';
      }
  ctx.write_manifest();
  if (table.truncation_warning)
    std::cerr << "warning: k-cap hit in " << fmt(100.0 * table.cap_hit_fraction)
              << "% of environments (gamma_A may be near 0)\n";
  std::cout << "invariant: mass within |v|<=" << v_max << " is " << fmt(table.total_mass())
            << "\n";
}

void cmd_kernel_check(const RunContext& ctx) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta = ctx.config.theta();
  GenVector x = parse_gen_vector(ctx.config.get_string("kernel.x", "1,1,0"));
  std::size_t samples = ctx.config.get_u64("kernel.samples", 100'000);

  double row_sum = 0.0;
  for (std::uint64_t y1 = 0; y1 <= 500; ++y1)
    for (std::uint64_t y2 = 0; y1 + y2 <= 500; ++y2)
      row_sum += kernel_Q(family, theta, x, GenVector{y1, y2, x.z2});

  // empirical one-step law of the Z-chain from state x
  std::unordered_map<GenVector, std::uint64_t, GenVectorHash> hist;
  RandomStream rng = RandomStream::substream(ctx.config.seed(), mix_index(97, 0));
  for (std::size_t s = 0; s < samples; ++s) {
    SiteLaw site = sample_site(family, theta, rng);
    GenVector next;
    auto spawn = [&](int type, std::uint64_t parents) {
      for (std::uint64_t j = 0; j < parents; ++j) {
        GenVector kid = offspring_sample(site, type, rng);
        next.z1 += kid.z1;
        next.z2 += kid.z2;
        next.z3 += kid.z3;
      }
    };
    spawn(1, x.z1 + 1);
    spawn(2, x.z2);
    spawn(3, x.z3);
    ++hist[next];
  }
  double tv = 0.0;
  double seen_mass = 0.0;
  for (const auto& [v, count] : hist) {
    double emp = static_cast<double>(count) / static_cast<double>(samples);
    double q = kernel_Q(family, theta, x, v);
    tv += std::abs(emp - q);
    seen_mass += q;
  }
  tv = 0.5 * (tv + std::max(0.0, 1.0 - seen_mass));  // kernel mass outside the sample support

  std::ofstream os = ctx.open_out("kernel.tsv");
  os << "x\trow_sum\tone_step_tv\tsamples\n"
     << x.z1 << ',' << x.z2 << ',' << x.z3 << '\t' << fmt(row_sum) << '\t' << fmt(tv) << '\t'
     << samples << '\n';
  ctx.write_manifest();
  std::cout << "kernel-check: row_sum=" << fmt(row_sum) << " one_step_tv=" << fmt(tv) << "\n";
}

void cmd_consistency(const RunContext& ctx, const std::string& n_flag, std::uint64_t reps_flag) {
  FamilySpec family = ctx.config.family();
  ParamPoint theta_star = ctx.config.theta();
  std::vector<std::int64_t> n_list;
  if (!n_flag.empty()) {
    std::istringstream ss(n_flag);
    std::string item;
    while (std::getline(ss, item, ',')) n_list.push_back(std::stoll(item));
  } else {
    n_list = ctx.config.get_i64s("consistency.n_list");
  }
  std::size_t replicates = reps_flag ? reps_flag : ctx.config.get_u64("consistency.replicates", 20);

  MleOptions opts;
  opts.grid_points = static_cast<int>(ctx.config.get_u64("estimate.grid", 21));
  opts.refine = ctx.config.get_bool("estimate.refine", true);
  ConsistencyReport report = consistency_experiment(family, theta_star, n_list, replicates,
                                                    ctx.config.seed(), opts, ctx.threads);
  {
    std::ofstream os = ctx.open_out("errors.tsv");
    os << "n\treplicate\terror";
    for (std::size_t i = 0; i < theta_star.dim(); ++i) os << "\ttheta_" << i + 1;
    os << '\n';
    for (const ConsistencyRow& row : report.rows) {
      os << row.n << '\t' << row.replicate << '\t' << fmt(row.error);
      for (std::size_t i = 0; i < row.theta_hat.dim(); ++i) os << '\t' << fmt(row.theta_hat[i]);
      os << '\n';
    }
  }
  {
    std::ofstream os = ctx.open_out("summary.tsv");
    os << "n\tmedian\tq1\tq3\n";
    for (const ConsistencySummary& s : report.summary)
      os << s.n << '\t' << fmt(s.median) << '\t' << fmt(s.q1) << '\t' << fmt(s.q3) << '\n';
  }
  ctx.write_manifest();
  std::cout << "consistency: medians";
  for (const ConsistencySummary& s : report.summary) std::cout << ' ' << fmt(s.median);
  std::cout << (report.median_non_increasing ? " (non-increasing)" : " (NOT monotone)") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rwre: simulation and inference for (2,1) random walks in random environments"};
  app.require_subcommand(1);

  std::string config_path, out_path = ".";
  std::string counts_file, path_file, theta_flag, n_list_flag;
  std::int64_t n_flag = 0;
  std::uint64_t steps_flag = 0, reps_flag = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (section.key = value)")->required();
    sub->add_option("--out", out_path, "output directory");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "simulate a walk to its target site");
  add_common(simulate);
  simulate->add_option("--n", n_flag, "target site (overrides walk.n)");

  CLI::App* counts = app.add_subcommand("counts", "recount jumps from a stored path");
  add_common(counts);
  counts->add_option("--path", path_file, "path file (t, x)")->required();

  CLI::App* loglik_cmd = app.add_subcommand("loglik", "evaluate the criterion at one theta");
  add_common(loglik_cmd);
  loglik_cmd->add_option("--counts", counts_file, "counts file")->required();
  loglik_cmd->add_option("--theta", theta_flag, "comma-separated theta (overrides loglik.theta)");

  CLI::App* estimate = app.add_subcommand("estimate", "maximize the criterion over the box");
  add_common(estimate);
  estimate->add_option("--counts", counts_file, "counts file")->required();

  CLI::App* lyap = app.add_subcommand("lyapunov", "estimate the top Lyapunov exponent");
  add_common(lyap);
  lyap->add_option("--steps", steps_flag, "product length (overrides lyapunov.steps)");

  CLI::App* speed_cmd = app.add_subcommand("speed", "ballistic speed via Monte Carlo");
  add_common(speed_cmd);

  CLI::App* bpire = app.add_subcommand("bpire-check", "walk vs branching-process law comparison");
  add_common(bpire);

  CLI::App* invariant = app.add_subcommand("invariant", "limit invariant law table");
  add_common(invariant);

  CLI::App* kernel = app.add_subcommand("kernel-check", "transition kernel row sum and one-step law");
  add_common(kernel);

  CLI::App* consistency = app.add_subcommand("consistency", "simulate-estimate error experiment");
  add_common(consistency);
  consistency->add_option("--n", n_list_flag, "comma-separated walk lengths");
  consistency->add_option("--reps", reps_flag, "replicates per length");

  try {
    app.parse(argc, argv);
    std::string command = app.get_subcommands().front()->get_name();
    RunContext ctx = make_context(config_path, out_path, command, argc, argv);
    if (simulate->parsed()) cmd_simulate(ctx, n_flag);
    else if (counts->parsed()) cmd_counts(ctx, path_file);
    else if (loglik_cmd->parsed()) cmd_loglik(ctx, counts_file, theta_flag);
    else if (estimate->parsed()) cmd_estimate(ctx, counts_file);
    else if (lyap->parsed()) cmd_lyapunov(ctx, steps_flag);
    else if (speed_cmd->parsed()) cmd_speed(ctx);
    else if (bpire->parsed()) cmd_bpire_check(ctx);
    else if (invariant->parsed()) cmd_invariant(ctx);
    else if (kernel->parsed()) cmd_kernel_check(ctx);
    else if (consistency->parsed()) cmd_consistency(ctx, n_list_flag, reps_flag);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const BudgetExceededError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
