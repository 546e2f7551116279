#pragma once

// Command-line front end. Every flag is resolved to a string (flags > config file
// > defaults), the resolved map is written to manifest.json, and feeding that
// manifest back through --config reproduces the outputs byte for byte.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ridemix/coupling.hpp"
#include "ridemix/error.hpp"
#include "ridemix/fit.hpp"
#include "ridemix/format.hpp"
#include "ridemix/grid.hpp"
#include "ridemix/lower_bound.hpp"
#include "ridemix/mdp.hpp"
#include "ridemix/mixing.hpp"
#include "ridemix/parallel.hpp"
#include "ridemix/policy.hpp"
#include "ridemix/replay.hpp"
#include "ridemix/simulator.hpp"
#include "ridemix/state_space.hpp"
#include "ridemix/stationary.hpp"
#include "ridemix/transition.hpp"
#include "ridemix/trips.hpp"

namespace ridemix::cli {

inline constexpr const char* kVersion = "1.0.0";

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

struct Flag {
  std::string name;
  std::string fallback;  // default value; "" means unset
  std::string help;
  bool is_switch = false;
};

class Context {
 public:
  Context(std::string command, std::map<std::string, std::string> values, unsigned threads, std::ostream& out)
      : command_(std::move(command)), values_(std::move(values)), threads_(threads), out_(out) {}

  const std::string& command() const { return command_; }
  unsigned threads() const { return threads_; }
  std::ostream& out() { return out_; }
  const std::map<std::string, std::string>& values() const { return values_; }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("internal: unknown flag --" + key);
    return it->second;
  }
  bool on(const std::string& key) const { return str(key) == "true"; }

  long long integer(const std::string& key, long long lo = LLONG_MIN, long long hi = LLONG_MAX) const {
    const auto& s = str(key);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument("--" + key + ": expected an integer, got '" + s + "'");
    if (v < lo || v > hi) throw InvalidArgument("--" + key + ": " + s + " is out of range");
    return v;
  }

  double real(const std::string& key) const { return parse_real(str(key), "--" + key); }

  std::uint64_t seed() const {
    const auto& s = str("seed");
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument("--seed: expected an unsigned integer");
    return v;
  }

  // Accepts decimals and fractions such as 1/16.
  static double parse_real(const std::string& s, const std::string& what) {
    auto slash = s.find('/');
    auto one = [&](std::string_view t) {
      double v = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v))
        throw InvalidArgument(what + ": expected a number, got '" + s + "'");
      return v;
    };
    if (slash == std::string::npos) return one(s);
    const double den = one(std::string_view(s).substr(slash + 1));
    if (den == 0.0) throw InvalidArgument(what + ": zero denominator");
    return one(std::string_view(s).substr(0, slash)) / den;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : split(str(key))) out.push_back(parse_real(trim(part), "--" + key));
    return out;
  }

  // Records a digest of an input file and returns its content.
  std::string input(const std::string& path) {
    std::string data = read_file(path);
    inputs_.push_back({path, sha256_hex(data)});
    return data;
  }

  void set_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
    dir_ = dir;
  }
  const fs::path& output_dir() const { return dir_; }

  // Opens `name` inside the output directory and records it in the manifest.
  std::ofstream output(const std::string& name) {
    outputs_.push_back(name);
    return open_output((dir_ / name).string());
  }

  // Outputs are still written, but the command exits nonzero.
  void fail(std::string message) { failure_ = std::move(message); }
  const std::string& failure() const { return failure_; }

  void summary(const std::string& key, json value) { summary_[key] = std::move(value); }

  void print_summary() {
    if (summary_.empty()) return;
    if (str("format") == "json") {
      out_ << summary_.dump() << '\n';
      return;
    }
    std::string head, row;
    for (auto it = summary_.begin(); it != summary_.end(); ++it) {
      head += (head.empty() ? "" : ",") + it.key();
      row += (row.empty() ? "" : ",") + (it->is_string() ? it->get<std::string>() : render(*it));
    }
    out_ << head << '\n' << row << '\n';
  }

  void write_manifest() {
    json m;
    m["tool"] = "ridemix";
    m["version"] = kVersion;
    m["command"] = command_;
    m["seed"] = values_.count("seed") ? values_.at("seed") : "";
    json cfg = json::object();
    for (const auto& [k, v] : values_) cfg[k] = v;
    m["config"] = cfg;
    json in = json::array();
    for (const auto& [path, digest] : inputs_) in.push_back({{"path", path}, {"sha256", digest}});
    m["inputs"] = in;
    m["outputs"] = outputs_;
    auto f = open_output((dir_ / "manifest.json").string());
    f << m.dump(2) << '\n';
  }

  static std::string render(const json& v) {
    if (v.is_number_float()) return fmt_real(v.get<double>());
    return v.dump();
  }

 private:
  std::string command_;
  std::map<std::string, std::string> values_;
  unsigned threads_;
  std::ostream& out_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  json summary_ = json::object();
  fs::path dir_ = ".";
  std::string failure_;
};

// ---------------------------------------------------------------- shared helpers

inline json real_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

struct Instance {
  Grid grid{1, 1};
  int drivers = 1;
  int capacity = 1;
  RequestModel model{Grid(1, 1)};
  std::optional<ReplayTrace> replay;
};

// --arrivals uniform[:p] | model:FILE | replay:FILE (replay only when allowed).
inline Instance load_instance(Context& ctx, bool allow_replay) {
  Instance in;
  in.grid = parse_grid(ctx.str("grid"));
  in.drivers = static_cast<int>(ctx.integer("drivers", 1, 1'000'000));
  in.capacity = static_cast<int>(ctx.integer("capacity", 1, 1'000'000));
  in.model = RequestModel(in.grid);
  const auto& spec = ctx.str("arrivals");
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon), arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const auto& weights = ctx.str("weights");
  if (weights != "manhattan" && weights != "unit") throw InvalidArgument("--weights must be manhattan or unit");
  if (kind == "uniform") {
    const double n = in.grid.size();
    const double p = arg.empty() ? 1.0 / (n * n) : Context::parse_real(arg, "--arrivals");
    in.model = weights == "unit" ? uniform_request_model<double>(in.grid, p, 1.0) : uniform_request_model<double>(in.grid, p);
  } else if (kind == "model" && !arg.empty()) {
    std::istringstream s(ctx.input(arg));
    in.model = load_request_model(in.grid, s);
  } else if (kind == "replay" && !arg.empty() && allow_replay) {
    std::istringstream s(ctx.input(arg));
    in.replay = load_replay(s);
    in.replay->validate(in.grid);
  } else {
    throw InvalidArgument("--arrivals: expected uniform[:p], model:FILE" +
                          std::string(allow_replay ? " or replay:FILE" : "") + ", got '" + spec + "'");
  }
  return in;
}

inline bool strict_self_trips(const Context& ctx) {
  const auto& v = ctx.str("self-trip");
  if (v != "free" && v != "strict") throw InvalidArgument("--self-trip must be free or strict");
  return v == "strict";
}

inline PolicySpec resolve_policy(const Context& ctx) {
  auto policy = parse_policy(ctx.str("policy"));
  policy.self_trip_needs_room = policy.self_trip_needs_room || strict_self_trips(ctx);
  return policy;
}

// adversarial | spread | comma-joined counts | FILE holding comma-joined counts
inline DriverState resolve_start(Context& ctx, const std::string& key, const Instance& in) {
  const auto& s = ctx.str(key);
  if (s == "adversarial") return adversarial_state(in.grid, in.drivers, in.capacity);
  if (s == "spread") return spread_state(in.grid, in.drivers, in.capacity);
  std::string text = s;
  if (s.find(',') == std::string::npos && fs::exists(s)) text = trim(ctx.input(s));
  auto x = DriverState::parse(text, in.capacity);
  if (x.size() != in.grid.size() || x.drivers() != in.drivers)
    throw InvalidArgument("--" + key + ": state " + x.to_string() + " does not match the instance");
  return x;
}

inline void write_series_csv(std::ostream& f, const std::string& header,
                             const std::vector<std::vector<double>>& columns, std::size_t first_index = 0) {
  f << header << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    f << (i + first_index);
    for (const auto& c : columns) f << ',' << fmt_real(c[i]);
    f << '\n';
  }
}

inline json exponential_json(const std::vector<double>& t, const std::vector<double>& y, double floor = 0.0) {
  try {
    auto fit = fit_exponential(t, y, floor);
    return {{"model", "a*exp(-b*t)"}, {"a", real_json(fit.a)}, {"b", real_json(fit.b)},
            {"goodness", real_json(fit.goodness)}, {"used", fit.used}, {"dropped", fit.dropped}};
  } catch (const Error& e) {
    return {{"model", "a*exp(-b*t)"}, {"error", e.what()}};
  }
}

inline json inverse_json(const std::vector<double>& T, const std::vector<double>& y) {
  try {
    auto fit = fit_inverse(T, y);
    return {{"model", "a/T"}, {"a", real_json(fit.a)}, {"goodness", real_json(fit.goodness)}, {"used", fit.used}};
  } catch (const Error& e) {
    return {{"model", "a/T"}, {"error", e.what()}};
  }
}

inline std::string request_label(const MdpInstance& mdp, std::size_t slot) {
  auto r = mdp.pending(slot);
  return r ? std::to_string(r->origin) + ">" + std::to_string(r->dest) : "none";
}

inline const char* action_name(int a) {
  static const char* names[] = {"reject", "origin", "N", "E", "S", "W"};
  return names[a];
}

// ---------------------------------------------------------------- subcommands

inline void run_exact(Context& ctx) {
  auto in = load_instance(ctx, false);
  const auto policy = resolve_policy(ctx);
  const auto eps = ctx.reals("eps");
  const auto horizon = static_cast<std::size_t>(ctx.integer("horizon", 1, 100'000'000));
  StateSpace space(in.grid, in.drivers, in.capacity);
  auto P = build_transition(space, in.model, policy, ctx.threads());
  const bool irreducible = check_irreducible(P), aperiodic = check_aperiodic(P);
  auto st = stationary_distribution(P);
  const double limit = limiting_objective(st, in.model, policy);
  const double by_states = expected_profit_under(space, st.pi, in.model, policy);

  {
    auto f = ctx.output("stationary.csv");
    f << "state,pi\n";
    for (std::size_t i = 0; i < space.size(); ++i) f << '"' << space.unrank(i).to_string() << "\"," << fmt_real(st.pi[i]) << '\n';
  }
  {
    auto f = ctx.output("gamma.csv");
    f << "u,v,gamma\n";
    for (Location u = 0; u < in.grid.size(); ++u)
      for (Location v = 0; v < in.grid.size(); ++v) f << u << ',' << v << ',' << fmt_real(st.gamma(u, v)) << '\n';
  }

  MixingOptions mo;
  mo.threads = ctx.threads();
  const bool special = is_uniform_special_case(in.model, in.capacity);
  if (special) mo.envelope = coupling_envelope(in.grid.size(), in.drivers);
  json tau = json::object();
  json envelope = nullptr;
  std::vector<double> d_curve;
  std::string horizon_note;
  try {
    auto rep = mixing_analysis(P, st.pi, eps, horizon, mo);
    d_curve = rep.d_curve;
    for (const auto& [e, t] : rep.tau) tau[fmt_real(e)] = t;
    if (rep.envelope)
      envelope = {{"C", rep.envelope->C}, {"beta", rep.envelope->beta}, {"respected", rep.envelope_respected}};
  } catch (const HorizonTooShort& e) {
    d_curve = e.partial_curve();
    horizon_note = e.what();
  }
  {
    auto f = ctx.output("mixing.csv");
    write_series_csv(f, "t,d_t", {d_curve});
  }

  json report;
  report["grid"] = ctx.str("grid");
  report["drivers"] = in.drivers;
  report["capacity"] = in.capacity;
  report["policy"] = policy.to_string();
  report["states"] = space.size();
  report["nonzeros"] = P.nonzeros();
  report["irreducible"] = irreducible;
  report["aperiodic"] = aperiodic;
  report["solver"] = st.iterations == 0 ? "dense" : "power";
  report["residual"] = st.residual;
  report["limiting_objective"] = limit;
  report["limiting_objective_by_states"] = by_states;
  report["uniform_special_case"] = special;
  if (in.model.is_uniform() && in.capacity == in.drivers) {
    const double n = in.grid.size(), m = in.drivers;
    report["uniform_closed_form"] = m * in.model.p(0, 0) / (n + m - 1) * in.model.total_weight();
  }
  report["tau"] = tau;
  report["envelope"] = envelope;
  if (!horizon_note.empty()) report["horizon_too_short"] = horizon_note;
  ctx.output("report.json") << report.dump(2) << '\n';

  ctx.summary("states", space.size());
  ctx.summary("limiting_objective", limit);
  ctx.summary("irreducible", irreducible);
  ctx.summary("aperiodic", aperiodic);
}

inline void run_mixing_lower_bound(Context& ctx) {
  const long long n = ctx.integer("n", 3), m = ctx.integer("m", 2);
  const auto horizon = static_cast<std::size_t>(ctx.integer("horizon", 1, 10'000'000));
  LowerBoundChain chain(n, m);
  const auto power = chain.gap_by_power(horizon);
  double dev_printed = 0.0, dev_signed = 0.0;
  {
    auto f = ctx.output("lower_bound.csv");
    f << "t,gap_power,closed_form,closed_form_signed,asymptote,ratio\n";
    for (std::size_t t = 0; t <= horizon; ++t) {
      const double td = static_cast<double>(t);
      const double g = chain.printed_gap(td), s = chain.signed_gap(td), a = chain.asymptotic_gap(td);
      dev_printed = std::max(dev_printed, std::abs(std::abs(power[t]) - g));
      dev_signed = std::max(dev_signed, std::abs(power[t] - s));
      f << t << ',' << fmt_real(power[t]) << ',' << fmt_real(g) << ',' << fmt_real(s) << ',' << fmt_real(a) << ','
        << fmt_real(std::abs(power[t]) / a) << '\n';
    }
  }
  const auto pi = chain.stationary();
  json report;
  report["n"] = n;
  report["m"] = m;
  report["gamma"] = to_double(chain.gamma());
  report["stationary"] = {to_double(pi[0]), to_double(pi[1]), to_double(pi[2]), to_double(pi[3])};
  report["max_deviation_closed_form"] = dev_printed;
  report["max_deviation_signed"] = dev_signed;
  ctx.output("report.json") << report.dump(2) << '\n';
  ctx.summary("gamma", to_double(chain.gamma()));
  ctx.summary("max_deviation_closed_form", dev_printed);
  ctx.summary("max_deviation_signed", dev_signed);
}

inline void run_mixing(Context& ctx) {
  const auto& chain = ctx.str("chain");
  if (chain == "lower-bound") return run_mixing_lower_bound(ctx);
  if (chain != "dispatch") throw InvalidArgument("--chain must be dispatch or lower-bound");
  auto in = load_instance(ctx, false);
  const auto policy = resolve_policy(ctx);
  const auto rounds = static_cast<std::size_t>(ctx.integer("rounds", 1, 100'000'000));
  const auto horizon = static_cast<std::size_t>(ctx.integer("horizon", 1, 100'000'000));
  StateSpace space(in.grid, in.drivers, in.capacity);
  auto P = build_transition(space, in.model, policy, ctx.threads());
  auto st = stationary_distribution(P);
  std::vector<double> start;
  if (ctx.str("start") == "stationary")
    start = st.pi;
  else
    start = point_mass(space.size(), space.rank(resolve_start(ctx, "start", in)));

  const bool special = is_uniform_special_case(in.model, in.capacity);
  MixingOptions mo;
  mo.threads = ctx.threads();
  if (special) mo.envelope = coupling_envelope(in.grid.size(), in.drivers);
  json tau = json::object();
  std::vector<double> d_curve;
  std::string horizon_note;
  try {
    auto rep = mixing_analysis(P, st.pi, ctx.reals("eps"), horizon, mo);
    d_curve = rep.d_curve;
    for (const auto& [e, t] : rep.tau) tau[fmt_real(e)] = t;
  } catch (const HorizonTooShort& e) {
    d_curve = e.partial_curve();
    horizon_note = e.what();
  }
  {
    auto f = ctx.output("mixing.csv");
    f << "t,d_t,envelope\n";
    for (std::size_t t = 0; t < d_curve.size(); ++t)
      f << t << ',' << fmt_real(d_curve[t]) << ','
        << (mo.envelope ? fmt_real(mo.envelope->C * std::pow(mo.envelope->beta, static_cast<double>(t))) : "") << '\n';
  }

  ExactDeltaOptions dopt;
  dopt.threads = ctx.threads();
  auto delta = delta_curves_exact(P, st, in.model, policy, start, rounds, dopt);
  const auto& s = delta.series;
  const double sum_w = in.model.total_weight();
  bool per_round_ok = true, average_ok = true;
  {
    auto f = ctx.output("delta.csv");
    f << "t,w,obj,delta,delta_hat,bound_delta,bound_delta_hat\n";
    for (std::size_t t = 0; t < rounds; ++t) {
      const double b1 = per_round_error_bound(in.grid.size(), in.drivers, sum_w, static_cast<double>(t));
      const double b2 = average_error_bound(in.drivers, sum_w, static_cast<double>(t + 1));
      if (s.delta[t] > b1 + kNumericalFloor) per_round_ok = false;
      if (s.delta_hat[t] > b2 + kNumericalFloor) average_ok = false;
      f << t << ',' << fmt_real(s.w[t]) << ',' << fmt_real(s.obj[t]) << ',' << fmt_real(s.delta[t]) << ','
        << fmt_real(s.delta_hat[t]) << ',' << fmt_real(b1) << ',' << fmt_real(b2) << '\n';
    }
  }
  std::vector<double> ts(rounds), Ts(rounds);
  for (std::size_t t = 0; t < rounds; ++t) ts[t] = static_cast<double>(t), Ts[t] = static_cast<double>(t + 1);

  json report;
  report["policy"] = policy.to_string();
  report["states"] = space.size();
  report["target"] = s.target;
  report["uniform_special_case"] = special;
  report["tau"] = tau;
  if (!horizon_note.empty()) report["horizon_too_short"] = horizon_note;
  report["bounds_hold"] = {{"delta", per_round_ok}, {"delta_hat", average_ok}};
  report["delta_fit"] = exponential_json(ts, s.delta, kNumericalFloor);
  report["delta_fit"]["floor"] = kNumericalFloor;
  report["delta_hat_fit"] = inverse_json(Ts, s.delta_hat);
  ctx.output("report.json") << report.dump(2) << '\n';
  ctx.summary("target", s.target);
  ctx.summary("final_delta", s.delta.back());
  ctx.summary("final_delta_hat", s.delta_hat.back());
}

inline void run_couple(Context& ctx) {
  const Grid grid = parse_grid(ctx.str("grid"));
  const int m = static_cast<int>(ctx.integer("drivers", 1)), c = static_cast<int>(ctx.integer("capacity", 1));
  CouplingOptions opt;
  opt.threads = ctx.threads();
  opt.throw_on_violation = false;
  auto rep = verify_contraction(grid, m, c, ctx.real("eps"), opt);
  {
    auto f = ctx.output("coupling.csv");
    f << "pair_rank_x,pair_rank_y,expected_d_prime,ratio\n";
    for (const auto& pc : rep.pairs)
      f << pc.rank_x << ',' << pc.rank_y << ',' << fmt_real(to_double(pc.expected_d)) << ','
        << fmt_real(to_double(pc.ratio)) << '\n';
  }
  auto frac = [](const Rational& r) { return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator()); };
  ctx.summary("pairs", rep.pairs.size());
  ctx.summary("worst_beta", frac(rep.worst_beta));
  ctx.summary("bound_beta", frac(rep.bound_beta));
  ctx.summary("tau_bound", real_json(rep.tau_bound));
  ctx.summary("tau_n2_bound", std::pow(static_cast<double>(rep.n), 2) * std::log(2.0 * m / rep.epsilon));
  ctx.summary("violations", rep.violations);
  std::ostringstream line;
  line << "worst_beta=" << frac(rep.worst_beta) << " (" << fmt_real(to_double(rep.worst_beta)) << ") bound=" << frac(rep.bound_beta)
       << " tau_bound=" << fmt_real(rep.tau_bound) << " violations=" << rep.violations << '\n';
  ctx.output("summary.txt") << line.str();
  if (rep.violations) ctx.fail(std::to_string(rep.violations) + " neighbouring pairs fail to contract by 1 - 1/n^2");
}

inline void run_simulate(Context& ctx) {
  auto in = load_instance(ctx, true);
  SimConfig cfg;
  cfg.grid = in.grid;
  cfg.drivers = in.drivers;
  cfg.capacity = in.capacity;
  cfg.rounds = ctx.integer("rounds", 1);
  cfg.runs = ctx.integer("runs", 1);
  cfg.seed = ctx.seed();
  cfg.policy = resolve_policy(ctx);
  cfg.threads = ctx.threads();
  cfg.check_states = ctx.on("check-states");
  cfg.keep_trace = ctx.on("trace");
  if (in.replay)
    cfg.arrivals = *in.replay;
  else
    cfg.arrivals = in.model;
  cfg.initial = resolve_start(ctx, "init", in);
  const auto& est = ctx.str("estimator");
  if (est == "auto")
    cfg.estimator = in.replay ? Estimator::Realized : Estimator::Conditional;
  else if (est == "conditional")
    cfg.estimator = Estimator::Conditional;
  else if (est == "realized")
    cfg.estimator = Estimator::Realized;
  else
    throw InvalidArgument("--estimator must be conditional, realized or auto");

  // auto: exact limit when the chain is small enough, else the tail average.
  Target target = Target::tail(0.5);
  std::string target_kind = "tail:0.5";
  const auto& ts = ctx.str("target");
  if (ts == "auto") {
    if (!in.replay) {
      try {
        StateSpace space(in.grid, in.drivers, in.capacity, 2000);
        auto P = build_transition(space, in.model, cfg.policy, cfg.threads);
        auto st = stationary_distribution(P);
        target = Target::exact(limiting_objective(st, in.model, cfg.policy));
        target_kind = "exact";
      } catch (const SizeLimit&) {
      }
    }
  } else if (ts.rfind("tail:", 0) == 0) {
    target = Target::tail(Context::parse_real(ts.substr(5), "--target"));
    target_kind = ts;
  } else if (ts.rfind("value:", 0) == 0) {
    target = Target::exact(Context::parse_real(ts.substr(6), "--target"));
    target_kind = ts;
  } else {
    throw InvalidArgument("--target must be auto, tail:F or value:X");
  }

  auto result = run_ensemble(cfg, target);
  const auto& s = result.series;
  const std::size_t T = s.w.size();
  std::vector<double> tvec(T), Tvec(T);
  for (std::size_t t = 0; t < T; ++t) tvec[t] = static_cast<double>(t), Tvec[t] = static_cast<double>(t + 1);
  {
    auto f = ctx.output("wt.csv");
    write_series_csv(f, "t,mean,stderr", {s.w, s.stderr_w});
  }
  {
    auto f = ctx.output("obj.csv");
    write_series_csv(f, "T,running_avg", {s.obj}, 1);
  }
  {
    auto f = ctx.output("error.csv");
    write_series_csv(f, "t,delta,delta_hat", {s.delta, s.delta_hat});
  }
  if (cfg.keep_trace) {
    auto f = ctx.output("trace.csv");
    f << "round,origin,dest,chosen,success,profit\n";
    for (const auto& step : result.trace)
      f << step.round << ',' << step.request.origin << ',' << step.request.dest << ','
        << (step.chosen ? std::to_string(*step.chosen) : "") << ',' << (step.success ? 1 : 0) << ','
        << fmt_real(step.profit) << '\n';
  }
  json fit;
  fit["target"] = s.target;
  fit["target_kind"] = target_kind;
  fit["estimator"] = cfg.estimator == Estimator::Conditional ? "conditional" : "realized";
  fit["runs"] = s.runs;
  fit["obj_final"] = s.obj.back();
  fit["obj_stderr"] = s.obj_stderr;
  if (in.replay) fit["replay_note"] = "same-second arrivals are served one after another within the round";
  fit["delta"] = exponential_json(tvec, s.delta);
  fit["delta_hat"] = inverse_json(Tvec, s.delta_hat);
  ctx.output("fit.json") << fit.dump(2) << '\n';
  ctx.summary("obj_final", s.obj.back());
  ctx.summary("obj_stderr", s.obj_stderr);
  ctx.summary("target", s.target);
}

inline void run_vi(Context& ctx) {
  auto in = load_instance(ctx, false);
  MdpInstance mdp(in.model, in.drivers, in.capacity, ctx.real("discount"),
                  static_cast<std::uint64_t>(ctx.integer("cap", 1)), strict_self_trips(ctx));
  auto res = value_iteration(mdp, ctx.real("tol"), ctx.threads());
  const auto& space = mdp.space();
  {
    auto fv = ctx.output("values.csv");
    auto fp = ctx.output("policy.csv");
    fv << "state,request,value\n";
    fp << "state,request,action\n";
    for (std::size_t i = 0; i < space.size(); ++i) {
      const std::string x = '"' + space.unrank(i).to_string() + '"';
      for (std::size_t k = 0; k < mdp.slots(); ++k) {
        const std::size_t s = i * mdp.slots() + k;
        fv << x << ',' << request_label(mdp, k) << ',' << fmt_real(res.value[s]) << '\n';
        fp << x << ',' << request_label(mdp, k) << ',' << action_name(res.policy[s]) << '\n';
      }
    }
  }
  const auto start = resolve_start(ctx, "start", in);
  const auto periods = static_cast<std::size_t>(ctx.integer("periods", 0));
  auto occ = simulate_optimal_episode(mdp, res.policy, start, periods, ctx.seed());
  {
    auto f = ctx.output("heatmap.csv");
    f << "location,time_covered,drop_rate,start_pct\n";
    for (Location u = 0; u < in.grid.size(); ++u)
      f << u << ',' << fmt_real(occ.time_covered[u]) << ',' << fmt_real(occ.drop_rate[u]) << ','
        << fmt_real(occ.start_pct[u]) << '\n';
  }
  const auto episodes = static_cast<std::size_t>(ctx.integer("episodes", 0));
  if (episodes > 0) {
    auto f = ctx.output("returns.csv");
    f << "policy,mean,stderr\n";
    const auto seed = ctx.seed();
    auto optimal = estimate_discounted_return(
        mdp, start, episodes, seed,
        [&](std::size_t c, std::size_t k, CounterRng&) { return static_cast<int>(res.policy[c * mdp.slots() + k]); },
        ctx.threads());
    f << "optimal," << fmt_real(optimal.mean) << ',' << fmt_real(optimal.stderr_mean) << '\n';
    for (auto spec : {PolicySpec::nadap(0.8), PolicySpec::rand(), PolicySpec::greedy()}) {
      spec.self_trip_needs_room = strict_self_trips(ctx);
      auto est = estimate_discounted_return(
          mdp, start, episodes, seed,
          [&](std::size_t c, std::size_t k, CounterRng& rng) { return policy_action(mdp, spec, c, k, rng); },
          ctx.threads());
      f << spec.to_string() << ',' << fmt_real(est.mean) << ',' << fmt_real(est.stderr_mean) << '\n';
    }
  }
  ctx.summary("mdp_states", mdp.size());
  ctx.summary("sweeps", res.sweeps);
  ctx.summary("residual", res.residual);
}

inline ColumnMapping parse_columns(const std::string& spec) {
  ColumnMapping cols;
  if (trim(spec).empty()) return cols;
  const std::map<std::string, std::string*> slots = {
      {"car_id", &cols.car_id},           {"pickup_time", &cols.pickup_time}, {"dropoff_time", &cols.dropoff_time},
      {"pickup_lat", &cols.pickup_lat},   {"pickup_lon", &cols.pickup_lon},   {"dropoff_lat", &cols.dropoff_lat},
      {"dropoff_lon", &cols.dropoff_lon}};
  for (const auto& part : split(spec)) {
    auto eq = part.find('=');
    auto it = eq == std::string::npos ? slots.end() : slots.find(trim(part.substr(0, eq)));
    if (it == slots.end()) throw InvalidArgument("--columns: expected field=column pairs, got '" + part + "'");
    *it->second = trim(part.substr(eq + 1));
  }
  return cols;
}

inline BoundingBox parse_bbox(const std::string& spec) {
  auto v = split(spec);
  if (v.size() != 4) throw InvalidArgument("--bbox needs latmin,latmax,lonmin,lonmax");
  BoundingBox box{Context::parse_real(trim(v[0]), "--bbox"), Context::parse_real(trim(v[1]), "--bbox"),
                  Context::parse_real(trim(v[2]), "--bbox"), Context::parse_real(trim(v[3]), "--bbox")};
  if (!(box.lat_min < box.lat_max && box.lon_min < box.lon_max)) throw InvalidArgument("--bbox is empty");
  return box;
}

inline void run_ingest(Context& ctx, const fs::path& out_file) {
  const auto box = parse_bbox(ctx.str("bbox"));
  const Grid grid = parse_grid(ctx.str("grid"));
  const Segment segment = parse_segment(ctx.str("segment"));
  std::istringstream data(ctx.input(ctx.str("input")));
  auto parsed = parse_trips(data, parse_columns(ctx.str("columns")));
  auto inside = filter_bbox(parsed.records, box);
  const auto k = ctx.integer("subsample", 0);
  if (k > 0) inside = subsample_cars(inside, static_cast<std::size_t>(k), ctx.seed());
  auto parts = segment_by_time(inside);
  std::vector<Day> dates;
  if (trim(ctx.str("dates")).empty()) {
    if (auto it = parts.parts.find(segment); it != parts.parts.end())
      for (const auto& [d, recs] : it->second) dates.push_back(d);
  } else {
    dates = parse_dates(ctx.str("dates"));
  }
  if (dates.empty()) throw InvalidArgument("no dates selected for the segment");
  std::vector<TripRecord> chosen;
  for (Day d : dates)
    if (auto it = parts.parts.find(segment); it != parts.parts.end())
      if (auto jt = it->second.find(d); jt != it->second.end()) chosen.insert(chosen.end(), jt->second.begin(), jt->second.end());

  const auto& emit = ctx.str("emit");
  auto f = ctx.output(out_file.filename().string());
  if (emit == "model") {
    std::vector<Request> requests;
    for (const auto& r : chosen) requests.push_back(bin_to_grid(r, grid, box));
    auto est = estimate_rates(requests, grid, static_cast<std::int64_t>(dates.size()) * kSegmentLength);
    save_request_model(est.model, f);
    ctx.summary("slots", est.slots);
    ctx.summary("raw_mass", est.raw_mass);
    ctx.summary("rescale", est.scale);
  } else if (emit == "replay") {
    auto trace = build_replay(chosen, segment, dates, grid, box);
    save_replay(trace, f);
    ctx.summary("rounds", trace.rounds);
  } else {
    throw InvalidArgument("--emit must be model or replay");
  }
  ctx.summary("records", parsed.records.size());
  ctx.summary("skipped", parsed.skipped);
  ctx.summary("in_box", inside.size());
  ctx.summary("outside_segments", parts.dropped);
  ctx.summary("selected", chosen.size());
  ctx.summary("dates", dates.size());
}

inline void run_fit(Context& ctx) {
  std::istringstream data(ctx.input(ctx.str("input")));
  std::string line;
  if (!std::getline(data, line)) throw SchemaError("fit input is empty");
  auto header = split(trim(line));
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("fit input lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::string& model = ctx.str("model");
  if (model != "exponential" && model != "inverse") throw InvalidArgument("--model must be exponential or inverse");
  const std::string xname = ctx.str("x").empty() ? header.front() : ctx.str("x");
  const std::string yname = ctx.str("y").empty() ? (model == "exponential" ? "delta" : "delta_hat") : ctx.str("y");
  const std::size_t xi = column(xname), yi = column(yname);
  const auto skip = ctx.integer("skip", 0);
  std::vector<double> x, y;
  long long row = 0;
  while (std::getline(data, line)) {
    if (trim(line).empty()) continue;
    if (row++ < skip) continue;
    auto f = split(line);
    if (f.size() <= std::max(xi, yi)) throw SchemaError("fit input row " + std::to_string(row) + " is short");
    x.push_back(Context::parse_real(trim(f[xi]), "fit input"));
    y.push_back(Context::parse_real(trim(f[yi]), "fit input"));
  }
  json out;
  out["input_column"] = yname;
  out["abscissa"] = xname;
  if (model == "exponential") {
    auto fit = fit_exponential(x, y);
    out["model"] = "a*exp(-b*t)";
    out["a"] = real_json(fit.a);
    out["b"] = real_json(fit.b);
    out["goodness"] = real_json(fit.goodness);
    out["used"] = fit.used;
    out["dropped"] = fit.dropped;
  } else {
    if (xname == header.front() && !x.empty() && x.front() == 0.0)
      for (auto& v : x) v += 1.0;  // a 0-based round index becomes a round count
    auto fit = fit_inverse(x, y);
    out["model"] = "a/T";
    out["a"] = real_json(fit.a);
    out["goodness"] = real_json(fit.goodness);
    out["used"] = fit.used;
  }
  ctx.output("fit.json") << out.dump(2) << '\n';
  for (auto it = out.begin(); it != out.end(); ++it)
    if (it.key() != "model" && it.key() != "abscissa") ctx.summary(it.key(), *it);
}

inline void run_fixture(Context& ctx, const fs::path& out_file) {
  const auto trips = ctx.integer("trips", 0, 100'000'000);
  ctx.output(out_file.filename().string()) << generate_fixture(static_cast<std::size_t>(trips), ctx.seed());
  ctx.summary("trips", trips);
}

// ---------------------------------------------------------------- dispatch

struct Command {
  std::string name;
  std::string description;
  std::vector<Flag> flags;
  bool out_is_file = false;
  std::function<void(Context&, const fs::path&)> run;
};

inline std::vector<Flag> instance_flags(std::string grid, std::string drivers, std::string capacity,
                                        std::string arrivals) {
  return {{"grid", std::move(grid), "grid size RxC"},
          {"drivers", std::move(drivers), "number of drivers m"},
          {"capacity", std::move(capacity), "per-location capacity c"},
          {"arrivals", std::move(arrivals), "uniform[:p] | model:FILE"},
          {"weights", "manhattan", "weights for uniform arrivals: manhattan | unit"},
          {"self-trip", "free", "free: a driver already at the destination always serves; strict: needs room"}};
}

inline std::vector<Command> commands() {
  std::vector<Command> cmds;
  auto with = [](std::vector<Flag> a, std::vector<Flag> b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  cmds.push_back({"simulate", "Monte-Carlo ensemble of the dispatch chain",
                  with(instance_flags("2x2", "2", "2", "uniform:0.0625"),
                       {{"policy", "nadap:0.8", "nadap:A | rand[:NESW] | greedy[:sorted]"},
                        {"rounds", "10000", "rounds per run T"},
                        {"runs", "100", "independent runs N"},
                        {"seed", "", "random seed (drawn and recorded if omitted)"},
                        {"init", "adversarial", "adversarial | spread | counts | FILE"},
                        {"estimator", "auto", "conditional | realized | auto"},
                        {"target", "auto", "auto | tail:F | value:X"},
                        {"check-states", "false", "verify every visited state", true},
                        {"trace", "false", "write run 0 round by round to trace.csv", true}}),
                  false, [](Context& c, const fs::path&) { run_simulate(c); }});
  cmds.back().flags[3].help = "uniform[:p] | model:FILE | replay:FILE";
  cmds.push_back({"exact", "exact chain: stationary distribution, gamma table and mixing",
                  with(instance_flags("2x2", "2", "2", "uniform:0.0625"),
                       {{"policy", "nadap:0.8", "nadap:A | rand[:NESW] | greedy[:sorted]"},
                        {"eps", "0.25,0.1,0.01", "epsilon list for tau"},
                        {"horizon", "1000", "rounds of d(t) to compute"}}),
                  false, [](Context& c, const fs::path&) { run_exact(c); }});
  cmds.push_back({"mixing", "exact error curves of a dispatch chain, or the lower-bound chain",
                  with(instance_flags("2x2", "2", "2", "uniform:0.0625"),
                       {{"chain", "dispatch", "dispatch | lower-bound"},
                        {"policy", "nadap:0.8", "nadap:A | rand[:NESW] | greedy[:sorted]"},
                        {"start", "adversarial", "adversarial | spread | stationary | counts | FILE"},
                        {"rounds", "10000", "rounds of the exact error curves"},
                        {"eps", "0.01", "epsilon list for tau"},
                        {"horizon", "1000", "rounds of d(t) (lower-bound chain: rounds of the gap)"},
                        {"n", "50", "lower-bound chain: locations"},
                        {"m", "5", "lower-bound chain: drivers"}}),
                  false, [](Context& c, const fs::path&) { run_mixing(c); }});
  cmds.push_back({"couple", "exhaustive path-coupling contraction check",
                  {{"grid", "2x2", "grid size RxC"},
                   {"drivers", "2", "number of drivers m"},
                   {"capacity", "2", "capacity c (1 or 2)"},
                   {"eps", "0.01", "epsilon for the tau bound"}},
                  false, [](Context& c, const fs::path&) { run_couple(c); }});
  cmds.push_back({"vi", "value iteration for the optimal dispatch MDP",
                  with(instance_flags("2x2", "1", "2", "uniform"),
                       {{"discount", "0.9", "discount factor"},
                        {"tol", "1e-8", "sup-norm stopping tolerance"},
                        {"cap", "100000", "maximum MDP states"},
                        {"periods", "1000", "episode length for the heatmap"},
                        {"start", "adversarial", "episode start: adversarial | spread | counts | FILE"},
                        {"episodes", "0", "if positive, compare discounted returns with the baselines"},
                        {"seed", "", "random seed (drawn and recorded if omitted)"}}),
                  false, [](Context& c, const fs::path&) { run_vi(c); }});
  cmds.push_back({"ingest", "trip records to a request model or replay trace",
                  {{"input", "", "trip CSV"},
                   {"columns", "", "field=column overrides, e.g. car_id=medallion"},
                   {"bbox", "40.7014,40.8024,-74.0041,-73.9552", "latmin,latmax,lonmin,lonmax"},
                   {"grid", "21x11", "grid size RxC"},
                   {"segment", "morning", "morning | afternoon | evening"},
                   {"dates", "", "YYYY-MM-DD[:YYYY-MM-DD][,...]; empty = all dates present"},
                   {"subsample", "0", "keep the trips of this many cars (0 = all)"},
                   {"seed", "", "random seed (drawn and recorded if omitted)"},
                   {"emit", "model", "model | replay"}},
                  true, [](Context& c, const fs::path& f) { run_ingest(c, f); }});
  cmds.push_back({"fit", "curve fit of a CSV column",
                  {{"input", "", "CSV file, e.g. error.csv"},
                   {"model", "exponential", "exponential | inverse"},
                   {"x", "", "abscissa column (default: first column)"},
                   {"y", "", "ordinate column (default: delta or delta_hat)"},
                   {"skip", "0", "data rows to skip"}},
                  false, [](Context& c, const fs::path&) { run_fit(c); }});
  cmds.push_back({"fixture", "synthetic trip records in the yellow-cab CSV layout",
                  {{"trips", "1000", "number of trips"}, {"seed", "", "random seed (drawn and recorded if omitted)"}},
                  true, [](Context& c, const fs::path& f) { run_fixture(c, f); }});
  for (auto& c : cmds) c.flags.push_back({"format", "csv", "summary format: csv | json"});
  return cmds;
}

// Flat key=value lines (# comments), or a manifest.json whose "config" object is used.
inline std::map<std::string, std::string> load_config(const std::string& path, const std::string& command) {
  const std::string text = read_file(path);
  std::map<std::string, std::string> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw SchemaError("config '" + path + "': " + e.what());
    }
    if (j.contains("command") && j["command"] != command)
      throw UsageError("config '" + path + "' was written by '" + j["command"].get<std::string>() + "'");
    const json& cfg = j.contains("config") ? j["config"] : j;
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
      if (!it->is_string()) throw SchemaError("config '" + path + "': value of '" + it.key() + "' must be a string");
      out[it.key()] = it->get<std::string>();
    }
    return out;
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw SchemaError("config '" + path + "': expected key=value, got '" + t + "'");
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

inline std::string usage() {
  std::string s = "usage: ridemix <command> [flags]   (ridemix <command> --help for flags)\n\ncommands:\n";
  for (const auto& c : commands()) {
    std::string name = c.name;
    name.resize(10, ' ');
    s += "  " + name + c.description + "\n";
  }
  s += "\nDefault thread count comes from RIDEMIX_THREADS (else the hardware concurrency).\n";
  return s;
}

/// Runs one subcommand. Returns 0 on success, 1 on validation or runtime errors and
/// 2 on usage errors.
inline int dispatch_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << usage();
    return 2;
  }
  if (args[0] == "--help" || args[0] == "-h") {
    out << usage();
    return 0;
  }
  if (args[0] == "--version") {
    out << "ridemix " << kVersion << '\n';
    return 0;
  }
  const auto cmds = commands();
  auto cmd = std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == args[0]; });
  if (cmd == cmds.end()) {
    err << "error [usage]: unknown command '" << args[0] << "'\n\n" << usage();
    return 2;
  }

  CLI::App app{cmd->description, "ridemix " + cmd->name};
  std::map<std::string, std::string> given;
  std::map<std::string, CLI::Option*> options;
  for (const auto& f : cmd->flags) {
    auto fallback = f.fallback.empty() ? "" : " [" + f.fallback + "]";
    if (f.is_switch)
      options[f.name] = app.add_flag("--" + f.name, f.help);
    else
      options[f.name] = app.add_option("--" + f.name, given[f.name], f.help + fallback);
  }
  std::string out_path, config_path;
  unsigned threads = default_threads();
  app.add_option("--out", out_path, cmd->out_is_file ? "output file" : "output directory")->required();
  app.add_option("--config", config_path, "key=value file or manifest.json; flags take precedence");
  app.add_option("--threads", threads, "worker threads (default: RIDEMIX_THREADS)")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [usage]: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    std::map<std::string, std::string> values;
    std::map<std::string, std::string> config;
    if (!config_path.empty()) config = load_config(config_path, cmd->name);
    for (const auto& [k, v] : config)
      if (!options.count(k)) throw UsageError("config key '" + k + "' is not a flag of '" + cmd->name + "'");
    for (const auto& f : cmd->flags) {
      auto* opt = options[f.name];
      if (opt->count() > 0)
        values[f.name] = f.is_switch ? "true" : given[f.name];
      else if (config.count(f.name))
        values[f.name] = config[f.name];
      else
        values[f.name] = f.is_switch ? "false" : f.fallback;
    }
    if (values.count("seed") && values["seed"].empty()) {
      std::random_device rd;
      values["seed"] = std::to_string((static_cast<std::uint64_t>(rd()) << 32) | rd());
    }
    for (const std::string key : {"input"})
      if (values.count(key) && values[key].empty()) throw UsageError("--" + key + " is required");
    if (values["format"] != "csv" && values["format"] != "json") throw UsageError("--format must be csv or json");

    Context ctx(cmd->name, values, threads, out);
    fs::path target(out_path);
    if (cmd->out_is_file) {
      ctx.set_output_dir(target.has_parent_path() ? target.parent_path() : fs::path("."));
    } else {
      ctx.set_output_dir(target);
    }
    cmd->run(ctx, target);
    ctx.write_manifest();
    ctx.print_summary();
    if (!ctx.failure().empty()) {
      err << "error [validation]: " << ctx.failure() << '\n';
      return 1;
    }
    return 0;
  } catch (const UsageError& e) {
    err << "error [usage]: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error [" << e.category() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace ridemix::cli
