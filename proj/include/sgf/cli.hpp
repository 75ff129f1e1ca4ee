#pragma once

// Batch runner: one JSON config per run, outputs written under --out.
//
// Exit codes: 0 success, 1 other library error, 2 config error, 3 blow-up,
// 4 stage failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sgf/json_io.hpp"
#include "sgf/pipeline.hpp"

namespace sgf::cli {

enum ExitCode : int { kOk = 0, kError = 1, kConfig = 2, kBlowUp = 3, kStage = 4 };

using Rng = std::mt19937_64;

namespace detail {

template <class T>
T required(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T optional(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

inline ModeIndex parse_mode(const json& v) {
  if (!v.is_array() || v.size() != 2) throw ConfigError("mode must be [m1, m2]");
  return ModeIndex(v.at(0).get<int>(), v.at(1).get<int>());
}

}  // namespace detail

/// Fields shared by every command.
struct CommonConfig {
  TorusGeometry geometry{1.0, 1.0};
  SobolevParams params;
  int trunc = 6;
  double T = 1.0;
  std::uint64_t seed = 0;
  IntegratorConfig integrator;
};

inline CommonConfig parse_common(const json& j, std::optional<std::uint64_t> seed_override) {
  using detail::optional;
  using detail::required;
  CommonConfig c;
  const auto q = required<std::vector<double>>(j, "q");
  if (q.size() != 2) throw ConfigError("q must have two entries");
  c.geometry = TorusGeometry(q[0], q[1]);
  c.params = SobolevParams(0.0, required<double>(j, "alpha"), required<double>(j, "nu"));
  c.trunc = required<int>(j, "trunc");
  if (c.trunc < 1) throw ConfigError("trunc must be positive");
  c.T = optional<double>(j, "T", 1.0);
  if (!(c.T > 0.0)) throw ConfigError("T must be positive");
  c.seed = seed_override ? *seed_override : optional<std::uint64_t>(j, "seed", 0);
  const json ij = j.value("integrator", json::object());
  c.integrator.params = c.params;
  c.integrator.dt = optional<double>(ij, "dt", 1e-3 * c.T);
  c.integrator.scheme = parse_scheme(optional<std::string>(ij, "scheme", "etd-rk4"));
  c.integrator.min_steps = optional<int>(ij, "min_steps", 1);
  c.integrator.ceiling_factor = optional<double>(ij, "ceiling_factor", 1e6);
  c.integrator.validate();
  return c;
}

/// "zero", {"modes": [{"m": [m1, m2], "a": .., "b": ..}]} or
/// {"random": {"max_mode": k, "amplitude": a}}.
inline SpectralField parse_field(const json& j, const CommonConfig& c, Rng& rng) {
  SpectralField f(c.geometry, c.trunc);
  if (j.is_string() && j.get<std::string>() == "zero") return f;
  if (!j.is_object()) throw ConfigError("field must be \"zero\" or an object");
  if (j.contains("random")) {
    const auto& r = j.at("random");
    const int k = detail::required<int>(r, "max_mode");
    if (k < 1 || k > c.trunc) throw ConfigError("random max_mode must lie in [1, trunc]");
    return random_field(c.geometry, c.trunc, k, detail::optional<double>(r, "amplitude", 1.0), rng);
  }
  if (!j.contains("modes")) throw ConfigError("field needs 'modes' or 'random'");
  for (const auto& e : j.at("modes")) {
    const ModeIndex m = detail::parse_mode(e.at("m"));
    if (m.l1_norm() > c.trunc) throw ConfigError("mode " + m.str() + " exceeds the truncation");
    f.set(m, Parity::Cos, detail::optional<double>(e, "a", 0.0));
    f.set(m, Parity::Sin, detail::optional<double>(e, "b", 0.0));
  }
  return f;
}

/// Absent → zero; {"constant": field} or {"breaks": [...], "values": [field, ...]}.
inline ControlSignal parse_control(const json* j, const CommonConfig& c, Rng& rng) {
  if (!j || j->is_null()) return ControlSignal::zero(c.geometry, c.trunc, c.T);
  if (j->contains("constant")) return ControlSignal::constant(parse_field(j->at("constant"), c, rng), c.T);
  auto breaks = detail::required<std::vector<double>>(*j, "breaks");
  if (!j->contains("values")) throw ConfigError("missing key 'values'");
  std::vector<SpectralField> values;
  for (const auto& v : j->at("values")) values.push_back(parse_field(v, c, rng));
  if (breaks.size() != values.size() + 1) throw ConfigError("need one value per break interval");
  if (breaks.front() != 0.0 || breaks.back() != c.T) throw ConfigError("breaks must span [0, T]");
  return ControlSignal::piecewise_constant(std::move(breaks), std::move(values));
}

inline const json* find(const json& j, const std::string& key) { return j.contains(key) ? &j.at(key) : nullptr; }

inline json control_to_json(const ControlSignal& s) {
  json pieces = json::array();
  for (std::size_t i = 0; i < s.num_pieces(); ++i) {
    json coeffs = json::array();
    for (const auto& c : s.piece(i)) coeffs.push_back(to_json(c));
    pieces.push_back(coeffs);
  }
  return {{"breakpoints", s.breakpoints()}, {"pieces", pieces}};
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  return os;
}

// ---- commands --------------------------------------------------------------

inline int cmd_simulate(const json& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
  const CommonConfig c = parse_common(cfg, seed);
  Rng rng(c.seed);
  const SpectralField u0 =
      cfg.contains("u0") ? parse_field(cfg.at("u0"), c, rng) : SpectralField(c.geometry, c.trunc);
  const ControlSignal eta = parse_control(find(cfg, "eta"), c, rng);
  IntegratorConfig ic = c.integrator;
  if (cfg.contains("forcing")) ic.forcing = parse_control(find(cfg, "forcing"), c, rng);
  const int stride = detail::optional<int>(cfg, "snapshot_stride", 0);
  if (stride < 0) throw ConfigError("snapshot_stride must be nonnegative");

  // u0 is a velocity; the solver works with U = (I − αΔ)u
  const Trajectory traj = integrate_plain(helmholtz(u0, c.params), eta, ic, c.T);
  auto os = open_out(out / "trajectory.csv");
  traj.write_csv(os);
  if (stride > 0) write_json(out / "snapshots.json", traj.snapshots(static_cast<std::size_t>(stride)));
  json manifest = {{"command", "simulate"},
                   {"config", cfg},
                   {"seed", c.seed},
                   {"steps", traj.size() - 1},
                   {"final_state", to_json(traj.final_state())},
                   {"max_spillover", traj.max_spillover()}};
  write_json(out / "manifest.json", manifest);
  return kOk;
}

inline int cmd_relax(const json& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
  if (!cfg.contains("ks")) throw ConfigError("missing key 'ks'");
  const auto ks = detail::required<std::vector<int>>(cfg, "ks");
  if (ks.empty()) throw ConfigError("'ks' must not be empty");
  for (int k : ks) {
    if (k < 1) throw ConfigError("every k must be positive");
  }
  const std::string instance = detail::optional<std::string>(cfg, "instance", "canonical");
  const std::uint64_t s = seed ? *seed : detail::optional<std::uint64_t>(cfg, "seed", 0);

  const auto inst = canonical_relaxation_instance(s);
  std::function<ControlSignal(int)> fk;
  if (instance == "canonical") {
    fk = [&](int k) { return compute_fk(inst.vn, {inst.decomposition, k, inst.T}, inst.params); };
  } else if (instance == "zero") {
    fk = [&](int) { return ControlSignal::zero(inst.geometry, inst.trunc, inst.T); };
  } else if (instance == "flat") {
    Rng rng(s);
    const auto f = ControlSignal::constant(random_field(inst.geometry, inst.trunc, 3, 1.0, rng), inst.T);
    fk = [f](int) { return f; };
  } else {
    throw ConfigError("unknown relaxation instance '" + instance + "'");
  }

  const auto rows = relaxation_report(fk, ks, inst.params);
  auto os = open_out(out / "relax.csv");
  os << "k,sup_F,sup_Kf\n";
  std::vector<double> x, yF, yK;
  bool positive = true;
  for (const auto& r : rows) {
    os << fmt::format("{},{:.17g},{:.17g}\n", r.k, r.sup_F, r.sup_Kf);
    x.push_back(r.k);
    yF.push_back(r.sup_F);
    yK.push_back(r.sup_Kf);
    positive = positive && r.sup_F > 0 && r.sup_Kf > 0;
  }
  json manifest = {{"command", "relax"}, {"config", cfg}, {"seed", s}, {"instance", instance}};
  if (positive && rows.size() >= 2) {
    manifest["slope_F"] = loglog_slope(x, yF);
    manifest["slope_Kf"] = loglog_slope(x, yK);
  }
  write_json(out / "manifest.json", manifest);
  return kOk;
}

inline int cmd_ladder(const json& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
  const CommonConfig c = parse_common(cfg, seed);
  const int N = detail::optional<int>(cfg, "N", c.trunc);
  if (N < 3) throw ConfigError("ladder N must be at least 3");
  LadderOptions opt;
  if (cfg.contains("pair_preference")) {
    for (const auto& v : cfg.at("pair_preference")) opt.pair_preference.push_back(detail::parse_mode(v));
  }
  opt.residual_tol = detail::optional<double>(cfg, "residual_tol", opt.residual_tol);
  const Ladder ladder = ladder_build(N, c.geometry, c.params, opt);
  write_json(out / "certificate.json", certificate_json(ladder));
  return kOk;
}

/// Parsed control-synthesis run; everything validated before any solve.
struct ControlRun {
  CommonConfig common;
  SpectralField u0, uT;
  std::optional<ControlSignal> forcing;
  PipelineConfig pipeline;
};

inline ControlRun parse_control_run(const json& cfg, std::optional<std::uint64_t> seed) {
  using detail::optional;
  ControlRun r{parse_common(cfg, seed), SpectralField(TorusGeometry(1, 1), 1), SpectralField(TorusGeometry(1, 1), 1),
               std::nullopt, {}};
  const auto& c = r.common;
  Rng rng(c.seed);
  if (!cfg.contains("uT")) throw ConfigError("missing key 'uT'");
  r.u0 = cfg.contains("u0") ? parse_field(cfg.at("u0"), c, rng) : SpectralField(c.geometry, c.trunc);
  r.uT = parse_field(cfg.at("uT"), c, rng);
  if (cfg.contains("forcing")) r.forcing = parse_control(find(cfg, "forcing"), c, rng);

  PipelineConfig& p = r.pipeline;
  p.T = c.T;
  p.integrator = c.integrator;
  if (cfg.contains("epsilon") == cfg.contains("epsilon_relative")) {
    throw ConfigError("give exactly one of 'epsilon' and 'epsilon_relative'");
  }
  p.epsilon = cfg.contains("epsilon")
                  ? detail::required<double>(cfg, "epsilon")
                  : detail::required<double>(cfg, "epsilon_relative") * sobolev_norm(helmholtz(r.uT, c.params), 1.0);
  p.k_project = optional<int>(cfg, "k_project", p.k_project);
  p.k_start = optional<int>(cfg, "k_start", p.k_start);
  p.k_max = optional<int>(cfg, "k_max", p.k_max);
  p.segments = optional<int>(cfg, "segments", p.segments);
  p.ramp_fraction = optional<double>(cfg, "ramp_fraction", p.ramp_fraction);
  p.lift_factor = optional<int>(cfg, "lift_factor", p.lift_factor);
  if (cfg.contains("pair_preference")) {
    for (const auto& v : cfg.at("pair_preference")) p.ladder.pair_preference.push_back(detail::parse_mode(v));
  }
  p.validate();
  return r;
}

inline int cmd_control(const json& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
  const ControlRun run = parse_control_run(cfg, seed);
  json manifest = {{"command", "control"}, {"config", cfg}, {"seed", run.common.seed},
                   {"epsilon", run.pipeline.epsilon}};
  try {
    const auto res = synthesize(run.u0, run.uT, run.forcing ? &*run.forcing : nullptr, run.pipeline);
    json trace = json::array();
    for (const auto& r : res.trace) trace.push_back(to_json(r));
    manifest["k_project"] = res.k_project;
    manifest["projection_error"] = res.projection_error;
    manifest["stages"] = res.stages;
    manifest["trace"] = trace;
    manifest["achieved"] = res.achieved;
    manifest["u_error_v3"] = res.u_error_v3;
    manifest["u_error_bound"] = res.achieved / std::min(1.0, run.common.params.alpha);
    manifest["high_mode_flag"] = res.high_mode_flag;
    manifest["eta_final"] = control_to_json(res.eta_final);
    write_json(out / "manifest.json", manifest);
    auto os = open_out(out / "control.csv");
    write_control_csv(os, res.eta_final);
    return kOk;
  } catch (const DescentFailure& e) {
    json trace = json::array();
    for (const auto& r : e.trace()) trace.push_back(to_json(r));
    manifest["trace"] = trace;
    manifest["failure"] = {{"stage", e.stage()}, {"achieved", e.achieved()}, {"message", e.what()}};
    write_json(out / "manifest.json", manifest);
    throw;
  }
}

// ---- entry point -----------------------------------------------------------

inline spdlog::level::level_enum log_level_from_env() {
  const char* v = std::getenv("SG_LOG");
  if (!v || !*v) return spdlog::level::info;
  const std::string s(v);
  if (s == "error") return spdlog::level::err;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  throw ConfigError("SG_LOG must be one of error, info, debug");
}

inline int dispatch(const std::string& command, const std::filesystem::path& config_path,
                    const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
  try {
    spdlog::set_level(log_level_from_env());
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config " + config_path.string());
    json cfg;
    try {
      cfg = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    std::filesystem::create_directories(out);
    try {
      if (command == "simulate") return cmd_simulate(cfg, out, seed);
      if (command == "relax") return cmd_relax(cfg, out, seed);
      if (command == "ladder") return cmd_ladder(cfg, out, seed);
      if (command == "control") return cmd_control(cfg, out, seed);
    } catch (const json::exception& e) {
      throw ConfigError(e.what());
    }
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const DivergenceError& e) {
    spdlog::error("blow-up at t = {:.6g}: {}", e.time(), e.what());
    return kBlowUp;
  } catch (const StageFailure& e) {
    spdlog::error("stage {} failed with error {:.3e}: {}", e.stage(), e.achieved(), e.what());
    return kStage;
  } catch (const ContractViolation& e) {
    // bad physical parameters surface here while the config is parsed
    spdlog::error("invalid input: {}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kError;
  }
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"spectral second-grade fluid control runner"};
  app.require_subcommand(1);
  std::string config;
  std::string out = ".";
  std::uint64_t seed_value = 0;
  for (const char* name : {"simulate", "relax", "ladder", "control"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed_value, "RNG seed, overrides the config");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  auto* sub = app.get_subcommands().front();
  std::optional<std::uint64_t> seed;
  if (sub->count("--seed") > 0) seed = seed_value;
  auto logger = spdlog::get("sgf");
  if (!logger) logger = spdlog::stderr_color_mt("sgf");
  spdlog::set_default_logger(logger);
  return dispatch(sub->get_name(), config, out, seed);
}

}  // namespace sgf::cli
