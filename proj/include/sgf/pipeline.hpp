#pragma once

// Control synthesis: the straight-line reference trajectory and its exact
// control, projection onto H^k_q, and the descent E_N → E_0 = H³_q.

#include <cmath>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sgf/convexify.hpp"
#include "sgf/saturation.hpp"

namespace sgf {

struct PipelineConfig {
  double T = 1.0;
  double epsilon = 0.1;       // target accuracy, V¹ norm of the transformed state
  int k_project = 3;          // first projection level tried
  int k_start = 16;           // oscillation count of the first attempt in each stage
  int k_max = 1024;           // retry cap
  int segments = 16;          // piecewise-constantization grid
  double ramp_fraction = 0.25;  // ramp = fraction × shortest oscillation slot
  int lift_factor = 4;        // l = lift_factor × k
  double high_mode_fraction = 0.1;
  IntegratorConfig integrator;
  LadderOptions ladder;

  void validate() const {
    if (!(T > 0.0)) throw ConfigError("T must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (k_project < 3) throw ConfigError("k_project must be at least 3");
    if (k_start < 1 || k_max < k_start) throw ConfigError("need 1 ≤ k_start ≤ k_max");
    if (segments < 1) throw ConfigError("segments must be positive");
    if (!(ramp_fraction > 0.0 && ramp_fraction < 0.5)) throw ConfigError("ramp_fraction must lie in (0, 0.5)");
    if (lift_factor < 1) throw ConfigError("lift_factor must be positive");
    integrator.validate();
  }
};

struct ReferenceControl {
  ControlSignal ubar;       // Ū(t) = (I − αΔ)((T − t)u0 + t uT)/T
  ControlSignal eta_exact;  // ∂_tŪ + LŪ + B(Ū) − P f
  Trajectory trajectory(int samples = 101) const {
    Trajectory tr;
    for (int i = 0; i <= samples - 1; ++i) {
      const double t = ubar.horizon() * i / (samples - 1);
      tr.push(t, ubar.value(t), 0.0);
    }
    return tr;
  }
};

/// With Ū = U0 + tD: η = (D + LU0 + B(U0)) + t(LD + B(U0,D) + B(D,U0)) + t² B(D) − P f.
inline ReferenceControl reference_control(const SpectralField& u0, const SpectralField& uT, const ControlSignal* f,
                                          double T, const SobolevParams& p) {
  u0.require_compatible(uT);
  const SpectralField U0 = helmholtz(u0, p);
  const SpectralField D = (1.0 / T) * (helmholtz(uT, p) - U0);
  SpectralField c0 = D + op_L(U0, p) + B_quad(U0, p);
  SpectralField c1 = op_L(D, p) + B_sym(U0, D, p);
  SpectralField c2 = B_quad(D, p);
  auto eta = ControlSignal::piecewise_polynomial({0.0, T}, {{std::move(c0), std::move(c1), std::move(c2)}});
  if (f) eta = eta - *f;
  return {ControlSignal::piecewise_polynomial({0.0, T}, {{U0, D}}), std::move(eta)};
}

inline ControlSignal project_control(const ControlSignal& eta, int k) {
  if (k < 1) throw ContractViolation("projection level must be positive");
  return eta.projected(k);
}

struct StageReport {
  int stage = 0;
  ModeSubspace support;   // support of the incoming control
  double error = 0.0;     // ‖U^{j−1}(T) − U^j(T)‖_{V¹}
  double budget = 0.0;
  bool pass = false;
  bool pass_through = false;
  int k = 0;              // oscillation count that was accepted (or last tried)
  int attempts = 0;
  std::vector<std::pair<int, double>> tries;  // (k, error) per attempt
};

inline nlohmann::json to_json(const StageReport& r) {
  nlohmann::json tries = nlohmann::json::array();
  for (const auto& [k, e] : r.tries) tries.push_back({{"k", k}, {"error", e}});
  return {{"stage", r.stage},       {"support", to_json(r.support)}, {"error", r.error}, {"budget", r.budget},
          {"pass", r.pass},         {"pass_through", r.pass_through}, {"k", r.k},        {"attempts", r.attempts},
          {"tries", tries}};
}

/// Stage failure with the reports of every stage run so far, the failing one last.
class DescentFailure : public StageFailure {
 public:
  DescentFailure(const std::string& what, std::vector<StageReport> trace)
      : StageFailure(what, trace.back().stage, trace.back().error), trace_(std::move(trace)) {}
  const std::vector<StageReport>& trace() const noexcept { return trace_; }

 private:
  std::vector<StageReport> trace_;
};

namespace detail {

inline int coordinate_level(const Ladder* ladder, const ModeIndex& m) {
  if (m.l1_norm() <= 3) return 0;
  if (!ladder) throw ContractViolation("mode " + m.str() + " needs a ladder");
  return ladder->level(m);
}

/// Split a field into the coordinates at level j and the rest.
inline std::pair<SpectralField, SpectralField> split_level(const SpectralField& f, const Ladder* ladder, int j) {
  SpectralField top(f.geometry(), f.trunc()), low = f;
  for (std::size_t s = 0; s < f.layout().num_modes(); ++s) {
    if (f[2 * s] == 0.0 && f[2 * s + 1] == 0.0) continue;
    const int lev = coordinate_level(ladder, f.layout().mode(s));
    if (lev > j) throw ContractViolation("control has a mode above level " + std::to_string(j));
    if (lev == j) {
      top[2 * s] = f[2 * s];
      top[2 * s + 1] = f[2 * s + 1];
      low[2 * s] = low[2 * s + 1] = 0.0;
    }
  }
  return {top, low};
}

inline int signal_level(const ControlSignal& s, const Ladder* ladder, std::string* top_mode = nullptr) {
  int lev = 0;
  const ModeSubspace sup = s.support();
  for (const auto& e : sup.entries()) {
    const int l = coordinate_level(ladder, e.mode);
    if (l > lev && top_mode) *top_mode = e.mode.str();
    lev = std::max(lev, l);
  }
  return lev;
}

/// Signal averages over a grid (preserves ∫ on every grid piece).
inline ControlSignal piecewise_average(const ControlSignal& s, const std::vector<double>& grid) {
  const ControlSignal F = s.integral();
  std::vector<SpectralField> values;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = grid[i], b = grid[i + 1];
    values.push_back((1.0 / (b - a)) * (F.eval_piece(F.piece_index(0.5 * (a + b)), b) -
                                        F.eval_piece(F.piece_index(0.5 * (a + b)), a)));
  }
  return ControlSignal::piecewise_constant(grid, std::move(values));
}

}  // namespace detail

struct StageResult {
  ControlSignal eta;
  StageReport report;
  SpectralField end_state;
};

/// One descent step: η_j ∈ E_j → η_{j−1} ∈ E_{j−1} with end-state error checked
/// against `reference_end` by integration.
inline StageResult stage_descend(const ControlSignal& eta_j, int j, const Ladder* ladder, double budget,
                                 const SpectralField& u0, const SpectralField& reference_end,
                                 const PipelineConfig& cfg) {
  const double T = eta_j.horizon();
  StageReport rep;
  rep.stage = j;
  rep.budget = budget;
  rep.support = eta_j.support();
  if (detail::signal_level(eta_j, ladder) > j) throw ContractViolation("control is not supported in E_j");

  ControlSignal top = eta_j.map([&](const SpectralField& f) { return detail::split_level(f, ladder, j).first; });
  if (top.is_zero()) {
    rep.pass = rep.pass_through = true;
    return {eta_j, rep, reference_end};
  }
  const ControlSignal low = eta_j - top;

  // grid: uniform segments merged with the top part's own breakpoints
  std::vector<double> uniform;
  for (int i = 0; i <= cfg.segments; ++i) uniform.push_back(T * i / cfg.segments);
  const auto grid = ControlSignal::merge_breakpoints({&uniform, &top.breakpoints()}, T);
  const ControlSignal top_pc = detail::piecewise_average(top, grid);

  const SpectralField zero(u0.geometry(), u0.trunc());
  std::vector<std::optional<ConvexDecomposition>> decomp;
  std::vector<SpectralField> eta_tilde;
  for (std::size_t s = 0; s + 1 < grid.size(); ++s) {
    const SpectralField& c = top_pc.piece(s)[0];
    std::vector<double> alphas;
    std::vector<SpectralField> dirs;
    SpectralField et = zero;
    double total = 0.0;
    for (std::size_t i = 0; i < c.dims(); ++i) total += std::abs(c[i]);
    for (std::size_t i = 0; i < c.dims(); ++i) {
      // dwell fractions below this merge into their neighbours' breakpoints
      if (std::abs(c[i]) <= 1e-11 * total) continue;
      const ModeIndex& l = c.layout().mode(ModeLayout::slot_of(i));
      const Parity par = ModeLayout::parity_of(i);
      const LadderStep& st = ladder->step(l, par);
      // unit generator â with B(â) = sgn(c)(−e_l + r); α = |c|
      const double sg = c[i] > 0 ? 1.0 : -1.0;
      SpectralField dir = zero;
      dir.add_to(st.generators[0].mode, st.generators[0].parity, st.generators[0].coeff);
      dir.add_to(st.generators[1].mode, st.generators[1].parity, sg * st.generators[1].coeff);
      alphas.push_back(std::abs(c[i]));
      dirs.push_back(std::move(dir));
      et.axpy(c[i] / st.target_coeff, resize(st.remainder, zero.trunc()));
    }
    eta_tilde.push_back(et);
    if (alphas.empty()) {
      decomp.emplace_back();
    } else {
      decomp.emplace_back(convex_decompose(et, alphas, dirs));
    }
  }
  const ControlSignal eta_ext = low + ControlSignal::piecewise_constant(grid, eta_tilde);

  for (int k = cfg.k_start;; k *= 2) {
    std::vector<double> breaks;
    std::vector<SpectralField> values;
    for (std::size_t s = 0; s + 1 < grid.size(); ++s) {
      if (decomp[s]) {
        append_oscillation(*decomp[s], k, grid[s], grid[s + 1], breaks, values);
      } else {
        breaks.push_back(grid[s]);
        values.push_back(zero);
      }
    }
    breaks.push_back(T);
    double slot = T;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) slot = std::min(slot, breaks[i + 1] - breaks[i]);
    const ControlSignal zeta = ControlSignal::piecewise_constant(breaks, std::move(values));
    const ControlSignal eta_next = lift_extended_control(eta_ext, zeta, cfg.ramp_fraction * slot, cfg.lift_factor * k);

    IntegratorConfig ic = cfg.integrator;
    ic.record_states = false;
    const SpectralField end = integrate_plain(u0, eta_next, ic, T).final_state();
    const double err = sobolev_norm(end - reference_end, 1.0);
    rep.tries.emplace_back(k, err);
    rep.attempts = static_cast<int>(rep.tries.size());
    rep.k = k;
    rep.error = err;
    spdlog::info("stage {}: k = {} error {:.3e} budget {:.3e} ({} pieces)", j, k, err, budget, eta_next.num_pieces());
    if (err <= budget) {
      rep.pass = true;
      std::string top_mode;
      if (detail::signal_level(eta_next, ladder, &top_mode) > j - 1) {
        throw ContractViolation("stage " + std::to_string(j) + " left its target space at mode " + top_mode);
      }
      return {eta_next, rep, end};
    }
    if (2 * k > cfg.k_max) break;
  }
  throw DescentFailure("stage " + std::to_string(j) + " missed its budget at the retry cap", {rep});
}

struct SynthesisResult {
  ControlSignal eta_final;
  std::vector<StageReport> trace;
  double achieved = 0.0;        // ‖U⁰(T) − U_T‖_{V¹}
  double u_error_v3 = 0.0;      // ‖u(T) − u_T‖_{V³}
  double projection_error = 0.0;
  int k_project = 0;
  int stages = 0;
  bool high_mode_flag = false;
  SpectralField final_state;
};

/// Fraction of V¹ energy in modes with |m| > trunc/2.
inline double high_mode_fraction(const SpectralField& f) {
  double hi = 0, all = 0;
  const auto& layout = f.layout();
  for (std::size_t s = 0; s < layout.num_modes(); ++s) {
    const double w = (1 + stokes_eigenvalue(layout.mode(s), f.geometry())) * (f[2 * s] * f[2 * s] + f[2 * s + 1] * f[2 * s + 1]);
    all += w;
    if (2 * layout.mode(s).l1_norm() > f.trunc()) hi += w;
  }
  return all > 0 ? hi / all : 0.0;
}

inline SynthesisResult synthesize(const SpectralField& u0, const SpectralField& uT, const ControlSignal* f,
                                  const PipelineConfig& cfg) {
  cfg.validate();
  u0.require_compatible(uT);
  const auto& p = cfg.integrator.params;
  const double T = cfg.T;
  SynthesisResult res{ControlSignal::zero(u0.geometry(), u0.trunc(), T), {}, 0, 0, 0, 0, 0, false, u0};
  res.high_mode_flag = high_mode_fraction(helmholtz(u0, p)) > cfg.high_mode_fraction ||
                       high_mode_fraction(helmholtz(uT, p)) > cfg.high_mode_fraction;
  if (res.high_mode_flag) spdlog::warn("inputs carry more than the allowed V¹ fraction in high modes");

  IntegratorConfig ic = cfg.integrator;
  ic.record_states = false;
  if (f) ic.forcing = *f;
  PipelineConfig scfg = cfg;
  scfg.integrator = ic;

  const SpectralField U0 = helmholtz(u0, p), UT = helmholtz(uT, p);
  const auto ref = reference_control(u0, uT, f, T, p);

  int k = cfg.k_project;
  ControlSignal eta = project_control(ref.eta_exact, k);
  SpectralField end = integrate_plain(U0, eta, ic, T).final_state();
  while (sobolev_norm(end - UT, 1.0) > cfg.epsilon && k < u0.trunc()) {
    ++k;
    eta = project_control(ref.eta_exact, k);
    end = integrate_plain(U0, eta, ic, T).final_state();
  }
  res.k_project = k;
  res.projection_error = sobolev_norm(end - UT, 1.0);
  spdlog::info("projection onto H^{}: error {:.3e} (epsilon {:.3e})", k, res.projection_error, cfg.epsilon);

  const int N = 2 * (std::max(k, 3) - 3);
  res.stages = N;
  std::optional<Ladder> ladder;
  if (k > 3) ladder = ladder_build(k, u0.geometry(), p, cfg.ladder);
  for (int j = N; j >= 1; --j) {
    const double budget = cfg.epsilon / std::pow(2.0, N - j);
    std::optional<StageResult> st;
    try {
      st = stage_descend(eta, j, ladder ? &*ladder : nullptr, budget, U0, end, scfg);
    } catch (const DescentFailure& e) {
      auto trace = res.trace;
      trace.insert(trace.end(), e.trace().begin(), e.trace().end());
      throw DescentFailure(e.what(), std::move(trace));
    }
    res.trace.push_back(st->report);
    eta = std::move(st->eta);
    end = st->end_state;
  }
  if (!ModeSubspace::low_modes(3).includes(eta.support())) {
    throw ContractViolation("final control is not supported in H³_q");
  }
  res.eta_final = eta;
  res.final_state = end;
  res.achieved = sobolev_norm(end - UT, 1.0);
  res.u_error_v3 = sobolev_norm(helmholtz(end - UT, p, true), 3.0);
  return res;
}

/// Rows (t, mode, parity, value) at every piece start, at `samples` − 1 interior
/// points of non-constant pieces, and at T.
inline void write_control_csv(std::ostream& os, const ControlSignal& eta, int samples = 8) {
  os << "t,m1,m2,parity,value\n";
  auto dump = [&](double t, const SpectralField& v) {
    for (std::size_t i = 0; i < v.dims(); ++i) {
      if (v[i] == 0.0) continue;
      const auto& m = v.layout().mode(ModeLayout::slot_of(i));
      os << fmt::format("{:.17g},{},{},{},{:.17g}\n", t, m.m1(), m.m2(), parity_name(ModeLayout::parity_of(i)), v[i]);
    }
  };
  const auto& br = eta.breakpoints();
  for (std::size_t i = 0; i < eta.num_pieces(); ++i) {
    const int n = eta.piece(i).size() > 1 ? samples : 1;
    for (int s = 0; s < n; ++s) {
      const double t = br[i] + (br[i + 1] - br[i]) * s / n;
      dump(t, eta.eval_piece(i, t));
    }
  }
  dump(eta.horizon(), eta.value(eta.horizon()));
}

}  // namespace sgf
