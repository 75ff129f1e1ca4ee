#pragma once

// Generating controls for single modes: for l = m + n, find a in
// span{c_m, s_m, c_n, s_n} with B(a) + c·e_l in span{c_{m−n}, s_{m−n}}, and
// the ladder that reaches every mode of H^N_q from H³_q.

#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sgf/bilinear.hpp"
#include "sgf/json_io.hpp"
#include "sgf/mode_subspace.hpp"

namespace sgf {

struct Generator {
  ModeIndex mode;
  Parity parity;
  double coeff;
};

struct LadderStep {
  ModeIndex target;
  Parity parity;
  ModeIndex m, n;
  std::array<Generator, 2> generators;  // a = Σ coeff · e(mode, parity)
  double target_coeff = 1.0;            // B(a) + target_coeff · e_l = remainder
  SpectralField remainder;              // in span{c_{m−n}, s_{m−n}}
  double coupling = 0.0;                // e_l coefficient of B_sym of the two unit generators
  double fg_inner = 0.0;                // <F, G>
  double off_span_residual = 0.0;       // oracle check, relative to |target_coeff|·‖e_l‖
  int level = 0;
  bool substituted = false;

  SpectralField control(int trunc) const {
    SpectralField a(remainder.geometry(), trunc);
    for (const auto& g : generators) a.add_to(g.mode, g.parity, g.coeff);
    return a;
  }
};

namespace detail {

inline int step_trunc(const ModeIndex& l, const ModeIndex& m, const ModeIndex& n) {
  int t = std::max({l.l1_norm(), m.l1_norm(), n.l1_norm()});
  if (auto d = mode_difference(m, n)) t = std::max(t, d->l1_norm());
  return t;
}

/// F for generator vectors ã ∥ m^{q,⊥}, b̃ ∥ n^{q,⊥}, and <F, G> with G = ((l2)q1, −(l1)q2).
inline double fg_inner_direct(const ModeIndex& m, const Vec2& a, const ModeIndex& n, const Vec2& b,
                              const SobolevParams& p, const TorusGeometry& g) {
  const Vec2 ap = rot90(a), bp = rot90(b);
  const double cm = 1.0 + p.alpha * stokes_eigenvalue(m, g), cn = 1.0 + p.alpha * stokes_eigenvalue(n, g);
  const double wm = inner_q(ap, m.as_vec(), g), wn = inner_q(bp, n.as_vec(), g);
  const Vec2 F{wm / cn * bp[0] + wn / cm * ap[0], wm / cn * bp[1] + wn / cm * ap[1]};
  const Vec2 G{(m.m2() + n.m2()) * g.q1, -(m.m1() + n.m1()) * g.q2};
  return dot(F, G);
}

}  // namespace detail

/// Closed form C_f C_g q1² q2² (M_q − N_q)(n1 m2 − n2 m1) / C with
/// ã = C_f (m2 q1, −m1 q2), b̃ = C_g (n2 q1, −n1 q2), C = (1+α‖m‖²)(1+α‖n‖²).
inline double fg_inner_closed_form(const ModeIndex& m, double cf, const ModeIndex& n, double cg, const SobolevParams& p,
                                   const TorusGeometry& g) {
  const double lm = stokes_eigenvalue(m, g), ln = stokes_eigenvalue(n, g);
  const double C = (1 + p.alpha * lm) * (1 + p.alpha * ln);
  const double Mq = (1 + p.alpha * lm) * lm, Nq = (1 + p.alpha * ln) * ln;
  return cf * cg * g.q1 * g.q1 * g.q2 * g.q2 * (Mq - Nq) * (n.m1() * m.m2() - n.m2() * m.m1()) / C;
}

/// Solve for the generating control of target_coeff · e(l, parity) through (m, n).
inline LadderStep saturation_solve(const ModeIndex& l, Parity parity, const ModeIndex& m, const ModeIndex& n,
                                   const SobolevParams& p, const TorusGeometry& g, double target_coeff = 1.0) {
  const auto sum = mode_sum(m, n);
  if (!sum || *sum != l) throw RejectedPairError("m + n must equal " + l.str());
  if (parallel(m, n)) throw RejectedPairError("m = " + m.str() + " and n = " + n.str() + " are parallel");
  const double lm = stokes_eigenvalue(m, g), ln = stokes_eigenvalue(n, g);
  if (std::abs(lm - ln) <= 1e-12 * std::max(lm, ln)) {
    throw RejectedPairError("‖m‖_q = ‖n‖_q for m = " + m.str() + ", n = " + n.str());
  }
  if (target_coeff == 0.0) throw ContractViolation("target coefficient must be nonzero");

  const int trunc = detail::step_trunc(l, m, n);
  auto coupling = [&](Parity pm, Parity pn) {
    const auto em = SpectralField::single_mode(g, trunc, m, pm);
    const auto en = SpectralField::single_mode(g, trunc, n, pn);
    return B_sym(em, en, p).coefficient(l, parity);
  };

  Parity pm = Parity::Cos, pn = Parity::Sin;
  double K = 0.0;
  if (parity == Parity::Cos) {
    K = coupling(pm, pn);
  } else {
    pn = Parity::Cos;
    K = coupling(pm, pn);
    if (std::abs(K) < 1e-12) {
      pm = pn = Parity::Sin;
      K = coupling(pm, pn);
    }
  }
  if (std::abs(K) < 1e-12) throw DegenerateGeometryError("vanishing coupling for target " + l.str());

  // B(A e_m + G e_n) = A G K e_l + (m − n part); A G K = −target_coeff.
  const double A = std::sqrt(std::abs(target_coeff) / std::abs(K));
  const double Gc = -std::copysign(1.0, target_coeff * K) * A;

  LadderStep step{l, parity, m, n,
                  {Generator{m, pm, A}, Generator{n, pn, Gc}},
                  target_coeff, SpectralField(g, trunc), K};
  const SpectralField a = step.control(trunc);
  // keep only the m − n part; rounding left at e_l shows up in off_span_residual
  const SpectralField b = B_quad(a, p);
  const ModeIndex diff = *mode_difference(m, n);
  for (Parity par : {Parity::Cos, Parity::Sin}) step.remainder.set(diff, par, b.coefficient(diff, par));

  const Vec2 vm = perp_q(m, g), vn = perp_q(n, g);
  step.fg_inner = detail::fg_inner_direct(m, {A * vm[0], A * vm[1]}, n, {Gc * vn[0], Gc * vn[1]}, p, g);
  if (std::abs(step.fg_inner) < 1e-12) throw DegenerateGeometryError("<F,G> vanishes for target " + l.str());

  // Independent check: the quadrature oracle, projected onto modes up to 2·trunc.
  SpectralField full = direct_B(a, a, p, 4 * trunc + 1, 2 * trunc);
  full.add_to(l, parity, target_coeff);
  if (auto d = mode_difference(m, n)) {
    full.set(*d, Parity::Cos, 0.0);
    full.set(*d, Parity::Sin, 0.0);
  }
  step.off_span_residual = sobolev_norm(full, 0.0) / (std::abs(target_coeff) * std::sqrt(g.mass()));
  return step;
}

/// (m, n) prescribed for a canonical target l with |l| ≥ 4.
inline std::pair<ModeIndex, ModeIndex> prescribed_pair(const ModeIndex& l) {
  const int l1 = l.m1(), l2 = l.m2();
  if (l2 == 0) return {ModeIndex(l1 - 1, 1), ModeIndex(1, -1)};
  if (l1 == 0) return {ModeIndex(1, l2 - 1), ModeIndex(-1, 1)};
  if (l1 >= 2) return {ModeIndex(l1 - 1, l2), ModeIndex(1, 0)};
  const int s = l2 > 0 ? 1 : -1;
  return {ModeIndex(l1, l2 - s), ModeIndex(0, s)};
}

/// Level of E_j certifying mode l along the prescribed recursion.
inline int nominal_level(const ModeIndex& l) {
  const int k = l.l1_norm() - 3;
  if (k <= 0) return 0;
  return l.is_axis() ? 2 * k : 2 * k - 1;
}

struct LadderOptions {
  std::vector<ModeIndex> pair_preference;  // n candidates tried before the prescribed pair
  double residual_tol = 1e-10;
};

class Ladder {
 public:
  Ladder(TorusGeometry g, SobolevParams p, int n) : geom_(g), params_(p), n_(n) {}

  const std::vector<LadderStep>& steps() const noexcept { return steps_; }
  int max_mode() const noexcept { return n_; }
  const TorusGeometry& geometry() const noexcept { return geom_; }
  const SobolevParams& params() const noexcept { return params_; }

  int level(const ModeIndex& m) const {
    if (m.l1_norm() <= 3) return 0;
    auto it = levels_.find(m.canonical());
    if (it == levels_.end()) throw ContractViolation("mode " + m.str() + " is not certified by the ladder");
    return it->second;
  }
  bool certified(const ModeIndex& m) const { return m.l1_norm() <= 3 || levels_.count(m.canonical()) > 0; }
  int max_level() const {
    int k = 0;
    for (const auto& [m, lev] : levels_) k = std::max(k, lev);
    return k;
  }

  const LadderStep& step(const ModeIndex& l, Parity parity) const {
    for (const auto& s : steps_) {
      if (s.target == l.canonical() && s.parity == parity) return s;
    }
    throw ContractViolation("no ladder step for " + l.str());
  }

  void add(LadderStep s) {
    auto& lev = levels_[s.target];
    lev = std::max(lev, s.level);
    steps_.push_back(std::move(s));
  }

 private:
  TorusGeometry geom_;
  SobolevParams params_;
  int n_;
  std::vector<LadderStep> steps_;
  std::map<ModeIndex, int> levels_;
};

/// Steps for every c_l, s_l with 4 ≤ |l| ≤ N, non-axis targets before axis
/// targets at each |l|.  The first candidate pair is the preferred one if
/// given, else the prescribed one.  A candidate whose generators are not yet
/// certified, or that violates the hypotheses for this q, is replaced by the
/// next of: prescribed pair, n ∈ {(1,0),(0,1),(1,−1),(1,1)} and sign variants.
/// Any replacement is recorded as a substitution.
inline Ladder ladder_build(int N, const TorusGeometry& g, const SobolevParams& p, const LadderOptions& opt = {}) {
  if (N < 3) throw ContractViolation("ladder needs N ≥ 3");
  Ladder ladder(g, p, N);
  std::vector<ModeIndex> fallback;
  for (const auto& v : {ModeIndex(1, 0), ModeIndex(0, 1), ModeIndex(1, -1), ModeIndex(1, 1)}) {
    fallback.push_back(v);
    fallback.push_back(-v);
  }

  for (int size = 4; size <= N; ++size) {
    std::vector<ModeIndex> targets;
    for (const auto& l : ModeLayout::get(size)->modes()) {
      if (l.l1_norm() == size && !l.is_axis()) targets.push_back(l);
    }
    for (const auto& l : ModeLayout::get(size)->modes()) {
      if (l.l1_norm() == size && l.is_axis()) targets.push_back(l);
    }
    for (const auto& l : targets) {
      for (Parity par : {Parity::Cos, Parity::Sin}) {
        std::vector<std::pair<ModeIndex, ModeIndex>> candidates;
        for (const auto& n : opt.pair_preference) {
          if (auto m = mode_difference(l, n)) candidates.emplace_back(*m, n);
        }
        const auto pres = prescribed_pair(l);
        candidates.push_back(pres);
        for (const auto& n : fallback) {
          if (auto m = mode_difference(l, n)) candidates.emplace_back(*m, n);
        }
        bool done = false;
        for (std::size_t ci = 0; ci < candidates.size() && !done; ++ci) {
          const auto& [m, n] = candidates[ci];
          const auto diff = mode_difference(m, n);
          if (!ladder.certified(m) || !ladder.certified(n) || (diff && !ladder.certified(*diff))) continue;
          if (m.canonical() == l || n.canonical() == l || (diff && diff->canonical() == l)) continue;
          try {
            LadderStep s = saturation_solve(l, par, m, n, p, g);
            if (s.off_span_residual > opt.residual_tol) continue;
            int gen = std::max(ladder.level(m), ladder.level(n));
            if (diff) gen = std::max(gen, ladder.level(*diff));
            s.level = std::max(nominal_level(l), gen + 1);
            s.substituted = ci != 0;
            if (s.substituted) {
              spdlog::info("ladder: target {} {} uses pair m={} n={} instead of m={} n={}", l.str(), parity_name(par),
                           m.str(), n.str(), candidates[0].first.str(), candidates[0].second.str());
            }
            ladder.add(std::move(s));
            done = true;
          } catch (const RejectedPairError&) {
          } catch (const DegenerateGeometryError&) {
          }
        }
        if (!done) throw LadderFailure("no admissible generator pair for " + l.str() + " " + parity_name(par));
      }
    }
  }
  return ladder;
}

/// Recompute target_coeff · e_l = remainder − B(a) from the recorded data; returns the V⁰ residual.
inline double replay(const LadderStep& s, const SobolevParams& p) {
  const int trunc = s.remainder.trunc();
  SpectralField lhs = s.remainder - B_quad(s.control(trunc), p);
  lhs.add_to(s.target, s.parity, -s.target_coeff);
  return sobolev_norm(lhs, 0.0) / std::sqrt(s.remainder.geometry().mass());
}

inline nlohmann::json to_json(const LadderStep& s) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& g : s.generators) {
    gens.push_back({{"m", {g.mode.m1(), g.mode.m2()}}, {"parity", parity_name(g.parity)}, {"coeff", g.coeff}});
  }
  return {{"target", {{"m", {s.target.m1(), s.target.m2()}}, {"parity", parity_name(s.parity)}}},
          {"m", {s.m.m1(), s.m.m2()}},
          {"n", {s.n.m1(), s.n.m2()}},
          {"generators", gens},
          {"target_coeff", s.target_coeff},
          {"remainder", to_json(s.remainder)},
          {"coupling", s.coupling},
          {"fg_inner", s.fg_inner},
          {"off_span_residual", s.off_span_residual},
          {"level", s.level},
          {"substituted", s.substituted}};
}

inline nlohmann::json certificate_json(const Ladder& ladder) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : ladder.steps()) steps.push_back(to_json(s));
  return {{"q", {ladder.geometry().q1, ladder.geometry().q2}},
          {"alpha", ladder.params().alpha},
          {"N", ladder.max_mode()},
          {"max_level", ladder.max_level()},
          {"substitutions",
           std::count_if(ladder.steps().begin(), ladder.steps().end(), [](const LadderStep& s) { return s.substituted; })},
          {"steps", steps}};
}

/// Rebuild a step from certificate JSON without re-solving.
inline LadderStep step_from_json(const nlohmann::json& j) {
  auto mode = [](const nlohmann::json& v) { return ModeIndex(v.at(0).get<int>(), v.at(1).get<int>()); };
  const auto& gj = j.at("generators");
  auto gen = [&](const nlohmann::json& x) {
    return Generator{mode(x.at("m")), parse_parity(x.at("parity").get<std::string>()), x.at("coeff").get<double>()};
  };
  LadderStep s{mode(j.at("target").at("m")), parse_parity(j.at("target").at("parity").get<std::string>()),
               mode(j.at("m")), mode(j.at("n")), {gen(gj.at(0)), gen(gj.at(1))}, j.at("target_coeff").get<double>(),
               field_from_json(j.at("remainder")), j.at("coupling").get<double>()};
  s.fg_inner = j.at("fg_inner").get<double>();
  s.off_span_residual = j.at("off_span_residual").get<double>();
  s.level = j.at("level").get<int>();
  s.substituted = j.at("substituted").get<bool>();
  return s;
}

/// Coordinate directions of F(E) = E + span{B(ρ, σ) + B(σ, ρ) : ρ, σ ∈ E} with
/// |m| ≤ budget.  E is restricted to |m| ≤ budget first, so the result is a
/// certified subset.
inline ModeSubspace F_of(const ModeSubspace& E, int budget, const SobolevParams& p, const TorusGeometry& g) {
  if (budget < 1) throw ContractViolation("budget must be positive");
  std::vector<ModeSubspace::Entry> base;
  for (const auto& e : E.entries()) {
    if (e.mode.l1_norm() <= budget) base.push_back(e);
  }
  if (base.empty()) return {};
  const int work = std::max(budget, 2 * std::min(budget, E.max_l1()));
  const auto layout = ModeLayout::get(work);
  const std::size_t rows = layout->dims();
  const std::size_t cols = base.size() + base.size() * (base.size() - 1) / 2;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t c = 0;
  std::vector<SpectralField> unit;
  for (const auto& e : base) unit.push_back(SpectralField::single_mode(g, work, e.mode, e.parity));
  for (const auto& u : unit) {
    for (std::size_t r = 0; r < rows; ++r) M(r, c) = u[r];
    ++c;
  }
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      const auto b = B_sym(unit[i], unit[j], p);
      const double nb = std::sqrt(std::inner_product(b.coeffs().begin(), b.coeffs().end(), b.coeffs().begin(), 0.0));
      if (nb > 0)
        for (std::size_t r = 0; r < rows; ++r) M(r, c) = b[r] / nb;
      ++c;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd Q = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);

  ModeSubspace out;
  for (std::size_t r = 0; r < rows; ++r) {
    const ModeIndex& m = layout->mode(ModeLayout::slot_of(r));
    if (m.l1_norm() > budget) continue;
    if (Q.row(static_cast<Eigen::Index>(r)).squaredNorm() > 1.0 - 1e-8) out.insert(m, ModeLayout::parity_of(r));
  }
  return out;
}

}  // namespace sgf
