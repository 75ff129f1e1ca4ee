#pragma once

// Convex decomposition of F(E) controls, the oscillating relaxation control
// ψ_k, the residual f_k = g_k + h_k, and the C¹ lift of ζ into η.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgf/dynamics.hpp"

namespace sgf {

struct ConvexDecomposition {
  SpectralField eta;
  std::vector<double> lambdas;
  std::vector<SpectralField> rhos;
};

/// λ_j = α_j/(2α), ρ^j = √α ρ̃^j, ρ^{j+k} = −ρ^j with α = Σ α_j.
inline ConvexDecomposition convex_decompose(const SpectralField& tilde_eta, const std::vector<double>& alphas,
                                            const std::vector<SpectralField>& rhotildes) {
  if (alphas.empty() || alphas.size() != rhotildes.size()) {
    throw ContractViolation("need one weight per direction");
  }
  double total = 0.0;
  for (double a : alphas) {
    if (!(a > 0.0)) throw ContractViolation("decomposition weights must be positive");
    total += a;
  }
  const std::size_t k = alphas.size();
  const double root = std::sqrt(total);
  ConvexDecomposition d{tilde_eta, std::vector<double>(2 * k), {}};
  for (std::size_t j = 0; j < k; ++j) {
    tilde_eta.require_compatible(rhotildes[j]);
    d.lambdas[j] = d.lambdas[j + k] = alphas[j] / (2.0 * total);
  }
  for (std::size_t j = 0; j < k; ++j) d.rhos.push_back(root * rhotildes[j]);
  for (std::size_t j = 0; j < k; ++j) d.rhos.push_back(-(root * rhotildes[j]));
  return d;
}

/// η̄ = η̃ − Σ α_j B(ρ̃^j), the F(E) element a decomposition represents.
inline SpectralField decomposition_target(const SpectralField& tilde_eta, const std::vector<double>& alphas,
                                          const std::vector<SpectralField>& rhotildes, const SobolevParams& p) {
  SpectralField out = tilde_eta;
  for (std::size_t j = 0; j < alphas.size(); ++j) out.axpy(-alphas[j], B_quad(rhotildes[j], p));
  return out;
}

inline nlohmann::json to_json(const ConvexDecomposition& d) {
  nlohmann::json rhos = nlohmann::json::array();
  for (const auto& r : d.rhos) rhos.push_back(to_json(r));
  return {{"eta", to_json(d.eta)}, {"lambdas", d.lambdas}, {"rhos", rhos}};
}

struct OscillationProfile {
  ConvexDecomposition decomposition;
  int k = 1;
  double T = 1.0;
};

/// Breakpoints and values of φ(k(t − t0)/(t1 − t0)) on [t0, t1); breakpoints
/// exclude t1.
inline void append_oscillation(const ConvexDecomposition& d, int k, double t0, double t1,
                               std::vector<double>& breaks, std::vector<SpectralField>& values) {
  if (k < 1) throw ContractViolation("oscillation count must be at least 1");
  const double period = (t1 - t0) / k;
  std::vector<double> cum{0.0};
  for (double l : d.lambdas) cum.push_back(cum.back() + l);
  for (int p = 0; p < k; ++p) {
    const double base = t0 + p * period;
    for (std::size_t j = 0; j < d.rhos.size(); ++j) {
      breaks.push_back(j == 0 ? base : base + period * cum[j]);
      values.push_back(d.rhos[j]);
    }
  }
}

/// ψ_k(t) = φ(kt/T), φ = ρ^j on [Σ_{i<j} λ_i, Σ_{i≤j} λ_i) and 1-periodic.
inline ControlSignal build_psi_k(const OscillationProfile& prof) {
  std::vector<double> breaks;
  std::vector<SpectralField> values;
  append_oscillation(prof.decomposition, prof.k, 0.0, prof.T, breaks, values);
  breaks.push_back(prof.T);
  return ControlSignal::piecewise_constant(std::move(breaks), std::move(values));
}

namespace detail {

/// Piece of t ↦ F(VN(t)) as a quadratic in τ, exact when F is quadratic and VN affine.
inline ControlSignal::Piece quadratic_piece(const std::function<SpectralField(const SpectralField&)>& fn,
                                            const ControlSignal& vn, std::size_t vn_piece, double a, double b) {
  const auto& p = vn.piece(vn_piece);
  if (p.size() == 1) return {fn(p[0])};
  if (p.size() > 2) throw ContractViolation("reference trajectory must be piecewise affine");
  const double h = b - a;
  const SpectralField y0 = fn(vn.eval_piece(vn_piece, a));
  const SpectralField ym = fn(vn.eval_piece(vn_piece, a + h / 2));
  const SpectralField yh = fn(vn.eval_piece(vn_piece, b));
  SpectralField c1 = (-3.0 / h) * y0 + (4.0 / h) * ym + (-1.0 / h) * yh;
  SpectralField c2 = (2.0 / (h * h)) * (y0 - 2.0 * ym + yh);
  return {y0, std::move(c1), std::move(c2)};
}

}  // namespace detail

/// g_k = Lψ_k − Σλ_j Lρ^j.
inline ControlSignal compute_gk(const OscillationProfile& prof, const SobolevParams& p) {
  const auto& d = prof.decomposition;
  SpectralField mean_L(d.eta.geometry(), d.eta.trunc());
  for (std::size_t j = 0; j < d.rhos.size(); ++j) mean_L.axpy(d.lambdas[j], op_L(d.rhos[j], p));
  return build_psi_k(prof).map([&](const SpectralField& r) { return op_L(r, p) - mean_L; });
}

/// h_k = B(V_N + ψ_k) − Σλ_j B(V_N + ρ^j); V_N piecewise affine.
inline ControlSignal compute_hk(const ControlSignal& vn, const OscillationProfile& prof, const SobolevParams& p) {
  const auto& d = prof.decomposition;
  const ControlSignal psi = build_psi_k(prof);
  const auto breaks = ControlSignal::merge_breakpoints({&vn.breakpoints(), &psi.breakpoints()}, prof.T);
  std::vector<ControlSignal::Piece> pieces;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1], mid = 0.5 * (a + b);
    const std::size_t iv = vn.piece_index(mid);
    const SpectralField rho = psi.value(mid);
    auto fn = [&](const SpectralField& v) {
      SpectralField out = B_quad(v + rho, p);
      for (std::size_t j = 0; j < d.rhos.size(); ++j) out.axpy(-d.lambdas[j], B_quad(v + d.rhos[j], p));
      return out;
    };
    pieces.push_back(detail::quadratic_piece(fn, vn, iv, a, b));
  }
  return ControlSignal::piecewise_polynomial(breaks, std::move(pieces));
}

/// f_k = g_k + h_k.
inline ControlSignal compute_fk(const ControlSignal& vn, const OscillationProfile& prof, const SobolevParams& p) {
  return compute_gk(prof, p) + compute_hk(vn, prof, p);
}

inline ControlSignal compute_fk(const Trajectory& vn, const OscillationProfile& prof, const SobolevParams& p) {
  return compute_fk(vn.as_sampled(), prof, p);
}

/// Reference state held constant on `segments` equal pieces, taken at each piece start.
inline ControlSignal piecewise_constant_reference(const Trajectory& traj, int segments) {
  if (segments < 1) throw ContractViolation("segment count must be positive");
  const ControlSignal s = traj.as_sampled();
  const double T = traj.times().back();
  std::vector<double> breaks;
  std::vector<SpectralField> values;
  for (int i = 0; i < segments; ++i) {
    breaks.push_back(T * i / segments);
    values.push_back(s.value(breaks.back()));
  }
  breaks.push_back(T);
  return ControlSignal::piecewise_constant(std::move(breaks), std::move(values));
}

struct RelaxationRow {
  int k;
  double sup_F;   // sup_t ‖∫₀ᵗ f_k‖_{V²}
  double sup_Kf;  // sup_t ‖K f_k‖_{V²}
};

inline std::vector<RelaxationRow> relaxation_report(const std::function<ControlSignal(int)>& fk, const std::vector<int>& ks,
                                                    const SobolevParams& p) {
  if (ks.empty()) throw ContractViolation("relaxation report needs at least one k");
  std::vector<RelaxationRow> rows;
  for (int k : ks) {
    const ControlSignal f = fk(k);
    const double supF = f.integral().sup_norm(2.0);
    const auto kf = kernel_K(f, p, f.horizon());
    double supK = 0.0;
    for (const auto& s : kf.states()) supK = std::max(supK, sobolev_norm(s, 2.0));
    rows.push_back({k, supF, supK});
  }
  return rows;
}

/// Least-squares slope of log2(y) against log2(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log2(x[i]) / n;
    my += std::log2(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log2(x[i]) - mx) * (std::log2(y[i]) - my);
    sxx += (std::log2(x[i]) - mx) * (std::log2(x[i]) - mx);
  }
  return sxy / sxx;
}

/// C¹ version of a piecewise-constant ζ: cubic Hermite ramps of width
/// ramp/l at every jump, including from 0 at t = 0 and back to 0 at t = T.
inline ControlSignal smooth_zeta(const ControlSignal& zeta, double ramp, int l) {
  if (zeta.degree() != 0) throw ContractViolation("zeta must be piecewise constant");
  if (l < 1 || !(ramp > 0.0)) throw ContractViolation("ramp width and l must be positive");
  const auto& br = zeta.breakpoints();
  double shortest = br.back();
  for (std::size_t i = 0; i + 1 < br.size(); ++i) shortest = std::min(shortest, br[i + 1] - br[i]);
  if (!(ramp < 0.5 * shortest)) throw ContractViolation("ramp must be shorter than half the shortest segment");

  const double w = ramp / l;
  const std::size_t K = zeta.num_pieces();
  const SpectralField zero(zeta.geometry(), zeta.trunc());
  std::vector<double> breaks;
  std::vector<ControlSignal::Piece> pieces;
  auto ramp_piece = [&](const SpectralField& from, const SpectralField& to) {
    const SpectralField jump = to - from;
    // H(τ) = 3τ²/w² − 2τ³/w³
    return ControlSignal::Piece{from, zero, (3.0 / (w * w)) * jump, (-2.0 / (w * w * w)) * jump};
  };
  for (std::size_t i = 0; i < K; ++i) {
    const SpectralField& z = zeta.piece(i)[0];
    const SpectralField& prev = i == 0 ? zero : zeta.piece(i - 1)[0];
    const SpectralField& next = i + 1 == K ? zero : zeta.piece(i + 1)[0];
    const double a = br[i], b = br[i + 1];
    const double ramp_in_end = i == 0 ? a + w : a + w / 2;
    const double flat_end = i + 1 == K ? b - w : b - w / 2;
    if (i == 0) {
      breaks.push_back(a);
      pieces.push_back(ramp_piece(prev, z));
    }
    breaks.push_back(ramp_in_end);
    pieces.push_back({z});
    breaks.push_back(flat_end);
    pieces.push_back(ramp_piece(z, next));
  }
  breaks.push_back(br.back());
  return ControlSignal::piecewise_polynomial(std::move(breaks), std::move(pieces));
}

/// η' = η + ∂_t ζ_l, so that the plain system with η' from U0 tracks the
/// extended system with ζ_l shifted by ζ_l (and agrees with it at t = T).
inline ControlSignal lift_extended_control(const ControlSignal& eta, const ControlSignal& zeta, double ramp, int l) {
  if (zeta.is_zero()) return eta;
  return eta + smooth_zeta(zeta, ramp, l).derivative();
}

struct RelaxationInstance {
  TorusGeometry geometry;
  SobolevParams params;
  double T = 1.0;
  int trunc = 6;
  ConvexDecomposition decomposition;
  ControlSignal vn;  // piecewise-constant reference state
};

/// q = (1,1), ν = 0.1, α = 0.2, T = 1, E = H³, N = 6; two random directions in
/// E with random weights; V_N the trajectory from a random H³ state, held
/// constant on 5 pieces.
inline RelaxationInstance canonical_relaxation_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const TorusGeometry g(1.0, 1.0);
  const SobolevParams p(0.0, 0.2, 0.1);
  const double T = 1.0;
  const int n = 6;
  std::uniform_real_distribution<double> wd(0.5, 2.0);
  std::vector<double> alphas{wd(rng), wd(rng)};
  std::vector<SpectralField> dirs{random_field(g, n, 3, 0.5, rng), random_field(g, n, 3, 0.5, rng)};
  const auto d = convex_decompose(random_field(g, n, 3, 0.2, rng), alphas, dirs);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  cfg.params = p;
  const auto traj = integrate_plain(random_field(g, n, 3, 0.5, rng), ControlSignal::zero(g, n, T), cfg, T);
  return {g, p, T, n, d, piecewise_constant_reference(traj, 5)};
}

}  // namespace sgf
