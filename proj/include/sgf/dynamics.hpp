#pragma once

// Exponential time differencing for ∂_t U + L U = N(U, t): L is diagonal and
// integrated exactly, the bilinear term and the controls explicitly.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sgf/bilinear.hpp"
#include "sgf/control_signal.hpp"
#include "sgf/json_io.hpp"

namespace sgf {

enum class Scheme { EtdRk2, EtdRk4 };

inline int scheme_order(Scheme s) { return s == Scheme::EtdRk2 ? 2 : 4; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "etd-rk2") return Scheme::EtdRk2;
  if (s == "etd-rk4" || s == "etd-rk4-classical") return Scheme::EtdRk4;
  throw ConfigError("unknown scheme '" + s + "'");
}

struct IntegratorConfig {
  double dt = 1e-3;
  Scheme scheme = Scheme::EtdRk4;
  SobolevParams params;
  std::optional<ControlSignal> forcing;  // P f; absent means zero
  int min_steps = 1;                     // substeps per breakpoint interval, at least
  double ceiling_factor = 1e6;           // blow-up when ‖U‖_{V⁰} > factor · max(‖U0‖_{V⁰}, 1)
  bool record_states = true;             // false keeps only the initial and final states

  void validate() const {
    if (!(dt > 0.0)) throw ContractViolation("dt must be positive");
    if (min_steps < 1) throw ContractViolation("min_steps must be at least 1");
    if (!(ceiling_factor > 0.0)) throw ContractViolation("ceiling factor must be positive");
  }
};

class Trajectory {
 public:
  void push(double t, SpectralField s, double spill) {
    if (!states_.empty()) states_.front().require_compatible(s);
    times_.push_back(t);
    states_.push_back(std::move(s));
    spill_.push_back(spill);
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<SpectralField>& states() const noexcept { return states_; }
  const std::vector<double>& spillover() const noexcept { return spill_; }
  const SpectralField& final_state() const { return states_.back(); }
  const SpectralField& initial_state() const { return states_.front(); }
  std::size_t size() const noexcept { return times_.size(); }

  double max_spillover() const {
    double m = 0.0;
    for (double s : spill_) m = std::max(m, s);
    return m;
  }

  /// Columns t, V⁰, V¹, V³ norms, spillover at 17 significant digits.
  void write_csv(std::ostream& os) const {
    os << "t,v0,v1,v3,spillover\n";
    for (std::size_t i = 0; i < size(); ++i) {
      os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", times_[i], sobolev_norm(states_[i], 0),
                        sobolev_norm(states_[i], 1), sobolev_norm(states_[i], 3), spill_[i]);
    }
  }

  nlohmann::json snapshots(std::size_t stride) const {
    nlohmann::json out = nlohmann::json::array();
    if (stride == 0) return out;
    for (std::size_t i = 0; i < size(); i += stride) out.push_back({{"t", times_[i]}, {"state", to_json(states_[i])}});
    if ((size() - 1) % stride != 0) out.push_back({{"t", times_.back()}, {"state", to_json(states_.back())}});
    return out;
  }

  /// Linear interpolation through the recorded states.
  ControlSignal as_sampled() const { return ControlSignal::sampled(times_, states_); }

 private:
  std::vector<double> times_;
  std::vector<SpectralField> states_;
  std::vector<double> spill_;
};

namespace detail {

/// φ_0..φ_3 at z.
inline std::array<double, 4> phi_functions(double z) {
  std::array<double, 4> phi{};
  if (std::abs(z) < 1.0) {
    // φ_k(z) = Σ_j z^j / (j+k)!
    for (int k = 0; k < 4; ++k) {
      double term = 1.0;
      for (int i = 2; i <= k; ++i) term /= i;
      double sum = 0.0;
      for (int j = 0; j < 30; ++j) {
        sum += term;
        term *= z / (j + k + 1);
      }
      phi[k] = sum;
    }
    return phi;
  }
  phi[0] = std::exp(z);
  phi[1] = (phi[0] - 1.0) / z;
  phi[2] = (phi[1] - 1.0) / z;
  phi[3] = (phi[2] - 0.5) / z;
  return phi;
}

struct EtdCoefficients {
  std::vector<double> e, e2, p1h2;   // e^{ch}, e^{ch/2}, (h/2)φ1(ch/2)
  std::vector<double> p1, p2;        // hφ1(ch), hφ2(ch)
  std::vector<double> f1, f2, f3;    // hf_i(ch) for the four-stage rule
};

inline EtdCoefficients etd_coefficients(const std::vector<double>& c, double h) {
  EtdCoefficients k;
  const std::size_t n = c.size();
  for (auto* v : {&k.e, &k.e2, &k.p1h2, &k.p1, &k.p2, &k.f1, &k.f2, &k.f3}) v->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto full = phi_functions(c[i] * h);
    const auto half = phi_functions(c[i] * h / 2);
    k.e[i] = full[0];
    k.e2[i] = half[0];
    k.p1h2[i] = 0.5 * h * half[1];
    k.p1[i] = h * full[1];
    k.p2[i] = h * full[2];
    k.f1[i] = h * (full[1] - 3 * full[2] + 4 * full[3]);
    k.f2[i] = h * (full[2] - 2 * full[3]);
    k.f3[i] = h * (-full[2] + 4 * full[3]);
  }
  return k;
}

/// Nonlinear part: (t, U) → (N(U,t), spillover of its bilinear term).
using Rhs = std::function<std::pair<SpectralField, double>(double t, const SpectralField& u)>;

/// Step boundaries: 0, T and every signal breakpoint in between.
inline std::vector<double> step_grid(const std::vector<const ControlSignal*>& signals, double T) {
  const double tol = 1e-12 * std::max(1.0, T);
  std::vector<double> pts{0.0};
  for (const auto* s : signals) {
    if (s->horizon() < T - tol) throw ContractViolation("signal horizon shorter than integration horizon");
    for (double t : s->breakpoints()) {
      if (t > tol && t < T - tol) pts.push_back(t);
    }
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double t : pts) {
    if (out.empty() || t - out.back() > tol) out.push_back(t);
  }
  out.push_back(T);
  return out;
}

/// Shared ETD driver.  make_rhs(i0,i1) builds the nonlinear term valid on [i0,i1].
inline Trajectory etd_integrate(const SpectralField& u0, const std::vector<const ControlSignal*>& signals,
                                const std::function<Rhs(double, double)>& make_rhs, const IntegratorConfig& cfg,
                                double T) {
  cfg.validate();
  if (!(T > 0.0)) throw ContractViolation("horizon must be positive");
  const auto lam = coordinate_eigenvalues(u0.layout(), u0.geometry());
  std::vector<double> c(lam.size());
  for (std::size_t i = 0; i < lam.size(); ++i) c[i] = -dissipation_rate(lam[i], cfg.params);

  const double ceiling = cfg.ceiling_factor * std::max(sobolev_norm(u0, 0), 1.0);
  const auto grid = step_grid(signals, T);

  Trajectory traj;
  SpectralField u = u0;
  double pending_spill = 0.0;
  bool first = true;
  double cached_h = -1.0;
  EtdCoefficients k;

  for (std::size_t iv = 0; iv + 1 < grid.size(); ++iv) {
    const double a = grid[iv], b = grid[iv + 1];
    const int nsteps = std::max(cfg.min_steps, static_cast<int>(std::ceil((b - a) / cfg.dt - 1e-9)));
    const double h = (b - a) / nsteps;
    if (h != cached_h) {
      k = etd_coefficients(c, h);
      cached_h = h;
    }
    const Rhs rhs = make_rhs(a, b);
    for (int s = 0; s < nsteps; ++s) {
      const double t = a + s * h;
      auto [n0, spill] = rhs(t, u);
      if (first) {
        traj.push(0.0, u, spill);
        first = false;
      } else if (cfg.record_states) {
        traj.push(t, u, spill);
      }
      pending_spill = spill;
      SpectralField next(u.geometry(), u.trunc());
      if (cfg.scheme == Scheme::EtdRk2) {
        SpectralField av(u.geometry(), u.trunc());
        for (std::size_t i = 0; i < u.dims(); ++i) av[i] = k.e[i] * u[i] + k.p1[i] * n0[i];
        const auto na = rhs(t + h, av).first;
        for (std::size_t i = 0; i < u.dims(); ++i) next[i] = av[i] + k.p2[i] * (na[i] - n0[i]);
      } else {
        SpectralField av(u.geometry(), u.trunc()), bv = av, cv = av;
        for (std::size_t i = 0; i < u.dims(); ++i) av[i] = k.e2[i] * u[i] + k.p1h2[i] * n0[i];
        const auto na = rhs(t + h / 2, av).first;
        for (std::size_t i = 0; i < u.dims(); ++i) bv[i] = k.e2[i] * u[i] + k.p1h2[i] * na[i];
        const auto nb = rhs(t + h / 2, bv).first;
        for (std::size_t i = 0; i < u.dims(); ++i) cv[i] = k.e2[i] * av[i] + k.p1h2[i] * (2 * nb[i] - n0[i]);
        const auto nc = rhs(t + h, cv).first;
        for (std::size_t i = 0; i < u.dims(); ++i) {
          next[i] = k.e[i] * u[i] + k.f1[i] * n0[i] + 2 * k.f2[i] * (na[i] + nb[i]) + k.f3[i] * nc[i];
        }
      }
      u = std::move(next);
      const double norm = sobolev_norm(u, 0);
      if (!std::isfinite(norm) || norm > ceiling) {
        throw DivergenceError(fmt::format("state norm {:.3e} exceeded ceiling {:.3e}", norm, ceiling), t + h);
      }
    }
  }
  traj.push(T, u, pending_spill);
  return traj;
}

inline SpectralField forcing_at(const std::optional<ControlSignal>& f, std::size_t piece, double t,
                                const SpectralField& like) {
  if (!f) return SpectralField(like.geometry(), like.trunc());
  return f->eval_piece(piece, t);
}

}  // namespace detail

/// ∂_t U + L U + B(U, U) = P f + η.
inline Trajectory integrate_plain(const SpectralField& u0, const ControlSignal& eta, const IntegratorConfig& cfg,
                                  double T);

/// ∂_t U + L(U+ζ) + B(U+ζ, U+ζ) = P f + η.
inline Trajectory integrate_extended(const SpectralField& u0, const ControlSignal& eta, const ControlSignal* zeta,
                                     const IntegratorConfig& cfg, double T) {
  u0.require_compatible(eta.value(0.0));
  std::vector<const ControlSignal*> sigs{&eta};
  if (zeta) sigs.push_back(zeta);
  if (cfg.forcing) sigs.push_back(&*cfg.forcing);
  const SobolevParams& p = cfg.params;

  auto make = [&](double a, double b) -> detail::Rhs {
    const double mid = 0.5 * (a + b);
    const std::size_t ie = eta.piece_index(mid);
    const std::size_t iz = zeta ? zeta->piece_index(mid) : 0;
    const std::size_t iff = cfg.forcing ? cfg.forcing->piece_index(mid) : 0;
    return [&, ie, iz, iff](double t, const SpectralField& u) {
      SpectralField rhs = eta.eval_piece(ie, t);
      rhs += detail::forcing_at(cfg.forcing, iff, t, u);
      if (zeta) {
        const SpectralField z = zeta->eval_piece(iz, t);
        const SpectralField w = u + z;
        auto r = full_B(w, w, p);
        rhs -= r.value;
        rhs -= op_L(z, p);
        return std::make_pair(std::move(rhs), r.spillover);
      }
      auto r = full_B(u, u, p);
      rhs -= r.value;
      return std::make_pair(std::move(rhs), r.spillover);
    };
  };
  return detail::etd_integrate(u0, sigs, make, cfg, T);
}

inline Trajectory integrate_plain(const SpectralField& u0, const ControlSignal& eta, const IntegratorConfig& cfg,
                                  double T) {
  return integrate_extended(u0, eta, nullptr, cfg, T);
}

inline Trajectory integrate_extended(const SpectralField& u0, const ControlSignal& eta, const ControlSignal& zeta,
                                     const IntegratorConfig& cfg, double T) {
  return integrate_extended(u0, eta, &zeta, cfg, T);
}

/// ∂_t W + L W + B(W) + B(W, V) + B(V, W) = P f, with f given explicitly
/// (cfg.forcing is ignored).
inline Trajectory integrate_perturbed(const SpectralField& w0, const ControlSignal& v, const ControlSignal& f,
                                      const IntegratorConfig& cfg, double T) {
  w0.require_compatible(v.value(0.0));
  w0.require_compatible(f.value(0.0));
  const SobolevParams& p = cfg.params;
  auto make = [&](double a, double b) -> detail::Rhs {
    const double mid = 0.5 * (a + b);
    const std::size_t iv = v.piece_index(mid), iff = f.piece_index(mid);
    return [&, iv, iff](double t, const SpectralField& w) {
      const SpectralField vt = v.eval_piece(iv, t);
      SpectralField rhs = f.eval_piece(iff, t);
      const auto b1 = full_B(w, w, p), b2 = full_B(w, vt, p), b3 = full_B(vt, w, p);
      rhs -= b1.value;
      rhs -= b2.value;
      rhs -= b3.value;
      return std::make_pair(std::move(rhs), b1.spillover + b2.spillover + b3.spillover);
    };
  };
  return detail::etd_integrate(w0, {&v, &f}, make, cfg, T);
}

/// K f: ∂_t Z + L Z = f, Z(0) = 0, integrated exactly per mode and piece.
/// Records each piece start plus `samples` equispaced points inside it.
inline Trajectory kernel_K(const ControlSignal& f, const SobolevParams& p, double T, int samples = 4) {
  if (samples < 1) throw ContractViolation("samples must be at least 1");
  const auto& geom = f.geometry();
  const auto lam = coordinate_eigenvalues(*ModeLayout::get(f.trunc()), geom);
  std::vector<double> c(lam.size());
  for (std::size_t i = 0; i < lam.size(); ++i) c[i] = -dissipation_rate(lam[i], p);

  // Z(s0+h) = e^{ch} Z(s0) + Σ_d f_d d! h^{d+1} φ_{d+1}(ch); φ_{d+1} via series/recursion.
  auto advance = [&](const SpectralField& z0, const ControlSignal::Piece& piece, double h) {
    SpectralField z(geom, f.trunc());
    for (std::size_t i = 0; i < z.dims(); ++i) {
      const double x = c[i] * h;
      std::vector<double> phi(piece.size() + 1);
      if (std::abs(x) < 1.0) {
        for (std::size_t kk = 0; kk < phi.size(); ++kk) {
          double term = 1.0;
          for (std::size_t q = 2; q <= kk; ++q) term /= static_cast<double>(q);
          double sum = 0;
          for (int j = 0; j < 30; ++j) {
            sum += term;
            term *= x / static_cast<double>(j + kk + 1);
          }
          phi[kk] = sum;
        }
      } else {
        phi[0] = std::exp(x);
        double fact = 1.0;
        for (std::size_t kk = 0; kk + 1 < phi.size(); ++kk) {
          if (kk > 0) fact *= static_cast<double>(kk);
          phi[kk + 1] = (phi[kk] - 1.0 / fact) / x;
        }
      }
      double acc = phi[0] * z0[i];
      double fact = 1.0, hp = h;
      for (std::size_t d = 0; d < piece.size(); ++d) {
        if (d > 0) fact *= static_cast<double>(d);
        acc += piece[d][i] * fact * hp * phi[d + 1];
        hp *= h;
      }
      z[i] = acc;
    }
    return z;
  };

  Trajectory traj;
  SpectralField z(geom, f.trunc());
  const auto grid = detail::step_grid({&f}, T);
  for (std::size_t iv = 0; iv + 1 < grid.size(); ++iv) {
    const double a = grid[iv], b = grid[iv + 1];
    const std::size_t ip = f.piece_index(0.5 * (a + b));
    const auto piece = f.recentred(ip, a);
    traj.push(a, z, 0.0);
    for (int s = 1; s < samples; ++s) traj.push(a + (b - a) * s / samples, advance(z, piece, (b - a) * s / samples), 0.0);
    z = advance(z, piece, b - a);
  }
  traj.push(T, z, 0.0);
  return traj;
}

struct GronwallRow {
  double t, lhs, rhs, margin;
};

struct GronwallReport {
  std::vector<GronwallRow> rows;
  bool violated = false;
  double min_margin = 0.0;
};

/// Both sides of ‖rot W(t)‖² ≤ (‖rot W(0)‖² + sup‖f‖²_{V¹}) exp(2t(1 + sup‖v‖_{V⁴})),
/// v = (I − αΔ)^{-1} V.  Reports only; margins below −1e-8 are flagged.
inline GronwallReport gronwall_monitor(const Trajectory& traj, const ControlSignal& v, const ControlSignal& f,
                                       const SobolevParams& p) {
  const double f_sup = f.sup_norm(1.0);
  const double v_sup = v.map([&](const SpectralField& x) { return helmholtz(x, p, true); }).sup_norm(4.0);
  const double w0 = vorticity_l2_sq(traj.initial_state());
  GronwallReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.times()[i];
    const double lhs = vorticity_l2_sq(traj.states()[i]);
    const double rhs = (w0 + f_sup * f_sup) * std::exp(2.0 * t * (1.0 + v_sup));
    rep.rows.push_back({t, lhs, rhs, rhs - lhs});
    rep.min_margin = std::min(rep.min_margin, rhs - lhs);
    if (rhs - lhs < -1e-8) rep.violated = true;
  }
  return rep;
}

}  // namespace sgf
