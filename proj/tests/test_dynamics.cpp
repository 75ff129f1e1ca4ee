#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sgf/dynamics.hpp"

using namespace sgf;

namespace {

double v1(const SpectralField& x) { return sobolev_norm(x, 1); }

IntegratorConfig make_cfg(double nu, double alpha, double dt, Scheme s = Scheme::EtdRk4) {
  IntegratorConfig c;
  c.dt = dt;
  c.scheme = s;
  c.params = SobolevParams(0, alpha, nu);
  return c;
}

}  // namespace

TEST(Dynamics, PhiFunctionsContinuousAcrossBranch) {
  for (double z : {-0.999999, -1.000001, 0.9999999, 1.0000001}) {
    const auto p = detail::phi_functions(z);
    EXPECT_NEAR(p[0], std::exp(z), 1e-15 * std::exp(std::abs(z)));
    EXPECT_NEAR(p[1], std::expm1(z) / z, 1e-14);
    EXPECT_NEAR(p[2], (std::expm1(z) - z) / (z * z), 1e-12);
    EXPECT_NEAR(p[3], (std::expm1(z) - z - z * z / 2) / (z * z * z), 1e-10);
  }
  const auto p0 = detail::phi_functions(0.0);
  EXPECT_DOUBLE_EQ(p0[1], 1.0);
  EXPECT_DOUBLE_EQ(p0[2], 0.5);
  EXPECT_NEAR(p0[3], 1.0 / 6.0, 1e-16);
}

TEST(Dynamics, SingleModeExactDecay) {
  const TorusGeometry g(1.0, 1.3);
  for (Scheme s : {Scheme::EtdRk2, Scheme::EtdRk4}) {
    const auto cfg = make_cfg(0.7, 0.4, 1e-3, s);
    const ModeIndex m(2, -1);
    const auto u0 = SpectralField::single_mode(g, 4, m, Parity::Sin, 1.7);
    const auto traj = integrate_plain(u0, ControlSignal::zero(g, 4, 1.0), cfg, 1.0);
    const double lam = stokes_eigenvalue(m, g);
    for (std::size_t i = 0; i < traj.size(); i += 97) {
      const double expect = 1.7 * std::exp(-dissipation_rate(lam, cfg.params) * traj.times()[i]);
      EXPECT_NEAR(traj.states()[i].b(m), expect, 1e-10);
    }
    EXPECT_EQ(traj.times().back(), 1.0);
    EXPECT_EQ(traj.size(), 1001u);
  }
}

TEST(Dynamics, ZeroStaysZero) {
  const TorusGeometry g(1, 1);
  const auto traj = integrate_plain(SpectralField(g, 4), ControlSignal::zero(g, 4, 0.5), make_cfg(1, 1, 1e-2), 0.5);
  for (const auto& s : traj.states()) EXPECT_TRUE(s.is_zero());
}

TEST(Dynamics, ZeroZetaIsBitIdentical) {
  std::mt19937_64 rng(1);
  const TorusGeometry g(0.9, 1.2);
  const auto u0 = random_field(g, 5, 3, 0.5, rng);
  const auto eta = ControlSignal::piecewise_constant({0, 0.3, 1}, {random_field(g, 5, 3, 0.2, rng), random_field(g, 5, 3, 0.2, rng)});
  const auto cfg = make_cfg(0.2, 0.3, 1e-2);
  const auto a = integrate_plain(u0, eta, cfg, 1.0);
  const auto b = integrate_extended(u0, eta, ControlSignal::zero(g, 5, 1.0), cfg, 1.0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a.states()[i].dims(); ++k) ASSERT_EQ(a.states()[i][k], b.states()[i][k]);
  }
}

TEST(Dynamics, ShiftIdentity) {
  std::mt19937_64 rng(2);
  const TorusGeometry g(1.0, 1.1);
  const auto u0 = random_field(g, 5, 3, 0.3, rng);
  const auto eta = ControlSignal::constant(random_field(g, 5, 3, 0.3, rng), 1.0);
  // ζ(t) = Z1 t + Z2 t², ζ(0) = 0
  const auto z1 = random_field(g, 5, 3, 0.4, rng), z2 = random_field(g, 5, 3, 0.4, rng);
  const auto zeta = ControlSignal::piecewise_polynomial({0, 1}, {{SpectralField(g, 5), z1, z2}});
  const auto eta_t = eta + zeta.derivative();
  const auto cfg = make_cfg(0.3, 0.5, 2e-3);
  const auto plain = integrate_plain(u0 + zeta.value(0), eta_t, cfg, 1.0);
  const auto ext = integrate_extended(u0, eta, zeta, cfg, 1.0);
  for (std::size_t i = 0; i < plain.size(); i += 50) {
    const double t = plain.times()[i];
    EXPECT_LE(v1(plain.states()[i] - zeta.value(t) - ext.states()[i]), 1e-9) << t;
  }
}

TEST(Dynamics, ConstantZetaSingleMode) {
  // U = a(t) c_m with a' = −λ̃ (a + 1): a(t) = e^{−λ̃t} − 1.
  const TorusGeometry g(1, 1);
  const ModeIndex m(1, 2);
  const auto cfg = make_cfg(0.5, 0.2, 1e-3);
  const auto zeta = ControlSignal::constant(SpectralField::single_mode(g, 3, m, Parity::Cos), 0.01);
  const auto traj = integrate_extended(SpectralField(g, 3), ControlSignal::zero(g, 3, 0.01), zeta, cfg, 0.01);
  const double rate = dissipation_rate(stokes_eigenvalue(m, g), cfg.params);
  // first step against the Taylor expansion of the RHS −λ̃ c_m
  const double h = 1e-3;
  EXPECT_NEAR(traj.states()[1].a(m), -rate * h + rate * rate * h * h / 2 - std::pow(rate * h, 3) / 6, 1e-12);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_NEAR(traj.states()[i].a(m), std::exp(-rate * traj.times()[i]) - 1.0, 1e-13);
  }
}

TEST(Dynamics, SnapsToBreakpoints) {
  const TorusGeometry g(1, 1);
  const auto z = SpectralField(g, 2);
  const auto eta = ControlSignal::piecewise_constant({0, 0.1234, 0.5}, {z, z});
  const auto traj = integrate_plain(z, eta, make_cfg(1, 1, 0.05), 0.5);
  const auto& t = traj.times();
  EXPECT_NE(std::find(t.begin(), t.end(), 0.1234), t.end());
}

TEST(Dynamics, EnergyNonincreasingWithoutForcing) {
  std::mt19937_64 rng(3);
  const TorusGeometry g(1.2, 0.8);
  const auto cfg = make_cfg(0.05, 0.5, 5e-3);
  const auto u0 = random_field(g, 6, 6, 1.0, rng);
  const auto traj = integrate_plain(u0, ControlSignal::zero(g, 6, 2.0), cfg, 2.0);
  double prev_e = std::numeric_limits<double>::infinity(), prev_w = prev_e;
  for (const auto& s : traj.states()) {
    const double e = l2_inner(s, helmholtz(s, cfg.params, true));
    const double w = vorticity_l2_sq(s);
    EXPECT_LE(e, prev_e + 1e-10);
    EXPECT_LE(w, prev_w + 1e-10);
    prev_e = e;
    prev_w = w;
  }
  const int n = traj.final_state().trunc();
  EXPECT_EQ(n, 6);
}

TEST(Dynamics, DivergenceDetected) {
  const TorusGeometry g(1, 1);
  auto cfg = make_cfg(1, 1, 1e-2);
  cfg.ceiling_factor = 2.0;
  const auto eta = ControlSignal::constant(SpectralField::single_mode(g, 2, {1, 0}, Parity::Cos, 100.0), 1.0);
  try {
    integrate_plain(SpectralField(g, 2), eta, cfg, 1.0);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LE(e.time(), 1.0);
  }
}

TEST(Dynamics, ConvergenceOrder) {
  std::mt19937_64 rng(4);
  const TorusGeometry g(1.0, 1.1);
  const auto u0 = random_field(g, 5, 4, 0.5, rng);
  const auto eta = ControlSignal::constant(random_field(g, 5, 3, 0.3, rng), 1.0);
  for (Scheme s : {Scheme::EtdRk2, Scheme::EtdRk4}) {
    const double dt0 = s == Scheme::EtdRk2 ? 0.05 : 0.1;
    const auto ref = integrate_plain(u0, eta, make_cfg(0.1, 0.2, dt0 / 64, s), 1.0).final_state();
    std::vector<double> lx, ly;
    for (double dt : {dt0, dt0 / 2, dt0 / 4}) {
      const auto u = integrate_plain(u0, eta, make_cfg(0.1, 0.2, dt, s), 1.0).final_state();
      lx.push_back(std::log(dt));
      ly.push_back(std::log(v1(u - ref)));
    }
    const double slope = (ly.back() - ly.front()) / (lx.back() - lx.front());
    EXPECT_NEAR(slope, scheme_order(s), 0.5);
  }
}

TEST(Dynamics, PerturbedReductions) {
  std::mt19937_64 rng(5);
  const TorusGeometry g(0.8, 1.0);
  const auto cfg = make_cfg(0.2, 0.4, 1e-2);
  const auto w0 = random_field(g, 4, 4, 0.5, rng);
  const auto f = ControlSignal::constant(random_field(g, 4, 2, 0.3, rng), 1.0);
  auto cfg_f = cfg;
  cfg_f.forcing = f;
  const auto plain = integrate_plain(w0, ControlSignal::zero(g, 4, 1.0), cfg_f, 1.0);
  const auto pert = integrate_perturbed(w0, ControlSignal::zero(g, 4, 1.0), f, cfg, 1.0);
  EXPECT_LE(v1(plain.final_state() - pert.final_state()), 1e-14);

  const auto v = ControlSignal::constant(random_field(g, 4, 4, 1.0, rng), 1.0);
  const auto zero = integrate_perturbed(SpectralField(g, 4), v, ControlSignal::zero(g, 4, 1.0), cfg, 1.0);
  for (const auto& s : zero.states()) EXPECT_TRUE(s.is_zero());
}

TEST(Dynamics, KernelConstantAndLinear) {
  const TorusGeometry g(1, 1.4);
  const SobolevParams p(0, 0.3, 0.8);
  const ModeIndex m(1, 1);
  const double lt = dissipation_rate(stokes_eigenvalue(m, g), p);
  const auto fc = SpectralField::single_mode(g, 3, m, Parity::Cos, 2.0);
  const auto z = kernel_K(ControlSignal::constant(fc, 2.0), p, 2.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = z.times()[i];
    EXPECT_NEAR(z.states()[i].a(m), 2.0 * (1 - std::exp(-lt * t)) / lt, 1e-14);
  }
  // f = c t: Z = c (t/λ̃ − (1 − e^{−λ̃t})/λ̃²)
  const auto lin = ControlSignal::piecewise_polynomial({0, 0.7, 2.0}, {{SpectralField(g, 3), fc}, {0.7 * fc, fc}});
  const auto zl = kernel_K(lin, p, 2.0, 8);
  for (std::size_t i = 0; i < zl.size(); ++i) {
    const double t = zl.times()[i];
    EXPECT_NEAR(zl.states()[i].a(m), 2.0 * (t / lt - (1 - std::exp(-lt * t)) / (lt * lt)), 1e-13);
  }
  const auto z0 = kernel_K(ControlSignal::zero(g, 3, 1.0), p, 1.0);
  for (const auto& s : z0.states()) EXPECT_TRUE(s.is_zero());
}

TEST(Dynamics, GronwallMonitor) {
  const TorusGeometry g(1, 1);
  const auto cfg = make_cfg(0.5, 0.5, 1e-2);
  const auto zero_sig = ControlSignal::zero(g, 4, 1.0);
  const auto traj0 = integrate_perturbed(SpectralField(g, 4), zero_sig, zero_sig, cfg, 1.0);
  const auto r0 = gronwall_monitor(traj0, zero_sig, zero_sig, cfg.params);
  EXPECT_FALSE(r0.violated);
  EXPECT_EQ(r0.min_margin, 0.0);

  std::mt19937_64 rng(6);
  const auto v = ControlSignal::constant(random_field(g, 4, 4, 0.5, rng), 1.0);
  const auto f = ControlSignal::constant(random_field(g, 4, 4, 0.2, rng), 1.0);
  const auto traj = integrate_perturbed(random_field(g, 4, 4, 0.5, rng), v, f, cfg, 1.0);
  const auto r = gronwall_monitor(traj, v, f, cfg.params);
  EXPECT_FALSE(r.violated);
  EXPECT_GT(r.min_margin, 0.0);
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_GE(r.rows[i].rhs, r.rows[i - 1].rhs);
}

TEST(Dynamics, TrajectoryCsv) {
  const TorusGeometry g(1, 1);
  const auto u0 = SpectralField::single_mode(g, 2, {1, 0}, Parity::Cos);
  const auto traj = integrate_plain(u0, ControlSignal::zero(g, 2, 0.1), make_cfg(1, 1, 0.05), 0.1);
  std::ostringstream os;
  traj.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,v0,v1,v3,spillover");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(traj.snapshots(2).size(), 2u);
}
