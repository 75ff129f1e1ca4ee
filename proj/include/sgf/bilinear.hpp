#pragma once

// B(U1, U2) = P(rot U1 × (I − αΔ)^{-1} U2) on truncated fields: closed-form
// mode-pair interactions, a cached sparse kernel, and a grid quadrature oracle.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "sgf/torus.hpp"

namespace sgf {

struct Contribution {
  ModeIndex mode;  // m − n or m + n, not necessarily canonical
  Parity parity;
  double coeff;    // coefficient on c_mode / s_mode
  Vec2 vec;        // coeff · mode^{q,⊥}
};

/// Closed-form B(ã·[cos|sin]<m,x>_q, b̃·[cos|sin]<n,x>_q).  Both direction
/// vectors must be q-orthogonal to their mode.
inline std::vector<Contribution> interact(const ModeIndex& m, Parity pm, const Vec2& a_vec,
                                          const ModeIndex& n, Parity pn, const Vec2& b_vec,
                                          const SobolevParams& p, const TorusGeometry& g) {
  auto check = [&](const ModeIndex& k, const Vec2& v) {
    const double scale = euclid_norm(v) * euclid_norm(k.as_vec()) / std::min(g.q1, g.q2);
    if (std::abs(inner_q(v, k.as_vec(), g)) > 1e-12 * std::max(scale, 1e-300)) {
      throw ContractViolation("direction vector is not q-orthogonal to mode " + k.str());
    }
  };
  check(m, a_vec);
  check(n, b_vec);

  // rot(ã cos<m,x>) = w sin<m,x>, rot(ã sin<m,x>) = −w cos<m,x>.
  const double w = inner_q(rot90(a_vec), m.as_vec(), g);
  const double damp = 1.0 / (1.0 + p.alpha * stokes_eigenvalue(n, g));
  const Vec2 vperp = rot90({b_vec[0] * damp, b_vec[1] * damp});
  const double h = 0.5 * w;

  struct Raw {
    bool plus;
    Parity parity;
    double factor;
  };
  std::array<Raw, 2> raw{};
  if (pm == Parity::Cos && pn == Parity::Cos) {
    raw = {Raw{true, Parity::Sin, h}, Raw{false, Parity::Sin, h}};
  } else if (pm == Parity::Cos && pn == Parity::Sin) {
    raw = {Raw{true, Parity::Cos, -h}, Raw{false, Parity::Cos, h}};
  } else if (pm == Parity::Sin && pn == Parity::Cos) {
    raw = {Raw{true, Parity::Cos, -h}, Raw{false, Parity::Cos, -h}};
  } else {
    raw = {Raw{true, Parity::Sin, -h}, Raw{false, Parity::Sin, h}};
  }

  std::vector<Contribution> out;
  for (const auto& r : raw) {
    const auto l = r.plus ? mode_sum(m, n) : mode_difference(m, n);
    if (!l) continue;
    const Vec2 pl = perp_q(*l, g);
    const double c = r.factor * dot(vperp, pl);
    if (c == 0.0) continue;
    out.push_back({*l, r.parity, c, {c * pl[0], c * pl[1]}});
  }
  return out;
}

struct BilinearResult {
  SpectralField value;
  double spillover = 0.0;  // V⁰ norm of the part above the truncation
};

/// Sparse tensor B_{ij}^k for unit basis functions at a fixed (q, α, N).
/// Outputs are indexed in the 2N layout, which holds every product exactly.
class BilinearKernel {
 public:
  struct Entry {
    std::uint32_t j;
    std::uint32_t out;
    double val;
  };

  static std::shared_ptr<const BilinearKernel> get(const TorusGeometry& g, double alpha, int trunc) {
    static std::mutex mu;
    static std::map<std::tuple<double, double, double, int>, std::shared_ptr<const BilinearKernel>> cache;
    const auto key = std::make_tuple(g.q1, g.q2, alpha, trunc);
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto k = std::shared_ptr<const BilinearKernel>(new BilinearKernel(g, alpha, trunc));
    cache.emplace(key, k);
    return k;
  }

  const ModeLayout& layout() const { return *layout_; }
  const ModeLayout& ext_layout() const { return *ext_; }
  std::size_t nnz() const { return entries_.size(); }

  /// Exact B(U, V) in the 2N layout.
  std::vector<double> apply_ext(std::span<const double> u, std::span<const double> v) const {
    std::vector<double> out(ext_->dims(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double ui = u[i];
      if (ui == 0.0) continue;
      for (std::size_t e = row_[i]; e < row_[i + 1]; ++e) {
        const Entry& en = entries_[e];
        out[en.out] += ui * v[en.j] * en.val;
      }
    }
    return out;
  }

  /// Coordinate of an ext-layout output in the N layout, or −1.
  int to_inner(std::size_t ext_coord) const { return ext_to_inner_[ext_coord]; }

 private:
  BilinearKernel(const TorusGeometry& g, double alpha, int trunc)
      : layout_(ModeLayout::get(trunc)), ext_(ModeLayout::get(2 * trunc)) {
    const SobolevParams p(0.0, alpha, 1.0);
    const auto& modes = layout_->modes();
    row_.assign(layout_->dims() + 1, 0);
    for (std::size_t a = 0; a < modes.size(); ++a) {
      const Vec2 pa = perp_q(modes[a], g);
      for (Parity pm : {Parity::Cos, Parity::Sin}) {
        const std::size_t i = ModeLayout::coord(a, pm);
        for (std::size_t b = 0; b < modes.size(); ++b) {
          const Vec2 pb = perp_q(modes[b], g);
          for (Parity pn : {Parity::Cos, Parity::Sin}) {
            const std::size_t j = ModeLayout::coord(b, pn);
            for (const auto& c : interact(modes[a], pm, pa, modes[b], pn, pb, p, g)) {
              const ModeIndex l = c.mode.canonical();
              const double sign = (c.parity == Parity::Cos && !c.mode.is_canonical()) ? -1.0 : 1.0;
              const auto slot = ext_->find(l);
              entries_.push_back({static_cast<std::uint32_t>(j),
                                  static_cast<std::uint32_t>(ModeLayout::coord(*slot, c.parity)),
                                  sign * c.coeff});
            }
          }
        }
        row_[i + 1] = entries_.size();
      }
    }
    ext_to_inner_.assign(ext_->dims(), -1);
    for (std::size_t s = 0; s < ext_->num_modes(); ++s) {
      if (const auto in = layout_->find(ext_->mode(s))) {
        ext_to_inner_[2 * s] = static_cast<int>(2 * *in);
        ext_to_inner_[2 * s + 1] = static_cast<int>(2 * *in + 1);
      }
    }
  }

  std::shared_ptr<const ModeLayout> layout_;
  std::shared_ptr<const ModeLayout> ext_;
  std::vector<std::size_t> row_;
  std::vector<Entry> entries_;
  std::vector<int> ext_to_inner_;
};

/// Exact B(U, V) at truncation 2N.
inline SpectralField full_B_extended(const SpectralField& u, const SpectralField& v, const SobolevParams& p) {
  u.require_compatible(v);
  const auto kernel = BilinearKernel::get(u.geometry(), p.alpha, u.trunc());
  const auto ext = kernel->apply_ext(u.coeffs(), v.coeffs());
  SpectralField out(u.geometry(), 2 * u.trunc());
  std::copy(ext.begin(), ext.end(), out.coeffs().begin());
  return out;
}

/// Galerkin-truncated B(U, V) plus the V⁰ norm of what the truncation dropped.
inline BilinearResult full_B(const SpectralField& u, const SpectralField& v, const SobolevParams& p) {
  u.require_compatible(v);
  const auto kernel = BilinearKernel::get(u.geometry(), p.alpha, u.trunc());
  const auto ext = kernel->apply_ext(u.coeffs(), v.coeffs());
  BilinearResult r{SpectralField(u.geometry(), u.trunc()), 0.0};
  double spill = 0.0;
  for (std::size_t k = 0; k < ext.size(); ++k) {
    const int in = kernel->to_inner(k);
    if (in >= 0) {
      r.value[static_cast<std::size_t>(in)] = ext[k];
    } else {
      spill += ext[k] * ext[k];
    }
  }
  r.spillover = std::sqrt(spill * u.geometry().mass());
  return r;
}

/// B(U) = B(U, U), truncated.
inline SpectralField B_quad(const SpectralField& u, const SobolevParams& p) { return full_B(u, u, p).value; }

/// B(U, V) + B(V, U), truncated.
inline SpectralField B_sym(const SpectralField& u, const SpectralField& v, const SobolevParams& p) {
  return full_B(u, v, p).value + full_B(v, u, p).value;
}

/// Quadrature oracle: evaluate rot U and (I − αΔ)^{-1}V on a uniform grid,
/// form the pointwise product, and project onto c_l, s_l with |l| ≤ out_trunc.
inline SpectralField direct_B(const SpectralField& u, const SpectralField& v, const SobolevParams& p,
                              int grid, int out_trunc = 0) {
  u.require_compatible(v);
  const int n = u.trunc();
  if (out_trunc <= 0) out_trunc = n;
  if (out_trunc > 2 * n) throw ContractViolation("oracle output truncation exceeds 2N");
  if (grid < 4 * n + 1) throw AliasingError("grid must have at least 4N+1 points per axis");

  const TorusGeometry& g = u.geometry();
  const auto& layout = u.layout();
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> ct(grid), st(grid);
  for (int k = 0; k < grid; ++k) {
    ct[k] = std::cos(two_pi * k / grid);
    st[k] = std::sin(two_pi * k / grid);
  }
  auto phase = [grid](const ModeIndex& m, int j1, int j2) {
    long long k = static_cast<long long>(m.m1()) * j1 + static_cast<long long>(m.m2()) * j2;
    k %= grid;
    if (k < 0) k += grid;
    return static_cast<int>(k);
  };

  const SpectralField vd = helmholtz(v, p, true);
  const std::size_t pts = static_cast<std::size_t>(grid) * grid;
  std::vector<double> x1(pts), x2(pts);
  for (int j1 = 0; j1 < grid; ++j1) {
    for (int j2 = 0; j2 < grid; ++j2) {
      double omega = 0.0, v1 = 0.0, v2 = 0.0;
      for (std::size_t s = 0; s < layout.num_modes(); ++s) {
        const ModeIndex& m = layout.mode(s);
        const Vec2 e = perp_q(m, g);
        const int k = phase(m, j1, j2);
        const double c = ct[k], sn = st[k];
        // ∂_i cos = −(m_i/q_i) sin, ∂_i sin = (m_i/q_i) cos
        const double dcoef = e[1] * m.m1() / g.q1 - e[0] * m.m2() / g.q2;
        omega += dcoef * (-u[2 * s] * sn + u[2 * s + 1] * c);
        const double amp = vd[2 * s] * c + vd[2 * s + 1] * sn;
        v1 += e[0] * amp;
        v2 += e[1] * amp;
      }
      const std::size_t idx = static_cast<std::size_t>(j1) * grid + j2;
      x1[idx] = -omega * v2;
      x2[idx] = omega * v1;
    }
  }

  SpectralField out(g, out_trunc);
  const auto& ol = out.layout();
  const double w = 2.0 / static_cast<double>(pts);
  for (std::size_t s = 0; s < ol.num_modes(); ++s) {
    const ModeIndex& l = ol.mode(s);
    const Vec2 e = perp_q(l, g);
    double ac = 0.0, as = 0.0;
    for (int j1 = 0; j1 < grid; ++j1) {
      for (int j2 = 0; j2 < grid; ++j2) {
        const std::size_t idx = static_cast<std::size_t>(j1) * grid + j2;
        const double proj = x1[idx] * e[0] + x2[idx] * e[1];
        const int k = phase(l, j1, j2);
        ac += proj * ct[k];
        as += proj * st[k];
      }
    }
    out[2 * s] = w * ac;
    out[2 * s + 1] = w * as;
  }
  return out;
}

struct BilinearBounds {
  double bound_V1 = 0.0;  // ‖V‖_{V²} ‖U‖_{V²}
  double bound_V2 = 0.0;  // ‖V‖_{V²} ‖U‖_{V³}
  double actual_V1 = 0.0; // ‖B(U,V)‖_{V¹}, untruncated
  double actual_V2 = 0.0; // ‖B(U,V)‖_{V²}, untruncated
};

inline BilinearBounds bilinear_norm_bounds(const SpectralField& u, const SpectralField& v, const SobolevParams& p) {
  const SpectralField b = full_B_extended(u, v, p);
  const double v2 = sobolev_norm(v, 2.0);
  return {v2 * sobolev_norm(u, 2.0), v2 * sobolev_norm(u, 3.0), sobolev_norm(b, 1.0), sobolev_norm(b, 2.0)};
}

}  // namespace sgf
