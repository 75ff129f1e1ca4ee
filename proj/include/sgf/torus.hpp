#pragma once

// Geometry of the q-weighted torus ]0,2πq1[ × ]0,2πq2[ and the divergence-free
// Fourier basis c_m = m^{q,⊥} cos<m,x>_q, s_m = m^{q,⊥} sin<m,x>_q.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgf/errors.hpp"

namespace sgf {

using Vec2 = std::array<double, 2>;

inline double dot(const Vec2& x, const Vec2& y) { return x[0] * y[0] + x[1] * y[1]; }
inline double euclid_norm(const Vec2& x) { return std::hypot(x[0], x[1]); }
/// Euclidean rotation a^⊥ = (−a2, a1).
inline Vec2 rot90(const Vec2& a) { return {-a[1], a[0]}; }

struct TorusGeometry {
  double q1 = 1.0;
  double q2 = 1.0;

  TorusGeometry() = default;
  TorusGeometry(double q1_, double q2_) : q1(q1_), q2(q2_) {
    if (!(q1 > 0.0) || !(q2 > 0.0)) {
      throw ContractViolation("torus radii must be positive");
    }
  }
  bool operator==(const TorusGeometry&) const = default;

  /// L² mass of every basis function: |T²_q| / 2.
  double mass() const { return 2.0 * std::numbers::pi * std::numbers::pi * q1 * q2; }
};

class ModeIndex {
 public:
  ModeIndex(int m1, int m2) : m1_(m1), m2_(m2) {
    if (m1 == 0 && m2 == 0) throw InvalidModeError("mode index (0,0) is not a Fourier mode");
  }

  int m1() const noexcept { return m1_; }
  int m2() const noexcept { return m2_; }
  /// |m| = |m1| + |m2|.
  int l1_norm() const noexcept { return std::abs(m1_) + std::abs(m2_); }
  bool is_axis() const noexcept { return m1_ == 0 || m2_ == 0; }
  bool is_canonical() const noexcept { return m1_ > 0 || (m1_ == 0 && m2_ > 0); }
  ModeIndex canonical() const { return is_canonical() ? *this : -*this; }
  ModeIndex operator-() const { return ModeIndex(-m1_, -m2_); }
  Vec2 as_vec() const { return {static_cast<double>(m1_), static_cast<double>(m2_)}; }

  auto operator<=>(const ModeIndex&) const = default;

  std::string str() const {
    return "(" + std::to_string(m1_) + "," + std::to_string(m2_) + ")";
  }

 private:
  int m1_;
  int m2_;
};

inline std::optional<ModeIndex> mode_sum(const ModeIndex& a, const ModeIndex& b) {
  const int s1 = a.m1() + b.m1(), s2 = a.m2() + b.m2();
  if (s1 == 0 && s2 == 0) return std::nullopt;
  return ModeIndex(s1, s2);
}

inline std::optional<ModeIndex> mode_difference(const ModeIndex& a, const ModeIndex& b) {
  const int d1 = a.m1() - b.m1(), d2 = a.m2() - b.m2();
  if (d1 == 0 && d2 == 0) return std::nullopt;
  return ModeIndex(d1, d2);
}

inline bool parallel(const ModeIndex& a, const ModeIndex& b) {
  return a.m1() * b.m2() - a.m2() * b.m1() == 0;
}

enum class Parity { Cos = 0, Sin = 1 };

inline const char* parity_name(Parity p) { return p == Parity::Cos ? "cos" : "sin"; }

inline Parity parse_parity(const std::string& s) {
  if (s == "cos") return Parity::Cos;
  if (s == "sin") return Parity::Sin;
  throw ContractViolation("unknown parity '" + s + "'");
}

// ---------------------------------------------------------------------------
// q-geometry

/// <x,y>_q = x1 y1 / q1 + x2 y2 / q2.
inline double inner_q(const Vec2& x, const Vec2& y, const TorusGeometry& g) {
  return x[0] * y[0] / g.q1 + x[1] * y[1] / g.q2;
}

/// ‖m‖_q², the Stokes eigenvalue of c_m and s_m.
inline double stokes_eigenvalue(const ModeIndex& m, const TorusGeometry& g) {
  const double a = m.m1() / g.q1, b = m.m2() / g.q2;
  return a * a + b * b;
}

/// Unit vector q-orthogonal to m, fixed as (−m2 q1, m1 q2)/‖·‖.
inline Vec2 perp_q(const ModeIndex& m, const TorusGeometry& g) {
  const Vec2 v{-m.m2() * g.q1, m.m1() * g.q2};
  const double n = euclid_norm(v);
  return {v[0] / n, v[1] / n};
}

/// Euclidean projection of a onto span{l^{q,⊥}}.  This is how the Leray
/// projection acts on a·cos<l,x>_q and a·sin<l,x>_q.
inline Vec2 leray_project_dir(const Vec2& a, const ModeIndex& l, const TorusGeometry& g) {
  const Vec2 p = perp_q(l, g);
  const double c = dot(a, p);
  return {c * p[0], c * p[1]};
}

// ---------------------------------------------------------------------------
// Mode layout: canonical half-lattice, |m| ≤ trunc, sorted lexicographically.

class ModeLayout {
 public:
  static std::shared_ptr<const ModeLayout> get(int trunc) {
    if (trunc < 1) throw ContractViolation("truncation must be at least 1");
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const ModeLayout>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(trunc);
    if (it != cache.end()) return it->second;
    auto layout = std::shared_ptr<const ModeLayout>(new ModeLayout(trunc));
    cache.emplace(trunc, layout);
    return layout;
  }

  int trunc() const noexcept { return trunc_; }
  std::size_t num_modes() const noexcept { return modes_.size(); }
  std::size_t dims() const noexcept { return 2 * modes_.size(); }
  const std::vector<ModeIndex>& modes() const noexcept { return modes_; }
  const ModeIndex& mode(std::size_t slot) const { return modes_.at(slot); }

  /// Slot of a canonical mode, or nullopt when |m| > trunc.
  std::optional<std::size_t> find(const ModeIndex& canonical) const {
    if (canonical.l1_norm() > trunc_) return std::nullopt;
    const int w = 2 * trunc_ + 1;
    const int v = lookup_[(canonical.m1() + trunc_) * w + (canonical.m2() + trunc_)];
    if (v < 0) return std::nullopt;
    return static_cast<std::size_t>(v);
  }

  static constexpr std::size_t coord(std::size_t slot, Parity p) {
    return 2 * slot + static_cast<std::size_t>(p);
  }
  static constexpr std::size_t slot_of(std::size_t coord) { return coord / 2; }
  static constexpr Parity parity_of(std::size_t coord) {
    return (coord % 2) == 0 ? Parity::Cos : Parity::Sin;
  }

 private:
  explicit ModeLayout(int trunc) : trunc_(trunc) {
    for (int m1 = 0; m1 <= trunc; ++m1) {
      for (int m2 = -trunc; m2 <= trunc; ++m2) {
        if (std::abs(m1) + std::abs(m2) > trunc) continue;
        if (m1 == 0 && m2 <= 0) continue;
        modes_.emplace_back(m1, m2);
      }
    }
    const int w = 2 * trunc + 1;
    lookup_.assign(static_cast<std::size_t>(w * w), -1);
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      lookup_[(modes_[i].m1() + trunc) * w + (modes_[i].m2() + trunc)] = static_cast<int>(i);
    }
  }

  int trunc_;
  std::vector<ModeIndex> modes_;
  std::vector<int> lookup_;
};

// ---------------------------------------------------------------------------

struct SobolevParams {
  double s = 0.0;
  double alpha = 1.0;
  double nu = 1.0;

  SobolevParams() = default;
  SobolevParams(double s_, double alpha_, double nu_) : s(s_), alpha(alpha_), nu(nu_) {
    if (!(s >= 0.0)) throw ContractViolation("Sobolev exponent must be nonnegative");
    if (!(alpha > 0.0)) throw ContractViolation("alpha must be positive");
    if (!(nu > 0.0)) throw ContractViolation("nu must be positive");
  }
};

/// Truncated divergence-free zero-mean field Σ a_m c_m + b_m s_m, stored on
/// the canonical half-lattice as interleaved (a_m, b_m).
class SpectralField {
 public:
  SpectralField(const TorusGeometry& g, int trunc)
      : geom_(g), layout_(ModeLayout::get(trunc)), c_(layout_->dims(), 0.0) {}

  static SpectralField single_mode(const TorusGeometry& g, int trunc, const ModeIndex& m,
                                   Parity p, double value = 1.0) {
    SpectralField f(g, trunc);
    f.set(m, p, value);
    return f;
  }

  const TorusGeometry& geometry() const noexcept { return geom_; }
  int trunc() const noexcept { return layout_->trunc(); }
  const ModeLayout& layout() const noexcept { return *layout_; }
  std::size_t dims() const noexcept { return c_.size(); }

  std::span<const double> coeffs() const noexcept { return c_; }
  std::span<double> coeffs() noexcept { return c_; }
  double operator[](std::size_t i) const { return c_[i]; }
  double& operator[](std::size_t i) { return c_[i]; }

  /// Coefficient on c_m (Cos) or s_m (Sin) for any representative m; zero if
  /// |m| exceeds the truncation.  Uses c_{−m} = −c_m and s_{−m} = s_m.
  double coefficient(const ModeIndex& m, Parity p) const {
    const auto slot = layout_->find(m.canonical());
    if (!slot) return 0.0;
    return sign(m, p) * c_[ModeLayout::coord(*slot, p)];
  }
  double a(const ModeIndex& m) const { return coefficient(m, Parity::Cos); }
  double b(const ModeIndex& m) const { return coefficient(m, Parity::Sin); }

  void set(const ModeIndex& m, Parity p, double v) { c_[coord_checked(m, p)] = sign(m, p) * v; }
  void add_to(const ModeIndex& m, Parity p, double v) { c_[coord_checked(m, p)] += sign(m, p) * v; }

  bool compatible(const SpectralField& o) const noexcept {
    return geom_ == o.geom_ && trunc() == o.trunc();
  }
  void require_compatible(const SpectralField& o) const {
    if (!compatible(o)) throw GeometryMismatch("fields differ in geometry or truncation");
  }

  bool is_zero() const {
    return std::all_of(c_.begin(), c_.end(), [](double v) { return v == 0.0; });
  }

  SpectralField& operator+=(const SpectralField& o) {
    require_compatible(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    require_compatible(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  SpectralField& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  /// this += s * o
  SpectralField& axpy(double s, const SpectralField& o) {
    require_compatible(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += s * o.c_[i];
    return *this;
  }

  friend SpectralField operator+(SpectralField x, const SpectralField& y) { return x += y; }
  friend SpectralField operator-(SpectralField x, const SpectralField& y) { return x -= y; }
  friend SpectralField operator*(double s, SpectralField x) { return x *= s; }
  friend SpectralField operator-(SpectralField x) { return x *= -1.0; }

 private:
  static double sign(const ModeIndex& m, Parity p) {
    return (p == Parity::Cos && !m.is_canonical()) ? -1.0 : 1.0;
  }
  std::size_t coord_checked(const ModeIndex& m, Parity p) const {
    const auto slot = layout_->find(m.canonical());
    if (!slot) throw ContractViolation("mode " + m.str() + " exceeds truncation");
    return ModeLayout::coord(*slot, p);
  }

  TorusGeometry geom_;
  std::shared_ptr<const ModeLayout> layout_;
  std::vector<double> c_;
};

/// Stokes eigenvalue of every coordinate of a layout (both parities).
inline std::vector<double> coordinate_eigenvalues(const ModeLayout& layout, const TorusGeometry& g) {
  std::vector<double> lam(layout.dims());
  for (std::size_t s = 0; s < layout.num_modes(); ++s) {
    lam[2 * s] = lam[2 * s + 1] = stokes_eigenvalue(layout.mode(s), g);
  }
  return lam;
}

// ---------------------------------------------------------------------------
// Norms and diagonal operators

/// V^s norm through the multiplier (1+‖m‖_q²)^s, including the L² mass κ.
inline double sobolev_norm(const SpectralField& u, double s) {
  if (!(s >= 0.0)) throw ContractViolation("Sobolev exponent must be nonnegative");
  const auto& layout = u.layout();
  double acc = 0.0;
  for (std::size_t k = 0; k < layout.num_modes(); ++k) {
    const double w = std::pow(1.0 + stokes_eigenvalue(layout.mode(k), u.geometry()), s);
    const double a = u[2 * k], b = u[2 * k + 1];
    acc += w * (a * a + b * b);
  }
  return std::sqrt(acc * u.geometry().mass());
}

/// ‖rot u‖²_{L²}.
inline double vorticity_l2_sq(const SpectralField& u) {
  const auto& layout = u.layout();
  double acc = 0.0;
  for (std::size_t k = 0; k < layout.num_modes(); ++k) {
    const double a = u[2 * k], b = u[2 * k + 1];
    acc += stokes_eigenvalue(layout.mode(k), u.geometry()) * (a * a + b * b);
  }
  return acc * u.geometry().mass();
}

/// L² inner product of two fields.
inline double l2_inner(const SpectralField& u, const SpectralField& v) {
  u.require_compatible(v);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.dims(); ++i) acc += u[i] * v[i];
  return acc * u.geometry().mass();
}

template <class Multiplier>
SpectralField apply_multiplier(const SpectralField& u, Multiplier&& mult) {
  SpectralField out = u;
  const auto& layout = u.layout();
  for (std::size_t k = 0; k < layout.num_modes(); ++k) {
    const double w = mult(stokes_eigenvalue(layout.mode(k), u.geometry()));
    out[2 * k] *= w;
    out[2 * k + 1] *= w;
  }
  return out;
}

/// (I − αΔ)u, or (I − αΔ)^{-1}u when inverse.
inline SpectralField helmholtz(const SpectralField& u, const SobolevParams& p, bool inverse = false) {
  if (inverse) return apply_multiplier(u, [&](double lam) { return 1.0 / (1.0 + p.alpha * lam); });
  return apply_multiplier(u, [&](double lam) { return 1.0 + p.alpha * lam; });
}

/// Per-mode rate of L: ν λ / (1 + α λ).
inline double dissipation_rate(double lambda, const SobolevParams& p) {
  return p.nu * lambda / (1.0 + p.alpha * lambda);
}

/// L U = −ν P Δ (I − αΔ)^{-1} U.
inline SpectralField op_L(const SpectralField& u, const SobolevParams& p) {
  return apply_multiplier(u, [&](double lam) { return dissipation_rate(lam, p); });
}

/// Zero every coefficient with |m| > k.
inline SpectralField project_modes(const SpectralField& u, int k) {
  SpectralField out = u;
  const auto& layout = u.layout();
  for (std::size_t s = 0; s < layout.num_modes(); ++s) {
    if (layout.mode(s).l1_norm() > k) out[2 * s] = out[2 * s + 1] = 0.0;
  }
  return out;
}

/// Re-express u at another truncation (embedding or Galerkin truncation).
inline SpectralField resize(const SpectralField& u, int trunc) {
  SpectralField out(u.geometry(), trunc);
  const auto& src = u.layout();
  for (std::size_t s = 0; s < src.num_modes(); ++s) {
    const auto slot = out.layout().find(src.mode(s));
    if (!slot) continue;
    out[2 * *slot] = u[2 * s];
    out[2 * *slot + 1] = u[2 * s + 1];
  }
  return out;
}

/// Uniform random coefficients in [−amplitude, amplitude] on modes |m| ≤ max_mode.
template <class Rng>
SpectralField random_field(const TorusGeometry& g, int trunc, int max_mode, double amplitude, Rng& rng) {
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  SpectralField f(g, trunc);
  const auto& layout = f.layout();
  for (std::size_t s = 0; s < layout.num_modes(); ++s) {
    if (layout.mode(s).l1_norm() > max_mode) continue;
    f[2 * s] = dist(rng);
    f[2 * s + 1] = dist(rng);
  }
  return f;
}

}  // namespace sgf
