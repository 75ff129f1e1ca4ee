#pragma once

// Time-dependent SpectralField on [0,T]: piecewise polynomials in the local
// time τ = t − t_i of each piece.  Piecewise-constant and sampled (piecewise
// linear) signals are the degree-0 and degree-1 cases.

#include <algorithm>
#include <functional>
#include <vector>

#include "sgf/mode_subspace.hpp"
#include "sgf/torus.hpp"

namespace sgf {

enum class SignalKind { PiecewiseConstant, Sampled, PiecewisePolynomial };

class ControlSignal {
 public:
  using Piece = std::vector<SpectralField>;  // coefficient of τ^d at index d

  static ControlSignal zero(const TorusGeometry& g, int trunc, double T) {
    return piecewise_constant({0.0, T}, {SpectralField(g, trunc)});
  }

  static ControlSignal constant(const SpectralField& v, double T) { return piecewise_constant({0.0, T}, {v}); }

  /// values[i] holds on [breaks[i], breaks[i+1]).
  static ControlSignal piecewise_constant(std::vector<double> breaks, std::vector<SpectralField> values) {
    if (values.size() + 1 != breaks.size()) throw ContractViolation("need one value per segment");
    std::vector<Piece> pieces;
    for (auto& v : values) pieces.push_back(Piece{std::move(v)});
    return ControlSignal(std::move(breaks), std::move(pieces), SignalKind::PiecewiseConstant);
  }

  /// Linear interpolation between samples at increasing times.
  static ControlSignal sampled(std::vector<double> times, const std::vector<SpectralField>& samples) {
    if (samples.size() != times.size() || times.size() < 2) throw ContractViolation("need at least two samples");
    std::vector<Piece> pieces;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
      const double h = times[i + 1] - times[i];
      if (!(h > 0.0)) throw ContractViolation("sample times must increase");
      pieces.push_back(Piece{samples[i], (1.0 / h) * (samples[i + 1] - samples[i])});
    }
    return ControlSignal(std::move(times), std::move(pieces), SignalKind::Sampled);
  }

  static ControlSignal piecewise_polynomial(std::vector<double> breaks, std::vector<Piece> pieces) {
    return ControlSignal(std::move(breaks), std::move(pieces), SignalKind::PiecewisePolynomial);
  }

  SignalKind kind() const noexcept { return kind_; }
  double horizon() const noexcept { return breaks_.back(); }
  const TorusGeometry& geometry() const { return pieces_.front().front().geometry(); }
  int trunc() const { return pieces_.front().front().trunc(); }
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  std::size_t num_pieces() const noexcept { return pieces_.size(); }
  const Piece& piece(std::size_t i) const { return pieces_.at(i); }

  int degree() const {
    std::size_t d = 0;
    for (const auto& p : pieces_) d = std::max(d, p.size() - 1);
    return static_cast<int>(d);
  }

  /// Index of the piece containing t (right-continuous; T maps to the last piece).
  std::size_t piece_index(double t) const {
    const double tol = 1e-12 * std::max(1.0, horizon());
    if (t < -tol || t > horizon() + tol) throw ContractViolation("time outside the signal horizon");
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    std::size_t i = it == breaks_.begin() ? 0 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
    return std::min(i, pieces_.size() - 1);
  }

  /// Polynomial of piece i evaluated at absolute time t (may lie at either end).
  SpectralField eval_piece(std::size_t i, double t) const {
    const Piece& p = pieces_[i];
    const double tau = t - breaks_[i];
    SpectralField out = p.back();
    for (std::size_t d = p.size() - 1; d-- > 0;) {
      out *= tau;
      out += p[d];
    }
    return out;
  }

  SpectralField value(double t) const { return eval_piece(piece_index(t), t); }

  /// Pointwise linear map (projection, L, Helmholtz, ...).
  ControlSignal map(const std::function<SpectralField(const SpectralField&)>& fn) const {
    std::vector<Piece> pieces;
    for (const auto& p : pieces_) {
      Piece q;
      for (const auto& c : p) q.push_back(fn(c));
      pieces.push_back(std::move(q));
    }
    return ControlSignal(breaks_, std::move(pieces), kind_);
  }

  ControlSignal scaled(double s) const {
    return map([s](const SpectralField& f) { return s * f; });
  }

  ControlSignal projected(int k) const {
    return map([k](const SpectralField& f) { return project_modes(f, k); });
  }

  ControlSignal derivative() const {
    std::vector<Piece> pieces;
    for (const auto& p : pieces_) {
      Piece q;
      for (std::size_t d = 1; d < p.size(); ++d) q.push_back(static_cast<double>(d) * p[d]);
      if (q.empty()) q.push_back(SpectralField(geometry(), trunc()));
      pieces.push_back(std::move(q));
    }
    return ControlSignal(breaks_, std::move(pieces), demote(kind_));
  }

  /// Continuous running integral ∫₀ᵗ.
  ControlSignal integral() const {
    std::vector<Piece> pieces;
    SpectralField acc(geometry(), trunc());
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const Piece& p = pieces_[i];
      Piece q{acc};
      for (std::size_t d = 0; d < p.size(); ++d) q.push_back((1.0 / static_cast<double>(d + 1)) * p[d]);
      pieces.push_back(std::move(q));
      acc = eval_piece_of(pieces.back(), breaks_[i + 1] - breaks_[i]);
    }
    return ControlSignal(breaks_, std::move(pieces), SignalKind::PiecewisePolynomial);
  }

  /// Coordinates carrying some coefficient above tol.
  ModeSubspace support(double tol = 0.0) const {
    ModeSubspace s;
    for (const auto& p : pieces_) {
      for (const auto& c : p) {
        const auto& layout = c.layout();
        for (std::size_t i = 0; i < c.dims(); ++i) {
          if (std::abs(c[i]) > tol) s.insert(layout.mode(ModeLayout::slot_of(i)), ModeLayout::parity_of(i));
        }
      }
    }
    return s;
  }

  bool is_zero() const {
    return std::all_of(pieces_.begin(), pieces_.end(), [](const Piece& p) {
      return std::all_of(p.begin(), p.end(), [](const SpectralField& f) { return f.is_zero(); });
    });
  }

  /// sup_t ‖·‖_{V^s}, exact for degree ≤ 1, sampled at `samples` interior points per piece otherwise.
  double sup_norm(double s, int samples = 16) const {
    double best = 0.0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const double t0 = breaks_[i], t1 = breaks_[i + 1];
      const int n = pieces_[i].size() <= 2 ? 1 : samples;
      for (int k = 0; k <= n; ++k) {
        best = std::max(best, sobolev_norm(eval_piece(i, t0 + (t1 - t0) * k / n), s));
      }
    }
    return best;
  }

  /// Merge breakpoints; pieces of both are re-expanded about the merged piece start.
  friend ControlSignal operator+(const ControlSignal& a, const ControlSignal& b) { return combine(a, 1.0, b, 1.0); }
  friend ControlSignal operator-(const ControlSignal& a, const ControlSignal& b) { return combine(a, 1.0, b, -1.0); }

  static ControlSignal combine(const ControlSignal& a, double sa, const ControlSignal& b, double sb) {
    if (!a.pieces_.front().front().compatible(b.pieces_.front().front())) {
      throw GeometryMismatch("signals differ in geometry or truncation");
    }
    const double T = std::max(a.horizon(), b.horizon());
    if (std::abs(a.horizon() - b.horizon()) > 1e-12 * T) throw ContractViolation("signals have different horizons");
    const auto breaks = merge_breakpoints({&a.breaks_, &b.breaks_}, T);
    std::vector<Piece> pieces;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
      const double mid = 0.5 * (breaks[i] + breaks[i + 1]);
      Piece pa = a.recentred(a.piece_index(mid), breaks[i]);
      Piece pb = b.recentred(b.piece_index(mid), breaks[i]);
      double wa = sa, wb = sb;
      if (pa.size() < pb.size()) {
        std::swap(pa, pb);
        std::swap(wa, wb);
      }
      for (auto& c : pa) c *= wa;
      for (std::size_t d = 0; d < pb.size(); ++d) pa[d].axpy(wb, pb[d]);
      pieces.push_back(std::move(pa));
    }
    SignalKind k = SignalKind::PiecewisePolynomial;
    if (a.kind_ == SignalKind::PiecewiseConstant && b.kind_ == SignalKind::PiecewiseConstant) {
      k = SignalKind::PiecewiseConstant;
    }
    return ControlSignal(breaks, std::move(pieces), k);
  }

  /// Sorted union of breakpoint lists with points closer than 1e-12·T identified.
  static std::vector<double> merge_breakpoints(const std::vector<const std::vector<double>*>& lists, double T) {
    std::vector<double> all;
    for (const auto* l : lists) all.insert(all.end(), l->begin(), l->end());
    std::sort(all.begin(), all.end());
    const double tol = 1e-12 * std::max(1.0, T);
    std::vector<double> out;
    for (double t : all) {
      if (out.empty() || t - out.back() > tol) out.push_back(t);
    }
    out.front() = 0.0;
    out.back() = T;
    if (out.size() < 2) out = {0.0, T};
    return out;
  }

  /// Coefficients of piece i expanded about absolute time s0.
  Piece recentred(std::size_t i, double s0) const {
    const Piece& p = pieces_[i];
    const double delta = s0 - breaks_[i];
    if (delta == 0.0) return p;
    Piece q(p.size(), SpectralField(geometry(), trunc()));
    // (σ + δ)^d = Σ_j C(d,j) δ^{d−j} σ^j
    for (std::size_t d = 0; d < p.size(); ++d) {
      double binom = 1.0;
      for (std::size_t j = 0; j <= d; ++j) {
        q[j].axpy(binom * std::pow(delta, static_cast<double>(d - j)), p[d]);
        binom = binom * static_cast<double>(d - j) / static_cast<double>(j + 1);
      }
    }
    return q;
  }

 private:
  ControlSignal(std::vector<double> breaks, std::vector<Piece> pieces, SignalKind kind)
      : breaks_(std::move(breaks)), pieces_(std::move(pieces)), kind_(kind) {
    if (pieces_.empty() || breaks_.size() != pieces_.size() + 1) {
      throw ContractViolation("signal needs one piece per breakpoint interval");
    }
    if (breaks_.front() != 0.0) throw ContractViolation("signal must start at t = 0");
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i) {
      if (!(breaks_[i + 1] > breaks_[i])) throw ContractViolation("breakpoints must increase");
    }
    for (const auto& p : pieces_) {
      if (p.empty()) throw ContractViolation("empty signal piece");
      for (const auto& c : p) pieces_.front().front().require_compatible(c);
    }
  }

  static SignalKind demote(SignalKind k) {
    return k == SignalKind::Sampled ? SignalKind::PiecewiseConstant : k;
  }

  static SpectralField eval_piece_of(const Piece& p, double tau) {
    SpectralField out = p.back();
    for (std::size_t d = p.size() - 1; d-- > 0;) {
      out *= tau;
      out += p[d];
    }
    return out;
  }

  std::vector<double> breaks_;
  std::vector<Piece> pieces_;
  SignalKind kind_;
};

}  // namespace sgf
