#pragma once

#include <set>
#include <utility>
#include <vector>

#include "sgf/torus.hpp"

namespace sgf {

/// Coordinate subspace spanned by a set of basis functions c_m / s_m.
class ModeSubspace {
 public:
  struct Entry {
    ModeIndex mode;
    Parity parity;
    auto operator<=>(const Entry&) const = default;
  };

  ModeSubspace() = default;

  /// H^N_q: every c_m, s_m with |m| ≤ N.
  static ModeSubspace low_modes(int n) {
    ModeSubspace s;
    if (n < 1) return s;
    for (const auto& m : ModeLayout::get(n)->modes()) {
      s.insert(m, Parity::Cos);
      s.insert(m, Parity::Sin);
    }
    return s;
  }

  void insert(const ModeIndex& m, Parity p) { entries_.insert({m.canonical(), p}); }
  bool contains(const ModeIndex& m, Parity p) const { return entries_.count({m.canonical(), p}) > 0; }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::set<Entry>& entries() const noexcept { return entries_; }

  int max_l1() const {
    int k = 0;
    for (const auto& e : entries_) k = std::max(k, e.mode.l1_norm());
    return k;
  }

  ModeSubspace& unite(const ModeSubspace& o) {
    entries_.insert(o.entries_.begin(), o.entries_.end());
    return *this;
  }

  bool includes(const ModeSubspace& o) const {
    for (const auto& e : o.entries_) {
      if (!entries_.count(e)) return false;
    }
    return true;
  }

  /// True when every coefficient of f outside this subspace is at most tol in magnitude.
  bool supports(const SpectralField& f, double tol = 0.0) const {
    const auto& layout = f.layout();
    for (std::size_t i = 0; i < f.dims(); ++i) {
      if (std::abs(f[i]) <= tol) continue;
      if (!contains(layout.mode(ModeLayout::slot_of(i)), ModeLayout::parity_of(i))) return false;
    }
    return true;
  }

  /// Zero every coefficient outside the subspace.
  SpectralField restrict(const SpectralField& f) const {
    SpectralField out = f;
    const auto& layout = f.layout();
    for (std::size_t i = 0; i < f.dims(); ++i) {
      if (!contains(layout.mode(ModeLayout::slot_of(i)), ModeLayout::parity_of(i))) out[i] = 0.0;
    }
    return out;
  }

  bool operator==(const ModeSubspace&) const = default;

 private:
  std::set<Entry> entries_;
};

}  // namespace sgf
