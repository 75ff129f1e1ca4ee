#pragma once

#include <nlohmann/json.hpp>

#include "sgf/mode_subspace.hpp"
#include "sgf/torus.hpp"

namespace sgf {

using json = nlohmann::json;

inline json to_json(const SpectralField& f) {
  json modes = json::array();
  const auto& layout = f.layout();
  for (std::size_t s = 0; s < layout.num_modes(); ++s) {
    const auto& m = layout.mode(s);
    modes.push_back({{"m", {m.m1(), m.m2()}}, {"a", f[2 * s]}, {"b", f[2 * s + 1]}});
  }
  return {{"q", {f.geometry().q1, f.geometry().q2}}, {"trunc", f.trunc()}, {"modes", modes}};
}

/// Accepts any representative m; entries for absent modes are zero.
inline SpectralField field_from_json(const json& j) {
  try {
    const auto& q = j.at("q");
    SpectralField f(TorusGeometry(q.at(0).get<double>(), q.at(1).get<double>()), j.at("trunc").get<int>());
    if (j.contains("modes")) {
      for (const auto& e : j.at("modes")) {
        const ModeIndex m(e.at("m").at(0).get<int>(), e.at("m").at(1).get<int>());
        f.set(m, Parity::Cos, e.value("a", 0.0));
        f.set(m, Parity::Sin, e.value("b", 0.0));
      }
    }
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed field: ") + e.what());
  }
}

inline json to_json(const ModeSubspace& s) {
  json out = json::array();
  for (const auto& e : s.entries()) {
    out.push_back({{"m", {e.mode.m1(), e.mode.m2()}}, {"parity", parity_name(e.parity)}});
  }
  return out;
}

}  // namespace sgf
