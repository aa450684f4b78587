#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dopf/scenario.hpp"
#include "dopf/scenario_io.hpp"
#include "dopf/util/rng.hpp"

namespace dopf {

// Synthetic scenario generator. Diurnal base shapes with multiplicative
// lognormal noise; a shared per-day factor correlates buses the way weather
// and aggregate demand do. PV output is clamped at its rated peak.
struct BusProfile {
  double peak_p = 0;     // peak real consumption, pu
  double q_ratio = 0.35; // q_c = q_ratio * p_c
  bool pv = false;
};

struct ProfileConfig {
  int steps_per_day = 96;           // 15-minute resolution
  double pv_fraction = 0.8;         // PV peak as a fraction of peak load
  double load_noise_sigma = 0.15;   // per-bus per-step
  double day_noise_sigma = 0.15;    // shared per-day demand level
  double pv_day_sigma = 0.25;       // shared per-day irradiance level
  bool hour_channels = false;       // expose hour-of-day as d^other
  std::map<std::string, BusProfile> buses;

  // three-phase shaping
  std::map<std::string, std::array<double, 3>> phase_weights;  // share per phase
  std::array<double, 3> phase_scale{1, 1, 1};                  // imbalance multipliers
  double phase_scale_sigma = 0;                                // per-step noise on multipliers

  static ProfileConfig from_json(const nlohmann::json& j) {
    ProfileConfig c;
    c.steps_per_day = j.value("steps_per_day", c.steps_per_day);
    c.pv_fraction = j.value("pv_fraction", c.pv_fraction);
    c.load_noise_sigma = j.value("load_noise_sigma", c.load_noise_sigma);
    c.day_noise_sigma = j.value("day_noise_sigma", c.day_noise_sigma);
    c.pv_day_sigma = j.value("pv_day_sigma", c.pv_day_sigma);
    c.hour_channels = j.value("hour_channels", c.hour_channels);
    if (j.contains("buses")) {
      for (auto& [id, bj] : j["buses"].items()) {
        BusProfile p;
        p.peak_p = bj.value("peak_p", 0.0);
        p.q_ratio = bj.value("q_ratio", 0.35);
        p.pv = bj.value("pv", false);
        c.buses[id] = p;
      }
    }
    if (j.contains("phase_weights")) {
      for (auto& [id, wj] : j["phase_weights"].items()) {
        std::array<double, 3> w{0, 0, 0};
        for (int i = 0; i < 3 && i < static_cast<int>(wj.size()); ++i) w[i] = wj[i].get<double>();
        c.phase_weights[id] = w;
      }
    }
    if (j.contains("phase_scale")) {
      for (int i = 0; i < 3; ++i) c.phase_scale[i] = j["phase_scale"][i].get<double>();
    }
    c.phase_scale_sigma = j.value("phase_scale_sigma", c.phase_scale_sigma);
    return c;
  }

  static ProfileConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Err::MissingStageInput, "cannot open " + path);
    return from_json(nlohmann::json::parse(in));
  }
};

namespace detail {

inline double load_shape(double h) {
  auto bump = [](double h0, double w, double a) {
    return [=](double x) { return a * std::exp(-((x - h0) / w) * ((x - h0) / w)); };
  };
  return 0.35 + bump(8.5, 2.5, 0.25)(h) + bump(19.0, 3.5, 0.65)(h);
}

inline double pv_shape(double h) {
  double x = (h - 12.5) / 6.5;
  if (std::abs(x) >= 1.0) return 0;
  double c = std::cos(x * std::numbers::pi / 2);
  return std::pow(c, 1.5);
}

}  // namespace detail

inline ScenarioSet synthesize(const Network& net, const ProfileConfig& cfg, size_t count,
                              uint64_t seed) {
  if (cfg.pv_fraction < 0 || cfg.pv_fraction > 2)
    throw Error(Err::InvalidFraction, "pv_fraction must lie in [0, 2]");

  ScenarioSet set;
  set.provenance = "synthetic";
  size_t nb = net.buses.size();
  bool three_phase = !net.single_phase();

  // resolve per-bus profiles by index
  std::vector<BusProfile> prof(nb);
  for (size_t b = 0; b < nb; ++b) {
    auto it = cfg.buses.find(net.buses[b].id);
    if (it != cfg.buses.end()) prof[b] = it->second;
  }

  Rng rng(seed);
  double day_load = 1.0, day_pv = 1.0;
  int64_t cur_day = -1;

  for (size_t t = 0; t < count; ++t) {
    int64_t day = static_cast<int64_t>(t) / cfg.steps_per_day;
    if (day != cur_day) {
      cur_day = day;
      day_load = rng.lognormal(cfg.day_noise_sigma);
      day_pv = rng.lognormal(cfg.pv_day_sigma);
    }
    double h = static_cast<double>(t % cfg.steps_per_day) * 24.0 / cfg.steps_per_day;
    double sl = detail::load_shape(h);
    double sp = detail::pv_shape(h);

    std::array<double, 3> pm = cfg.phase_scale;
    if (three_phase && cfg.phase_scale_sigma > 0) {
      for (int i = 0; i < 3; ++i) pm[i] *= rng.lognormal(cfg.phase_scale_sigma);
    }

    Scenario sc;
    sc.t = static_cast<int64_t>(t);
    sc.d.assign(nb, {});

    for (size_t b = 0; b < nb; ++b) {
      if (prof[b].peak_p <= 0) continue;
      double p_c = prof[b].peak_p * sl * day_load * rng.lognormal(cfg.load_noise_sigma);
      double q_c = prof[b].q_ratio * p_c;
      double pv_peak = prof[b].pv ? cfg.pv_fraction * prof[b].peak_p : 0.0;
      double p_g = 0;
      if (pv_peak > 0) {
        p_g = std::min(pv_peak, pv_peak * sp * day_pv * rng.lognormal(cfg.load_noise_sigma));
      }
      double s_cap = 0;
      if (net.buses[b].capacity) {
        const auto& cap = *net.buses[b].capacity;
        switch (cap.kind) {
          case CapacityModel::Kind::PvResidual:
            s_cap = 1.05 * pv_peak;  // inverter sized with 5% headroom over PV peak
            break;
          case CapacityModel::Kind::Disk:
            s_cap = cap.s_max;
            break;
          case CapacityModel::Kind::Box:
            s_cap = std::max(std::abs(cap.p_min), std::abs(cap.p_max));
            break;
        }
      }

      if (!three_phase) {
        sc.d[b][0] = {p_c, q_c, p_g, s_cap};
      } else {
        std::array<double, 3> w{0, 0, 0};
        auto wit = cfg.phase_weights.find(net.buses[b].id);
        if (wit != cfg.phase_weights.end()) {
          w = wit->second;
        } else {
          double eq = 1.0 / net.buses[b].phases.count();
          net.buses[b].phases.for_each([&](Phase p) { w[phase_index(p)] = eq; });
        }
        net.buses[b].phases.for_each([&](Phase p) {
          int i = phase_index(p);
          sc.d[b][i] = {p_c * w[i] * pm[i], q_c * w[i] * pm[i], p_g * w[i], s_cap * w[i]};
        });
      }
    }
    set.scenarios.push_back(std::move(sc));
  }

  set.split.assign(set.scenarios.size(), SplitLabel::Train);
  if (cfg.hour_channels) append_hour_channels(set, cfg.steps_per_day);
  return set;
}

}  // namespace dopf
