#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "dopf/scenario.hpp"
#include "dopf/util/csv.hpp"
#include "dopf/util/num.hpp"

namespace dopf {

// scenarios.csv long format: t,bus,p_c,q_c,p_g,s_cap
// Three-phase networks write one row per (bus, phase) with bus = "id:phase".

struct IngestResult {
  ScenarioSet set;
  size_t zero_fills = 0;  // count of missing (bus, channel) cells filled with 0
};

inline void append_hour_channels(ScenarioSet& set, int steps_per_day) {
  set.extra_names = {"hour_sin", "hour_cos"};
  for (auto& sc : set.scenarios) {
    double h = static_cast<double>(sc.t % steps_per_day) * 24.0 / steps_per_day;
    sc.extra = {std::sin(2 * std::numbers::pi * h / 24.0),
                std::cos(2 * std::numbers::pi * h / 24.0)};
  }
}

inline IngestResult ingest(const std::string& path, const Network& net,
                           int hour_channel_steps_per_day = 0) {
  CsvTable t = read_csv(path);
  int c_t = t.require_col("t", path);
  int c_bus = t.require_col("bus", path);
  int c_pc = t.require_col("p_c", path);
  int c_qc = t.require_col("q_c", path);
  int c_pg = t.require_col("p_g", path);
  int c_sc = t.require_col("s_cap", path);

  IngestResult res;
  res.set.provenance = "ingested";
  std::map<int64_t, size_t> t_index;

  auto cell = [&](const std::vector<std::string>& row, int col, const char* name,
                  size_t& fills) -> double {
    const std::string& s = row.at(col);
    if (s.empty()) {
      ++fills;
      return 0.0;
    }
    double v = parse_double(s, std::string("scenarios ") + name);
    if (v < 0) throw Error(Err::NegativeLoad, std::string(name) + " = " + s);
    return v;
  };

  size_t nb = net.buses.size();
  // presence[bus] bitmask per scenario, to count fully missing rows afterwards
  std::vector<std::vector<char>> present;

  for (const auto& row : t.rows) {
    int64_t ts = parse_int(row.at(c_t), "scenarios t");
    auto [it, fresh] = t_index.try_emplace(ts, res.set.scenarios.size());
    if (fresh) {
      Scenario sc;
      sc.t = ts;
      sc.d.assign(nb, {});
      res.set.scenarios.push_back(std::move(sc));
      present.emplace_back(nb, 0);
    }
    Scenario& sc = res.set.scenarios[it->second];

    std::string bus_tok = row.at(c_bus);
    int phase_slot = 0;
    auto colon = bus_tok.find(':');
    if (colon != std::string::npos) {
      Phase p = PhaseSet::parse(bus_tok.substr(colon + 1)).has(Phase::a)   ? Phase::a
                : PhaseSet::parse(bus_tok.substr(colon + 1)).has(Phase::b) ? Phase::b
                                                                           : Phase::c;
      phase_slot = phase_index(p);
      bus_tok = bus_tok.substr(0, colon);
    }
    int bus = net.index_of(bus_tok);
    if (bus < 0) throw Error(Err::UnknownBus, bus_tok);
    present[it->second][bus] = 1;

    DerRecord& r = sc.d[bus][phase_slot];
    r.p_c = cell(row, c_pc, "p_c", res.zero_fills);
    r.q_c = cell(row, c_qc, "q_c", res.zero_fills);
    r.p_g = cell(row, c_pg, "p_g", res.zero_fills);
    r.s_cap = cell(row, c_sc, "s_cap", res.zero_fills);
  }

  if (res.set.scenarios.empty()) throw Error(Err::EmptyInput, path);

  for (const auto& pr : present)
    for (char p : pr)
      if (!p) res.zero_fills += 4;

  // uniform time step over sorted timestamps
  std::vector<int64_t> ts;
  ts.reserve(t_index.size());
  for (auto& [k, v] : t_index) ts.push_back(k);
  if (ts.size() >= 3) {
    int64_t step = ts[1] - ts[0];
    for (size_t i = 2; i < ts.size(); ++i)
      if (ts[i] - ts[i - 1] != step)
        throw Error(Err::NonUniformTimestep, "timestamps are not equally spaced");
  }

  // keep scenarios in timestamp order
  std::sort(res.set.scenarios.begin(), res.set.scenarios.end(),
            [](const Scenario& a, const Scenario& b) { return a.t < b.t; });
  res.set.split.assign(res.set.scenarios.size(), SplitLabel::Train);
  if (hour_channel_steps_per_day > 0) append_hour_channels(res.set, hour_channel_steps_per_day);
  return res;
}

inline void write_scenarios(const ScenarioSet& set, const Network& net, const std::string& path) {
  CsvWriter w(path);
  w.row({"t", "bus", "p_c", "q_c", "p_g", "s_cap"});
  bool three_phase = !net.single_phase();
  for (const auto& sc : set.scenarios) {
    for (size_t b = 0; b < net.buses.size(); ++b) {
      auto emit = [&](int slot, const std::string& bus_tok) {
        const DerRecord& r = sc.d[b][slot];
        w.row({std::to_string(sc.t), bus_tok, fmt_double(r.p_c), fmt_double(r.q_c),
               fmt_double(r.p_g), fmt_double(r.s_cap)});
      };
      if (three_phase) {
        net.buses[b].phases.for_each([&](Phase p) {
          emit(phase_index(p), net.buses[b].id + ":" + phase_char(p));
        });
      } else {
        emit(0, net.buses[b].id);
      }
    }
  }
}

}  // namespace dopf
