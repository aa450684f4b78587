#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "dopf/network.hpp"
#include "dopf/util/csv.hpp"
#include "dopf/util/num.hpp"

// Feeder file formats:
//   buses.csv    id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z
//                kinds: '|'-joined tokens; cap_model: none|disk|box|pv_residual;
//                cap_params: '|'-joined numbers (disk/pv_residual: s;
//                box: pmin|pmax|qmin|qmax); cap_q_phase: 'a:0.1|c:0.05'.
//   branches.csv from,to,phases,z_entries
//                z_entries: ';'-joined 'XY:r:x' per phase pair, mirrored
//                symmetrically when only one triangle is given.
//   feeder.json  bases, slack id, voltage bounds, y_ref.

namespace dopf {

namespace detail {

inline CapacityModel parse_capacity(const std::string& model, const std::string& params,
                                    const std::string& where) {
  auto nums = split(params, '|');
  auto num = [&](size_t i) { return parse_double(nums.at(i), where); };
  if (model == "disk") {
    if (nums.size() != 1) throw Error(Err::ParseError, where + ": disk needs 1 parameter");
    return CapacityModel::disk(num(0));
  }
  if (model == "box") {
    if (nums.size() != 4) throw Error(Err::ParseError, where + ": box needs 4 parameters");
    return CapacityModel::box(num(0), num(1), num(2), num(3));
  }
  if (model == "pv_residual") {
    if (nums.size() != 1)
      throw Error(Err::ParseError, where + ": pv_residual needs 1 parameter");
    return CapacityModel::pv_residual(num(0));
  }
  throw Error(Err::ParseError, where + ": unknown cap_model '" + model + "'");
}

inline std::string capacity_params(const CapacityModel& m) {
  switch (m.kind) {
    case CapacityModel::Kind::Disk:
    case CapacityModel::Kind::PvResidual:
      return fmt_double(m.s_max);
    case CapacityModel::Kind::Box:
      return fmt_double(m.p_min) + "|" + fmt_double(m.p_max) + "|" + fmt_double(m.q_min) + "|" +
             fmt_double(m.q_max);
  }
  return "";
}

inline const char* capacity_model_name(const CapacityModel& m) {
  switch (m.kind) {
    case CapacityModel::Kind::Disk: return "disk";
    case CapacityModel::Kind::Box: return "box";
    case CapacityModel::Kind::PvResidual: return "pv_residual";
  }
  return "none";
}

}  // namespace detail

inline Network parse_network(const std::string& buses_csv, const std::string& branches_csv,
                             const std::string& feeder_json) {
  Network net;
  std::string declared_slack;

  {
    std::ifstream in(feeder_json);
    if (!in) throw Error(Err::MissingStageInput, "cannot open " + feeder_json);
    nlohmann::json j = nlohmann::json::parse(in);
    net.s_base_kva = j.value("s_base_kva", net.s_base_kva);
    net.v_base_kv = j.value("v_base_kv", net.v_base_kv);
    net.y_min = j.value("y_min", net.y_min);
    net.y_max = j.value("y_max", net.y_max);
    net.y_ref = j.value("y_ref", net.y_ref);
    if (j.contains("slack")) declared_slack = j["slack"].get<std::string>();
  }

  CsvTable bt = read_csv(buses_csv);
  int c_id = bt.require_col("id", buses_csv);
  int c_kinds = bt.require_col("kinds", buses_csv);
  int c_ph = bt.require_col("phases", buses_csv);
  int c_cm = bt.require_col("cap_model", buses_csv);
  int c_cp = bt.require_col("cap_params", buses_csv);
  int c_cq = bt.require_col("cap_q_phase", buses_csv);
  int c_bs = bt.require_col("beta_s", buses_csv);
  int c_bz = bt.require_col("beta_z", buses_csv);

  for (const auto& row : bt.rows) {
    Bus b;
    b.id = row.at(c_id);
    for (const auto& tok : split(row.at(c_kinds), '|'))
      if (!tok.empty()) b.kinds.insert(parse_bus_kind(tok));
    b.phases = PhaseSet::parse(row.at(c_ph));
    const std::string& cm = row.at(c_cm);
    if (cm != "none" && !cm.empty())
      b.capacity = detail::parse_capacity(cm, row.at(c_cp), "bus " + b.id);
    const std::string& cq = row.at(c_cq);
    if (!cq.empty()) {
      for (const auto& pair : split(cq, '|')) {
        auto kv = split(pair, ':');
        if (kv.size() != 2) throw Error(Err::ParseError, "bus " + b.id + ": bad cap_q_phase");
        Phase p = PhaseSet::parse(kv[0]).has(Phase::a)   ? Phase::a
                  : PhaseSet::parse(kv[0]).has(Phase::b) ? Phase::b
                                                         : Phase::c;
        b.shunt_c[phase_index(p)] = parse_double(kv[1], "bus " + b.id + " cap_q_phase");
      }
    }
    double bs = parse_double(row.at(c_bs), "bus " + b.id + " beta_s");
    double bz = parse_double(row.at(c_bz), "bus " + b.id + " beta_z");
    b.beta_s = {bs, bs, bs};
    b.beta_z = {bz, bz, bz};
    net.buses.push_back(std::move(b));
  }

  CsvTable rt = read_csv(branches_csv);
  int c_from = rt.require_col("from", branches_csv);
  int c_to = rt.require_col("to", branches_csv);
  int c_bph = rt.require_col("phases", branches_csv);
  int c_z = rt.require_col("z_entries", branches_csv);

  // temporary name-based endpoints; finalize() needs indices
  std::map<std::string, int> idx;
  for (size_t i = 0; i < net.buses.size(); ++i) idx[net.buses[i].id] = static_cast<int>(i);

  for (const auto& row : rt.rows) {
    Branch br;
    auto fit = idx.find(row.at(c_from));
    auto tit = idx.find(row.at(c_to));
    if (fit == idx.end()) throw Error(Err::UnknownBus, "branch from '" + row.at(c_from) + "'");
    if (tit == idx.end()) throw Error(Err::UnknownBus, "branch to '" + row.at(c_to) + "'");
    br.from = fit->second;
    br.to = tit->second;
    br.phases = PhaseSet::parse(row.at(c_bph));
    for (const auto& entry : split(row.at(c_z), ';')) {
      if (entry.empty()) continue;
      auto f = split(entry, ':');
      if (f.size() != 3)
        throw Error(Err::ParseError, "branch z_entries token '" + entry + "'");
      if (f[0].size() != 2) throw Error(Err::ParseError, "branch phase pair '" + f[0] + "'");
      PhaseSet p1 = PhaseSet::parse(f[0].substr(0, 1));
      PhaseSet p2 = PhaseSet::parse(f[0].substr(1, 1));
      int i = p1.has(Phase::a) ? 0 : (p1.has(Phase::b) ? 1 : 2);
      int j = p2.has(Phase::a) ? 0 : (p2.has(Phase::b) ? 1 : 2);
      if (!br.phases.has(static_cast<Phase>(i)) || !br.phases.has(static_cast<Phase>(j)))
        throw Error(Err::PhaseMismatch, "z entry " + f[0] + " outside branch phases");
      std::complex<double> zz(parse_double(f[1], "branch r"), parse_double(f[2], "branch x"));
      br.z(i, j) = zz;
      if (i != j) br.z(j, i) = zz;
    }
    net.branches.push_back(std::move(br));
  }

  net.finalize();
  if (!declared_slack.empty()) {
    int ds = net.index_of(declared_slack);
    if (ds < 0) throw Error(Err::UnknownBus, "declared slack '" + declared_slack + "'");
    if (ds != net.slack)
      throw Error(Err::ParseError, "feeder.json slack does not match the slack-kind bus");
  }
  return net;
}

// Writes the three feeder files back out; parse(write(net)) == net.
inline void write_network(const Network& net, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  CsvWriter bw(dir + "/buses.csv");
  bw.row({"id", "kinds", "phases", "cap_model", "cap_params", "cap_q_phase", "beta_s", "beta_z"});
  for (const auto& b : net.buses) {
    std::string kinds;
    for (BusKind k : b.kinds) {
      if (!kinds.empty()) kinds += "|";
      kinds += bus_kind_name(k);
    }
    std::string cq;
    for (int p = 0; p < 3; ++p) {
      if (b.shunt_c[p] != 0) {
        if (!cq.empty()) cq += "|";
        cq += std::string(1, "abc"[p]) + ":" + fmt_double(b.shunt_c[p]);
      }
    }
    bw.row({b.id, kinds, b.phases.str(),
            b.capacity ? detail::capacity_model_name(*b.capacity) : "none",
            b.capacity ? detail::capacity_params(*b.capacity) : "",
            cq, fmt_double(b.beta_s[0]), fmt_double(b.beta_z[0])});
  }

  CsvWriter rw(dir + "/branches.csv");
  rw.row({"from", "to", "phases", "z_entries"});
  for (const auto& br : net.branches) {
    std::string z;
    br.phases.for_each([&](Phase pi) {
      br.phases.for_each([&](Phase pj) {
        int i = phase_index(pi), j = phase_index(pj);
        if (j < i) return;
        auto zz = br.z(i, j);
        if (i != j && zz == std::complex<double>(0, 0)) return;
        if (!z.empty()) z += ";";
        z += std::string(1, "abc"[i]) + std::string(1, "abc"[j]) + ":" + fmt_double(zz.real()) +
             ":" + fmt_double(zz.imag());
      });
    });
    rw.row({net.buses[br.from].id, net.buses[br.to].id, br.phases.str(), z});
  }

  nlohmann::json j;
  j["s_base_kva"] = net.s_base_kva;
  j["v_base_kv"] = net.v_base_kv;
  j["slack"] = net.buses[net.slack].id;
  j["y_min"] = net.y_min;
  j["y_max"] = net.y_max;
  j["y_ref"] = net.y_ref;
  std::ofstream out(dir + "/feeder.json");
  out << j.dump(2) << "\n";
}

}  // namespace dopf
