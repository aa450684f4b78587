#pragma once

#include <string>
#include <vector>

#include "dopf/opf.hpp"
#include "dopf/opf3.hpp"
#include "dopf/util/csv.hpp"
#include "dopf/util/num.hpp"
#include "dopf/util/parallel.hpp"

namespace dopf {

// Per-scenario optimal set points {x(t), u*(t)} for every controllable
// channel, plus solve diagnostics. Failed or inexact solves stay in the set
// with their status; training filters on `usable_for_training`.
struct ScenarioLabel {
  conic::Status status = conic::Status::NumericalBreakdown;
  bool inexact = false;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double max_gap = 0;
  Eigen::VectorXd u;  // aligned with LabeledSet::channels
};

struct LabeledSet {
  std::vector<DerChannel> channels;
  std::vector<ScenarioLabel> labels;  // one per scenario, scenario order
  bool three_phase = false;

  bool usable_for_training(size_t t, bool exclude_inexact) const {
    const auto& l = labels[t];
    if (l.status != conic::Status::Optimal) return false;
    return !(exclude_inexact && l.inexact);
  }
};

inline LabeledSet label_set(const Network& net, const ScenarioSet& set, const OpfConfig& cfg,
                            int jobs = 1) {
  if (set.scenarios.empty()) throw Error(Err::EmptyInput, "no scenarios to label");
  LabeledSet out;
  out.three_phase = !net.single_phase();
  out.labels.assign(set.scenarios.size(), {});

  if (!out.three_phase) {
    detail1ph::Index ix = detail1ph::make_index(net, cfg);
    out.channels = ix.ders;
    parallel_for(set.scenarios.size(), jobs, [&](size_t t) {
      ScenarioLabel lab;
      try {
        OPFSolution sol = solve_opf_1ph(net, set.scenarios[t], cfg);
        lab.status = sol.status;
        lab.inexact = sol.inexact;
        lab.objective = sol.objective;
        lab.max_gap = sol.max_gap;
        lab.u = sol.u;
      } catch (const Error&) {
        lab.status = conic::Status::NumericalBreakdown;
      }
      out.labels[t] = std::move(lab);
    });
  } else {
    detail3ph::Index ix = detail3ph::make_index(net, cfg);
    out.channels = ix.ders;
    parallel_for(set.scenarios.size(), jobs, [&](size_t t) {
      ScenarioLabel lab;
      try {
        Opf3Solution sol = solve_opf_3ph(net, set.scenarios[t], cfg);
        lab.status = sol.status;
        lab.objective = sol.objective;
        lab.u = sol.u;
      } catch (const Error&) {
        lab.status = conic::Status::NumericalBreakdown;
      }
      out.labels[t] = std::move(lab);
    });
  }
  for (auto& lab : out.labels)
    if (lab.u.size() == 0) lab.u = Eigen::VectorXd::Zero(out.channels.size());
  return out;
}

// labels.csv: t,bus,u_p,u_q[,phase],status,exactness_gap,objective
inline void write_labels(const LabeledSet& ls, const ScenarioSet& set, const Network& net,
                         const std::string& path) {
  CsvWriter w(path);
  if (ls.three_phase)
    w.row({"t", "bus", "u_p", "u_q", "phase", "status", "exactness_gap", "objective"});
  else
    w.row({"t", "bus", "u_p", "u_q", "status", "exactness_gap", "objective"});

  for (size_t t = 0; t < ls.labels.size(); ++t) {
    const auto& lab = ls.labels[t];
    std::string status = lab.status == conic::Status::Optimal && lab.inexact
                             ? "inexact"
                             : conic::status_name(lab.status);
    // group channels of one (bus, phase) into a row
    for (size_t k = 0; k < ls.channels.size(); ++k) {
      const auto& ch = ls.channels[k];
      if (ch.is_q && k > 0 && ls.channels[k - 1].bus == ch.bus &&
          ls.channels[k - 1].phase == ch.phase && !ls.channels[k - 1].is_q)
        continue;  // already emitted with the p channel
      double up = 0, uq = 0;
      if (!ch.is_q) {
        up = lab.u(k);
        if (k + 1 < ls.channels.size() && ls.channels[k + 1].bus == ch.bus &&
            ls.channels[k + 1].phase == ch.phase && ls.channels[k + 1].is_q)
          uq = lab.u(k + 1);
      } else {
        uq = lab.u(k);
      }
      std::vector<std::string> row{std::to_string(set.scenarios[t].t),
                                   net.buses[ch.bus].id, fmt_double(up), fmt_double(uq)};
      if (ls.three_phase) row.push_back(std::string(1, "abc"[ch.phase]));
      row.push_back(status);
      row.push_back(fmt_double(lab.max_gap));
      row.push_back(fmt_double(lab.objective));
      w.row(row);
    }
  }
}

inline LabeledSet read_labels(const std::string& path, const ScenarioSet& set,
                              const Network& net, const OpfConfig& cfg) {
  CsvTable t = read_csv(path);
  bool three_phase = t.col("phase") >= 0;
  int c_t = t.require_col("t", path);
  int c_bus = t.require_col("bus", path);
  int c_up = t.require_col("u_p", path);
  int c_uq = t.require_col("u_q", path);
  int c_st = t.require_col("status", path);
  int c_gap = t.require_col("exactness_gap", path);
  int c_obj = t.require_col("objective", path);
  int c_ph = t.col("phase");

  LabeledSet ls;
  ls.three_phase = three_phase;
  if (!three_phase) {
    ls.channels = detail1ph::make_index(net, cfg).ders;
  } else {
    ls.channels = detail3ph::make_index(net, cfg).ders;
  }
  std::map<int64_t, size_t> t_index;
  for (size_t i = 0; i < set.scenarios.size(); ++i) t_index[set.scenarios[i].t] = i;
  std::map<std::tuple<int, int, bool>, size_t> ch_index;
  for (size_t k = 0; k < ls.channels.size(); ++k)
    ch_index[{ls.channels[k].bus, ls.channels[k].phase, ls.channels[k].is_q}] = k;

  ls.labels.assign(set.scenarios.size(), {});
  for (auto& lab : ls.labels) {
    lab.u = Eigen::VectorXd::Zero(ls.channels.size());
    lab.status = conic::Status::Optimal;
  }
  for (const auto& row : t.rows) {
    auto it = t_index.find(parse_int(row.at(c_t), "labels t"));
    if (it == t_index.end())
      throw Error(Err::SplitMismatch, "label references an unknown scenario timestamp");
    ScenarioLabel& lab = ls.labels[it->second];
    int bus = net.require_bus(row.at(c_bus));
    int ph = 0;
    if (three_phase && c_ph >= 0 && !row.at(c_ph).empty()) {
      char c = row.at(c_ph)[0];
      ph = c == 'a' ? 0 : (c == 'b' ? 1 : 2);
    }
    const std::string& st = row.at(c_st);
    if (st == "inexact") {
      lab.status = conic::Status::Optimal;
      lab.inexact = true;
    } else if (st != "optimal") {
      lab.status = conic::Status::NumericalBreakdown;
    }
    lab.max_gap = parse_double(row.at(c_gap), "labels gap");
    lab.objective = parse_double(row.at(c_obj), "labels objective");
    auto put = [&](bool is_q, double v) {
      auto cit = ch_index.find({bus, ph, is_q});
      if (cit != ch_index.end()) lab.u(cit->second) = v;
    };
    put(false, parse_double(row.at(c_up), "labels u_p"));
    put(true, parse_double(row.at(c_uq), "labels u_q"));
  }
  return ls;
}

}  // namespace dopf
