#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dopf/feeder_io.hpp"
#include "dopf/lindist.hpp"
#include "dopf/powerflow.hpp"
#include "dopf/scenario_io.hpp"

using namespace dopf;
using Eigen::VectorXd;

namespace {

const std::string kFx = DOPF_FIXTURES;

Network load_fixture(const std::string& name) {
  return parse_network(kFx + "/" + name + "/buses.csv", kFx + "/" + name + "/branches.csv",
                       kFx + "/" + name + "/feeder.json");
}

// independent scalar fixed-point oracle for one branch (Eqs. of the branch
// flow model specialized to two buses)
double two_bus_oracle(double r, double x, double p, double q, double y0) {
  double ell = 0, y1 = y0, P = p, Q = q;
  for (int i = 0; i < 200; ++i) {
    P = p + r * ell;
    Q = q + x * ell;
    double ell_new = (P * P + Q * Q) / y0;
    double y1_new = y0 - 2 * (r * P + x * Q) + (r * r + x * x) * ell_new;
    double d = std::max(std::abs(ell_new - ell), std::abs(y1_new - y1));
    ell = ell_new;
    y1 = y1_new;
    if (d < 1e-16) break;
  }
  return y1;
}

std::vector<Eigen::Vector3cd> nominal_demand(const Network& net) {
  auto res = ingest(kFx + "/ieee13/nominal.csv", net);
  std::vector<Eigen::Vector3cd> d(net.buses.size(), Eigen::Vector3cd::Zero());
  const Scenario& sc = res.set.scenarios[0];
  for (size_t b = 0; b < net.buses.size(); ++b)
    net.buses[b].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      d[b](k) = {sc.d[b][k].p_c - sc.d[b][k].p_g, sc.d[b][k].q_c};
    });
  return d;
}

}  // namespace

TEST_CASE("distflow no-load solution is flat") {
  Network net = load_fixture("case1");
  int nb = static_cast<int>(net.buses.size());
  auto pf = solve_distflow(net, VectorXd::Zero(nb), VectorXd::Zero(nb), 1.0);
  for (int b = 0; b < nb; ++b) CHECK(pf.y1(b) == Catch::Approx(1.0).margin(1e-12));
  for (size_t e = 0; e < net.branches.size(); ++e) {
    CHECK(std::abs(pf.ell[e]) < 1e-12);
    CHECK(std::abs(pf.branch_p[e](0)) < 1e-12);
    CHECK(std::abs(pf.branch_q[e](0)) < 1e-12);
  }
}

TEST_CASE("two-bus distflow matches the scalar fixed-point oracle") {
  Network net = load_fixture("2bus");
  VectorXd p(2), q(2);
  p << 0, 0.1;
  q << 0, 0.05;
  auto pf = solve_distflow(net, p, q, 1.0);
  double oracle = two_bus_oracle(0.01, 0.02, 0.1, 0.05, 1.0);
  CHECK(pf.y1(1) == Catch::Approx(oracle).epsilon(1e-10));
  CHECK(pf.y1(1) < 1.0);
  // frozen oracle value
  CHECK(oracle == Catch::Approx(0.9959937248600629).epsilon(1e-12));
}

TEST_CASE("converged distflow satisfies the current-magnitude equation") {
  Network net = load_fixture("case1");
  int nb = static_cast<int>(net.buses.size());
  std::mt19937_64 rng(5);
  VectorXd p(nb), q(nb);
  for (int b = 0; b < nb; ++b) {
    p(b) = b == net.slack ? 0.0 : 0.03 * (rng() % 100) / 100.0;
    q(b) = 0.4 * p(b);
  }
  auto pf = solve_distflow(net, p, q, 1.0);
  CHECK(pf.residual <= 1e-9);
  for (size_t e = 0; e < net.branches.size(); ++e) {
    double pe = pf.branch_p[e](0), qe = pf.branch_q[e](0);
    double lhs = pf.ell[e] - (pe * pe + qe * qe) / pf.y1(net.branches[e].from);
    CHECK(std::abs(lhs) <= 1e-9);
  }
}

TEST_CASE("distflow energy balance over the tree") {
  Network net = load_fixture("case1");
  int nb = static_cast<int>(net.buses.size());
  VectorXd p = VectorXd::Constant(nb, 0.02), q = VectorXd::Constant(nb, 0.008);
  p(net.slack) = q(net.slack) = 0;
  auto pf = solve_distflow(net, p, q, 1.0);
  double sub = 0;
  for (int e : net.children[net.slack]) sub += pf.branch_p[e](0);
  double loads = p.sum();
  double losses = 0;
  for (size_t e = 0; e < net.branches.size(); ++e)
    losses += net.branches[e].r1() * pf.ell[e];
  CHECK(std::abs(sub - loads - losses) <= 1e-8);
}

TEST_CASE("distflow reports no convergence in a collapse regime") {
  Network net = load_fixture("2bus");
  VectorXd p(2), q(2);
  p << 0, 30.0;  // far beyond the deliverable power
  q << 0, 10.0;
  CHECK_THROWS_WITH(solve_distflow(net, p, q, 1.0),
                    Catch::Matchers::ContainsSubstring("NoConvergence"));
}

TEST_CASE("balanced three-phase case stays balanced") {
  // one 3-phase line with diagonal equal impedances and equal loads
  Network net;
  Bus s;
  s.id = "s";
  s.kinds = {BusKind::Slack};
  s.phases = PhaseSet::all();
  Bus l;
  l.id = "l";
  l.kinds = {BusKind::PQLoad};
  l.phases = PhaseSet::all();
  net.buses = {s, l};
  Branch br;
  br.from = 0;
  br.to = 1;
  br.phases = PhaseSet::all();
  br.z.setZero();
  for (int k = 0; k < 3; ++k) br.z(k, k) = {0.01, 0.02};
  net.branches = {br};
  net.finalize();

  std::vector<Eigen::Vector3cd> d(2, Eigen::Vector3cd::Zero());
  std::vector<Eigen::Vector3cd> u(2, Eigen::Vector3cd::Zero());
  for (int k = 0; k < 3; ++k) d[1](k) = {0.05, 0.02};
  auto pf = solve_3ph(net, d, u, 1.0);
  double spread = std::max({pf.y[1](0), pf.y[1](1), pf.y[1](2)}) -
                  std::min({pf.y[1](0), pf.y[1](1), pf.y[1](2)});
  CHECK(spread <= 1e-9);
  CHECK(pf.y[1](0) < 1.0);
}

TEST_CASE("three-phase solver agrees with distflow on a single-phase network") {
  Network net = load_fixture("2bus");
  VectorXd p(2), q(2);
  p << 0, 0.1;
  q << 0, 0.05;
  auto pf1 = solve_distflow(net, p, q, 1.0);

  std::vector<Eigen::Vector3cd> d(2, Eigen::Vector3cd::Zero());
  std::vector<Eigen::Vector3cd> u(2, Eigen::Vector3cd::Zero());
  d[1](0) = {0.1, 0.05};
  auto pf3 = solve_3ph(net, d, u, 1.0);
  CHECK(std::abs(pf3.y[1](0) - pf1.y1(1)) <= 1e-9);
}

TEST_CASE("ieee13 nominal three-phase flow converges in band") {
  Network net = load_fixture("ieee13");
  auto d = nominal_demand(net);
  std::vector<Eigen::Vector3cd> u(net.buses.size(), Eigen::Vector3cd::Zero());
  auto pf = solve_3ph(net, d, u, 1.05 * 1.05);
  CHECK(pf.iterations <= 50);
  for (size_t b = 0; b < net.buses.size(); ++b)
    net.buses[b].phases.for_each([&](Phase p) {
      double y = pf.y[b](phase_index(p));
      CHECK(y > 0.8);
      CHECK(y < 1.25);
    });
}

TEST_CASE("lindist matrices: diagonal impedance") {
  Branch br;
  br.phases = PhaseSet::all();
  br.z.setZero();
  br.z(0, 0) = {0.02, 0.05};
  br.z(1, 1) = {0.03, 0.06};
  br.z(2, 2) = {0.04, 0.07};
  auto mats = build_lindist_mats(br);
  for (int i = 0; i < 3; ++i) {
    CHECK(2 * mats.M(i, i) == Catch::Approx(2 * br.z(i, i).real()));
    CHECK(2 * mats.N(i, i) == Catch::Approx(-2 * br.z(i, i).imag()));
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        CHECK(mats.M(i, j) == 0.0);
        CHECK(mats.N(i, j) == 0.0);
      }
  }
}

TEST_CASE("lindist matrices: mutual entry formula") {
  Branch br;
  br.phases = PhaseSet::all();
  br.z.setZero();
  for (int k = 0; k < 3; ++k) br.z(k, k) = {0.1, 0.2};
  br.z(0, 1) = br.z(1, 0) = {0.05, 0.1};
  auto mats = build_lindist_mats(br);
  CHECK(2 * mats.M(0, 1) == Catch::Approx(-0.05 + std::sqrt(3.0) * 0.1));
  CHECK(2 * mats.N(0, 1) == Catch::Approx(0.1 + std::sqrt(3.0) * 0.05));
}

TEST_CASE("lindist matrices match the entrywise expansion on random impedances") {
  // oracle: the published entrywise 2M / 2N formulas
  std::mt19937_64 rng(11);
  auto rnd = [&] { return 0.02 + 0.1 * (rng() % 1000) / 1000.0; };
  for (int trial = 0; trial < 20; ++trial) {
    Branch br;
    br.phases = PhaseSet::all();
    Eigen::Matrix3d R, X;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        R(i, j) = R(j, i) = rnd();
        X(i, j) = X(j, i) = rnd();
      }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) br.z(i, j) = {R(i, j), X(i, j)};
    auto mats = build_lindist_mats(br);
    const double s3 = std::sqrt(3.0);
    Eigen::Matrix3d twoM, twoN;
    twoM << 2 * R(0, 0), -R(0, 1) + s3 * X(0, 1), -R(0, 2) - s3 * X(0, 2),
        -R(1, 0) - s3 * X(1, 0), 2 * R(1, 1), -R(1, 2) + s3 * X(1, 2),
        -R(2, 0) + s3 * X(2, 0), -R(2, 1) - s3 * X(2, 1), 2 * R(2, 2);
    twoN << -2 * X(0, 0), X(0, 1) + s3 * R(0, 1), X(0, 2) - s3 * R(0, 2),
        X(1, 0) - s3 * R(1, 0), -2 * X(1, 1), X(1, 2) + s3 * R(1, 2),
        X(2, 0) + s3 * R(2, 0), X(2, 1) - s3 * R(2, 1), -2 * X(2, 2);
    CHECK((2 * mats.M - twoM).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((2 * mats.N - twoN).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("lindist3flow no-load solution is flat") {
  Network net = load_fixture("ieee13");
  for (auto& b : net.buses) b.shunt_c = {0, 0, 0};  // nothing injecting at all
  std::vector<Eigen::Vector3cd> d(net.buses.size(), Eigen::Vector3cd::Zero());
  auto pf = eval_lindist3flow(net, d, d, 1.0);
  for (size_t b = 0; b < net.buses.size(); ++b)
    net.buses[b].phases.for_each(
        [&](Phase p) { CHECK(pf.y[b](phase_index(p)) == Catch::Approx(1.0).margin(1e-12)); });
  int b675 = net.require_bus("675");
  CHECK(pf.theta[b675](0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(pf.theta[b675](1) == Catch::Approx(-2 * std::numbers::pi / 3).margin(1e-12));
  CHECK(pf.theta[b675](2) == Catch::Approx(2 * std::numbers::pi / 3).margin(1e-12));
}

TEST_CASE("lindist3flow magnitude drop is exact on one branch") {
  Network net = load_fixture("2bus");
  std::vector<Eigen::Vector3cd> d(2, Eigen::Vector3cd::Zero());
  std::vector<Eigen::Vector3cd> u(2, Eigen::Vector3cd::Zero());
  d[1](0) = {0.1, 0.05};
  auto pf = eval_lindist3flow(net, d, u, 1.0);
  auto mats = build_lindist_mats(net.branches[0]);
  double rhs = 2 * (mats.M(0, 0) * 0.1 - mats.N(0, 0) * 0.05);
  CHECK(1.0 - pf.y[1](0) == Catch::Approx(rhs).margin(1e-15));
}

TEST_CASE("lindist3flow tracks the nonlinear solution on ieee13") {
  Network net = load_fixture("ieee13");
  auto d = nominal_demand(net);
  std::vector<Eigen::Vector3cd> u(net.buses.size(), Eigen::Vector3cd::Zero());
  double y0 = 1.05 * 1.05;
  auto nl = solve_3ph(net, d, u, y0);
  auto lin = eval_lindist3flow(net, d, u, y0);
  double err = 0;
  for (size_t b = 0; b < net.buses.size(); ++b)
    net.buses[b].phases.for_each([&](Phase p) {
      err = std::max(err, std::abs(lin.y[b](phase_index(p)) - nl.y[b](phase_index(p))));
    });
  CHECK(err <= 0.02);
}

TEST_CASE("lindist3flow error is second order in loading") {
  Network net = load_fixture("ieee13");
  auto d = nominal_demand(net);
  std::vector<Eigen::Vector3cd> u(net.buses.size(), Eigen::Vector3cd::Zero());
  double y0 = 1.05 * 1.05;
  // scale every injection source, capacitor banks included
  auto err_at = [&](double scale) {
    Network scaled = net;
    for (auto& b : scaled.buses)
      for (double& c : b.shunt_c) c *= scale;
    auto ds = d;
    for (auto& v : ds) v *= scale;
    auto nl = solve_3ph(scaled, ds, u, y0);
    auto lin = eval_lindist3flow(scaled, ds, u, y0);
    double err = 0;
    for (size_t b = 0; b < net.buses.size(); ++b)
      net.buses[b].phases.for_each([&](Phase p) {
        err = std::max(err, std::abs(lin.y[b](phase_index(p)) - nl.y[b](phase_index(p))));
      });
    return err;
  };
  double full = err_at(1.0);
  double tenth = err_at(0.1);
  CHECK(full / tenth >= 50.0);
}

TEST_CASE("lindist3flow is linear in loads and controls when beta_z = 0") {
  Network net = load_fixture("case1");  // all constant-power buses
  size_t nb = net.buses.size();
  std::mt19937_64 rng(3);
  auto rnd = [&] { return 0.02 * (rng() % 1000) / 1000.0; };
  std::vector<Eigen::Vector3cd> d1(nb, Eigen::Vector3cd::Zero()),
      d2(nb, Eigen::Vector3cd::Zero()), dsum(nb, Eigen::Vector3cd::Zero()),
      zero(nb, Eigen::Vector3cd::Zero());
  for (size_t b = 0; b < nb; ++b) {
    if (static_cast<int>(b) == net.slack) continue;
    d1[b](0) = {rnd(), rnd() / 3};
    d2[b](0) = {rnd(), rnd() / 3};
    dsum[b] = d1[b] + d2[b];
  }
  auto f1 = eval_lindist3flow(net, d1, zero, 1.0);
  auto f2 = eval_lindist3flow(net, d2, zero, 1.0);
  auto fs = eval_lindist3flow(net, dsum, zero, 1.0);
  for (size_t b = 0; b < nb; ++b) {
    double lhs = fs.y[b](0) - 1.0;
    double rhs = (f1.y[b](0) - 1.0) + (f2.y[b](0) - 1.0);
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("hmn diagnostic") {
  Network net = load_fixture("ieee13");
  auto d = nominal_demand(net);
  std::vector<Eigen::Vector3cd> u(net.buses.size(), Eigen::Vector3cd::Zero());
  double y0 = 1.05 * 1.05;

  SECTION("zero on a dead branch") {
    Network quiet = net;
    for (auto& b : quiet.buses) b.shunt_c = {0, 0, 0};
    std::vector<Eigen::Vector3cd> zero(quiet.buses.size(), Eigen::Vector3cd::Zero());
    auto pf = solve_3ph(quiet, zero, u, y0);
    for (size_t e = 0; e < quiet.branches.size(); ++e)
      CHECK(hmn_diagnostic(quiet, pf, static_cast<int>(e)).maxCoeff() <= 1e-18);
  }
  SECTION("negligible against the linear drop terms at nominal load") {
    auto pf = solve_3ph(net, d, u, y0);
    double max_h = 0, max_drop = 0;
    for (size_t e = 0; e < net.branches.size(); ++e) {
      auto h = hmn_diagnostic(net, pf, static_cast<int>(e));
      auto mats = build_lindist_mats(net.branches[e]);
      Eigen::Vector3d drop =
          2 * mats.M * pf.branch_p[e] - 2 * mats.N * pf.branch_q[e];
      max_h = std::max(max_h, h.cwiseAbs().maxCoeff());
      max_drop = std::max(max_drop, drop.cwiseAbs().maxCoeff());
    }
    CHECK(max_h / max_drop < 0.05);
  }
  SECTION("grows quadratically with loading") {
    auto pf1 = solve_3ph(net, d, u, y0);
    auto d2v = d;
    for (auto& v : d2v) v *= 2.0;
    auto pf2 = solve_3ph(net, d2v, u, y0);
    int e = net.parent_branch[net.require_bus("671")];
    double h1 = hmn_diagnostic(net, pf1, e).maxCoeff();
    double h2 = hmn_diagnostic(net, pf2, e).maxCoeff();
    CHECK(h2 / h1 >= 3.5);
  }
}
