#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "dopf/feeder_io.hpp"
#include "dopf/network.hpp"

using namespace dopf;
namespace fs = std::filesystem;

namespace {

const std::string kFx = DOPF_FIXTURES;

Network load_fixture(const std::string& name) {
  return parse_network(kFx + "/" + name + "/buses.csv", kFx + "/" + name + "/branches.csv",
                       kFx + "/" + name + "/feeder.json");
}

struct TempFeeder {
  fs::path dir;
  TempFeeder(const std::string& buses, const std::string& branches,
             const std::string& feeder = R"({"slack":"b0"})") {
    dir = fs::temp_directory_path() / fs::path("dopf_feeder_" + std::to_string(counter()++));
    fs::create_directories(dir);
    write("buses.csv", buses);
    write("branches.csv", branches);
    write("feeder.json", feeder);
  }
  ~TempFeeder() { fs::remove_all(dir); }
  void write(const std::string& name, const std::string& text) {
    std::ofstream((dir / name).string()) << text;
  }
  Network parse() {
    return parse_network((dir / "buses.csv").string(), (dir / "branches.csv").string(),
                         (dir / "feeder.json").string());
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

const char* kTwoBusBuses =
    "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
    "b0,slack,a,none,,,1,0\n"
    "b1,pq_load,a,none,,,1,0\n";

bool same_network(const Network& a, const Network& b) {
  if (a.buses.size() != b.buses.size() || a.branches.size() != b.branches.size()) return false;
  for (size_t i = 0; i < a.buses.size(); ++i) {
    const Bus &x = a.buses[i], &y = b.buses[i];
    if (x.id != y.id || x.kinds != y.kinds || !(x.phases == y.phases)) return false;
    if (x.capacity.has_value() != y.capacity.has_value()) return false;
    for (int p = 0; p < 3; ++p)
      if (x.shunt_c[p] != y.shunt_c[p] || x.beta_s[p] != y.beta_s[p] ||
          x.beta_z[p] != y.beta_z[p])
        return false;
  }
  for (size_t e = 0; e < a.branches.size(); ++e) {
    const Branch &x = a.branches[e], &y = b.branches[e];
    if (a.buses[x.from].id != b.buses[y.from].id || a.buses[x.to].id != b.buses[y.to].id)
      return false;
    if ((x.z - y.z).cwiseAbs().maxCoeff() != 0) return false;
  }
  return a.s_base_kva == b.s_base_kva && a.v_base_kv == b.v_base_kv && a.y_min == b.y_min &&
         a.y_max == b.y_max && a.y_ref == b.y_ref;
}

}  // namespace

TEST_CASE("smallest legal feeder parses") {
  Network net = load_fixture("2bus");
  REQUIRE(net.buses.size() == 2);
  REQUIRE(net.branches.size() == 1);
  CHECK(net.branches[0].r1() == 0.01);
  CHECK(net.branches[0].x1() == 0.02);
  auto part = partition_state(net.buses[1]);
  CHECK(part.u.empty());
  CHECK(part.d == std::vector<std::string>{"p", "q"});
  CHECK(part.x_end == std::vector<std::string>{"V", "delta"});
}

TEST_CASE("ieee13 fixture parses with mixed phasing") {
  Network net = load_fixture("ieee13");
  REQUIRE(net.buses.size() == 13);
  REQUIRE(net.branches.size() == 12);
  CHECK_FALSE(net.single_phase());
  CHECK(net.buses[net.require_bus("611")].phases == PhaseSet::single(Phase::c));
  CHECK(net.buses[net.require_bus("684")].phases == PhaseSet::parse("ac"));
  CHECK(net.buses[net.require_bus("671")].phases == PhaseSet::all());
  int one = 0, two = 0, three = 0;
  for (const auto& br : net.branches) {
    int c = br.phases.count();
    one += c == 1;
    two += c == 2;
    three += c == 3;
  }
  CHECK(one >= 2);
  CHECK(two >= 2);
  CHECK(three >= 4);
  // mutual impedances present on the 601 line
  int e = net.parent_branch[net.require_bus("632")];
  CHECK(net.branches[e].z(0, 1).real() > 0);
}

TEST_CASE("branch phase outside endpoint phases is rejected") {
  TempFeeder tf(
      "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
      "b0,slack,abc,none,,,1,0\n"
      "b1,pq_load,ab,none,,,1,0\n",
      "from,to,phases,z_entries\n"
      "b0,b1,abc,aa:0.01:0.02;bb:0.01:0.02;cc:0.01:0.02\n");
  try {
    tf.parse();
    FAIL("expected PhaseMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Err::PhaseMismatch);
  }
}

TEST_CASE("parser rejects malformed feeders") {
  SECTION("duplicate bus id") {
    TempFeeder tf(
        "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
        "b0,slack,a,none,,,1,0\n"
        "b0,pq_load,a,none,,,1,0\n",
        "from,to,phases,z_entries\nb0,b0,a,aa:0.01:0.02\n");
    CHECK_THROWS_WITH(tf.parse(), Catch::Matchers::ContainsSubstring("DuplicateBusId"));
  }
  SECTION("missing slack") {
    TempFeeder tf(
        "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
        "b0,pq_load,a,none,,,1,0\n"
        "b1,pq_load,a,none,,,1,0\n",
        "from,to,phases,z_entries\nb0,b1,a,aa:0.01:0.02\n", "{}");
    CHECK_THROWS_WITH(tf.parse(), Catch::Matchers::ContainsSubstring("MissingSlack"));
  }
  SECTION("non-tree topology") {
    TempFeeder tf(
        "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
        "b0,slack,a,none,,,1,0\n"
        "b1,pq_load,a,none,,,1,0\n"
        "b2,pq_load,a,none,,,1,0\n",
        "from,to,phases,z_entries\n"
        "b0,b1,a,aa:0.01:0.02\n"
        "b1,b2,a,aa:0.01:0.02\n"
        "b2,b0,a,aa:0.01:0.02\n");
    CHECK_THROWS_WITH(tf.parse(), Catch::Matchers::ContainsSubstring("NonTreeTopology"));
  }
  SECTION("nonpositive resistance") {
    TempFeeder tf(kTwoBusBuses, "from,to,phases,z_entries\nb0,b1,a,aa:0:0.02\n");
    CHECK_THROWS_WITH(tf.parse(), Catch::Matchers::ContainsSubstring("NonPositiveResistance"));
  }
  SECTION("beta split must be convex") {
    TempFeeder tf(
        "id,kinds,phases,cap_model,cap_params,cap_q_phase,beta_s,beta_z\n"
        "b0,slack,a,none,,,1,0\n"
        "b1,pq_load,a,none,,,0.7,0.2\n",
        "from,to,phases,z_entries\nb0,b1,a,aa:0.01:0.02\n");
    CHECK_THROWS_AS(tf.parse(), Error);
  }
}

TEST_CASE("state partition follows the bus-type table") {
  Bus b;
  b.id = "x";
  b.phases = PhaseSet::single(Phase::a);

  SECTION("slack row") {
    b.kinds = {BusKind::Slack};
    auto part = partition_state(b);
    CHECK(part.u == std::vector<std::string>{"V"});
    CHECK(part.d == std::vector<std::string>{"delta"});
    CHECK(part.x_end == std::vector<std::string>{"p", "q"});
  }
  SECTION("pq load row") {
    b.kinds = {BusKind::PQLoad};
    auto part = partition_state(b);
    CHECK(part.u.empty());
    CHECK(part.d == std::vector<std::string>{"p", "q"});
  }
  SECTION("composite load + controllable generation splits the power symbols") {
    b.kinds = {BusKind::PQLoad, BusKind::PQGeneration};
    auto part = partition_state(b);
    CHECK(part.u == std::vector<std::string>{"p", "q"});
    CHECK(part.d == std::vector<std::string>{"p^c", "q^c"});
    CHECK(part.x_end == std::vector<std::string>{"V", "delta"});
  }
  SECTION("every basic kind partitions the four symbols") {
    for (BusKind k :
         {BusKind::Slack, BusKind::PQLoad, BusKind::PQGeneration, BusKind::PVGeneration}) {
      b.kinds = {k};
      auto part = partition_state(b);
      CHECK(part.u.size() + part.d.size() + part.x_end.size() == 4);
      for (const auto& s : part.u) {
        CHECK(std::find(part.d.begin(), part.d.end(), s) == part.d.end());
        CHECK(std::find(part.x_end.begin(), part.x_end.end(), s) == part.x_end.end());
      }
    }
  }
}

TEST_CASE("parsing is pure and round-trips") {
  Network a = load_fixture("ieee13");
  Network b = load_fixture("ieee13");
  CHECK(same_network(a, b));

  fs::path dir = fs::temp_directory_path() / "dopf_roundtrip";
  fs::remove_all(dir);
  write_network(a, dir.string());
  Network c = parse_network((dir / "buses.csv").string(), (dir / "branches.csv").string(),
                            (dir / "feeder.json").string());
  CHECK(same_network(a, c));
  fs::remove_all(dir);
}

TEST_CASE("capacity models parse and validate") {
  Network net = load_fixture("case1");
  int der = net.require_bus("n05");
  REQUIRE(net.buses[der].capacity.has_value());
  CHECK(net.buses[der].capacity->kind == CapacityModel::Kind::PvResidual);
  CHECK(net.buses[der].capacity->s_max == 0.05);
  CHECK(net.controllable_buses().size() == 10);

  Network c2 = load_fixture("case2");
  CHECK(c2.controllable_buses().size() == 20);
  int d2 = c2.require_bus("n17");
  CHECK(c2.buses[d2].capacity->kind == CapacityModel::Kind::Box);
  CHECK(c2.buses[d2].capacity->p_max == 0.004);
}
