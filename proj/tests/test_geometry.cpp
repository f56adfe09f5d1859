#include <catch_amalgamated.hpp>
#include <Eigen/Geometry>
#include <random>

#include "diffks/geometry.hpp"

using namespace diffks;
using Catch::Approx;

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64 &rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("parse_moldesc reads records in order", "[geometry]") {
  const auto atoms = parse_moldesc("H 0 0 0; H 0 0 1.4");
  REQUIRE(atoms.size() == 2);
  CHECK(atoms[0].atomic_number == 1);
  CHECK(atoms[1].atomic_number == 1);
  CHECK(atoms[0].position == Vec3(0, 0, 0));
  CHECK(atoms[1].position == Vec3(0, 0, 1.4));

  const auto he = parse_moldesc("He 0 0 0");
  REQUIRE(he.size() == 1);
  CHECK(he[0].atomic_number == 2);
}

TEST_CASE("parse_moldesc tolerates whitespace and case", "[geometry]") {
  const auto atoms = parse_moldesc("  cl 1 -2 3.5 ;\n\tAR  0  0 +1e-1 ; ");
  REQUIRE(atoms.size() == 2);
  CHECK(atoms[0].atomic_number == 17);
  CHECK(atoms[1].atomic_number == 18);
  CHECK(atoms[1].position.z() == 0.1);
}

TEST_CASE("parse_moldesc errors", "[geometry]") {
  CHECK_THROWS_AS(parse_moldesc("Xx 0 0 0"), InputError);
  CHECK_THROWS_WITH(parse_moldesc("Xx 0 0 0"), Catch::Matchers::ContainsSubstring("unknown element"));
  CHECK_THROWS_AS(parse_moldesc("H 0 0 zero"), InputError);
  CHECK_THROWS_AS(parse_moldesc("H 0 0"), InputError);
  CHECK_THROWS_AS(parse_moldesc("H 0 0 nan"), InputError);
  CHECK_THROWS_AS(parse_moldesc(""), InputError);
  CHECK_THROWS_AS(parse_moldesc(" ; ;"), InputError);
  CHECK_THROWS_AS(parse_moldesc("K 0 0 0"), InputError);
}

TEST_CASE("molecule charge and spin validation", "[geometry]") {
  CHECK_NOTHROW(make_molecule("H 0 0 0", 0, 1));
  CHECK_NOTHROW(make_molecule("H 0 0 0", 1, 0));
  CHECK_THROWS_AS(make_molecule("H 0 0 0", 0, 0), InputError);
  CHECK_THROWS_AS(make_molecule("H 0 0 0", 0, 3), InputError);
  CHECK_THROWS_AS(make_molecule("H 0 0 0", 2, 0), InputError);
  const auto li = make_molecule("Li 0 0 0", 0, 1);
  CHECK(li.n_up() == 2);
  CHECK(li.n_dn() == 1);
}

TEST_CASE("nuclear repulsion closed forms", "[geometry]") {
  CHECK(nuclear_repulsion(make_molecule("H 0 0 0; H 0 0 1.4")) == Approx(1.0 / 1.4).epsilon(1e-15));
  CHECK(nuclear_repulsion(make_molecule("He 0 0 0")) == 0.0);
  CHECK(nuclear_repulsion(make_molecule("He 0 0 0; H 0 0 1.4632", 1, 0)) ==
        Approx(2.0 / 1.4632).epsilon(1e-15));
  CHECK_THROWS_AS(nuclear_repulsion(make_molecule("H 0 0 0; H 0 0 0")), InputError);
}

TEST_CASE("nuclear repulsion is invariant under rigid motion", "[geometry]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> z(1, kMaxZ);
  for (int trial = 0; trial < 50; ++trial) {
    Molecule mol;
    const int n = 2 + trial % 5;
    for (int i = 0; i < n; ++i) mol.atoms.push_back({z(rng), Vec3(u(rng), u(rng), u(rng))});
    const double e0 = nuclear_repulsion(mol);
    const auto rot = random_rotation(rng);
    const Vec3 shift(u(rng), u(rng), u(rng));
    Molecule moved = mol;
    for (auto &a : moved.atoms) a.position = rot * a.position + shift;
    CHECK(std::abs(nuclear_repulsion(moved) - e0) <= 1e-12 * std::abs(e0));
  }
}

TEST_CASE("format_moldesc round-trips through parse_moldesc", "[geometry]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_int_distribution<int> z(1, kMaxZ);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Atom> atoms;
    for (int i = 0; i < 1 + trial % 6; ++i) atoms.push_back({z(rng), Vec3(u(rng), u(rng), u(rng))});
    CHECK(parse_moldesc(format_moldesc(atoms)) == atoms);
  }
}
