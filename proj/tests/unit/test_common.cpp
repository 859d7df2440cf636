#include "doctest.h"

#include <set>

#include "flywheel/common.hpp"

using namespace flywheel;

TEST_CASE("domain box basics") {
  const auto b = DomainBox::unit(3);
  CHECK(b.dims() == 3);
  CHECK(b.contains(std::vector<double>{0.0, 0.5, 1.0}));
  CHECK_FALSE(b.contains(std::vector<double>{0.0, 0.5, 1.0001}));
  CHECK(b.volume() == doctest::Approx(1.0));
  CHECK(b.diagonal() == doctest::Approx(std::sqrt(3.0)));
  CHECK(b.clamp({-1.0, 0.3, 2.0}) == std::vector<double>{0.0, 0.3, 1.0});

  DomainBox bad{{0.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42), c(43);
  std::vector<double> xa, xb, xc;
  for (int i = 0; i < 100; ++i) {
    xa.push_back(a.uniform());
    xb.push_back(b.uniform());
    xc.push_back(c.uniform());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);
  for (double x : xa) CHECK((x >= 0.0 && x < 1.0));

  CHECK(Rng::derive(7, 1) != Rng::derive(7, 2));
  CHECK(Rng::derive(7, 1) == Rng::derive(7, 1));

  Rng d(5);
  for (int i = 0; i < 50; ++i) {
    const auto u = d.direction(3);
    CHECK(std::hypot(u[0], u[1], u[2]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.index(7) < 7);
  }
}

TEST_CASE("normal draws have roughly unit variance") {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("content hash is FNV-1a") {
  // Published FNV-1a 64 test vectors.
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("median and quantile") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(quantile({0.0, 10.0}, 0.25) == doctest::Approx(2.5));
  CHECK(quantile({5.0, 1.0, 3.0}, 0.0) == 1.0);
  CHECK(quantile({5.0, 1.0, 3.0}, 1.0) == 5.0);
}

TEST_CASE("distance") {
  CHECK(distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == 5.0);
  CHECK(distance(StateVec({1.0, 1.0}), StateVec({1.0, 1.0})) == 0.0);
}

TEST_CASE("fail carries its code") {
  try {
    fail(ErrorCode::conflict, "x");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
    CHECK(std::string(to_string(e.code())) == "conflict");
  }
}
