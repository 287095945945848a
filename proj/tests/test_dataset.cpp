#include <sstream>

#include "doctest.h"
#include "rdx/dataset.hpp"
#include "rdx/errors.hpp"
#include "test_util.hpp"

using namespace rdx;

namespace {

Dataset parse(const std::string& text, Design design = Design::Sharp, ColumnMap cols = {}) {
  std::istringstream in(text);
  return read_csv(in, cols, design);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected rdx::Error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("sharp load synthesizes d from the assignment rule") {
  auto ds = parse("y,x,c\n1.0,-900,-850\n2.0,-800,-850\n3.0,-600,-571\n");
  REQUIRE(ds.size() == 3);
  CHECK(ds.d(0) == 0);
  CHECK(ds.d(1) == 1);
  CHECK(ds.d(2) == 0);
}

TEST_CASE("cutoffs are sorted ascending and distinct") {
  auto ds = parse("y,x,c\n1,-600,-571\n2,-900,-850\n3,-500,-571\n");
  REQUIRE(ds.cutoffs().size() == 2);
  CHECK(ds.cutoffs()[0] == -850.0);
  CHECK(ds.cutoffs()[1] == -571.0);
}

TEST_CASE("row order is preserved") {
  auto ds = parse("y,x,c\n3,1,0\n1,-1,0\n2,2,0\n");
  CHECK(ds.y(0) == 3.0);
  CHECK(ds.y(1) == 1.0);
  CHECK(ds.y(2) == 2.0);
}

TEST_CASE("malformed numbers report the data row") {
  try {
    parse("y,x,c\n1,2,0\n1,abc,0\n");
    FAIL("should throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    REQUIRE(e.row().has_value());
    CHECK(*e.row() == 2);
  }
  CHECK(kind_of([] { parse("y,x,c\n,2,0\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse("y,x,c\nnan,2,0\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse("y,x,c\n1,2\n"); }) == ErrorKind::ParseError);
}

TEST_CASE("missing columns and sharp violations") {
  CHECK(kind_of([] { parse("y,score,c\n1,2,0\n"); }) == ErrorKind::MissingColumn);
  CHECK(kind_of([] { parse("y,x,c\n1,2,0\n", Design::Fuzzy); }) == ErrorKind::MissingColumn);
  try {
    parse("y,x,c,d\n1,2,0,1\n1,-2,0,1\n");
    FAIL("should throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SharpComplianceViolation);
    CHECK(*e.row() == 2);
  }
  // fuzzy accepts noncompliance
  auto ds = parse("y,x,c,d\n1,2,0,0\n1,-2,0,0\n", Design::Fuzzy);
  CHECK(ds.d(0) == 0);
}

TEST_CASE("column remapping and covariates") {
  ColumnMap cols;
  cols.y = "enroll";
  cols.x = "score";
  cols.c = "cut";
  cols.d = "";
  auto ds = parse("enroll,score,cut,z1,z2\n1,5,0,a,u\n0,-5,0,b,v\n", Design::Sharp, cols);
  REQUIRE(ds.has_covariates());
  CHECK(ds.covariate_names().size() == 2);
  CHECK(ds.cell_key(0) == "a|u");
  CHECK(ds.covariate_cells() == std::vector<std::string>{"a|u", "b|v"});
}

TEST_CASE("subset filters and partitions") {
  auto ds = testing::make_single(200, -1000, -1, -850, [](double x) { return x / 1000; }, 0.1, 3);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto o = ds.observation(i);
    if (i % 2) {
      o.c = -571;
      o.d = o.x >= o.c;
    }
    obs.push_back(o);
  }
  auto two = Dataset::from_observations(obs, Design::Sharp);

  std::size_t total = 0;
  for (double c : two.cutoffs())
    for (int d : {0, 1}) {
      RowFilter f;
      f.cutoff = c;
      f.treated = d;
      auto v = two.subset(f);
      total += v.size();
      for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v.c(i) == c);
        CHECK(v.d(i) == d);
      }
      // idempotence
      auto vv = v.subset(f);
      CHECK(vv.fingerprint() == v.fingerprint());
    }
  CHECK(total == two.size());

  RowFilter empty;
  empty.window = std::make_pair(-123.456, -123.456);
  CHECK(two.subset(empty).empty());

  RowFilter bad;
  bad.cutoff = 7.0;
  CHECK(kind_of([&] { two.subset(bad); }) == ErrorKind::UnknownCutoff);
}

TEST_CASE("views share storage") {
  auto ds = testing::make_single(50, 0, 1, 0.5, [](double x) { return x; }, 0.0, 1);
  RowFilter f;
  f.treated = 1;
  auto v = ds.subset(f);
  CHECK(v.storage_id() == ds.storage_id());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.x(i) >= 0.5);
}

TEST_CASE("csv round trip preserves every field") {
  auto ds = parse("y,x,c,z1\n0.1,-900.25,-850,a\n0.30000000000000004,-600,-571,\"b,c\"\n2,-500,-571,a\n");
  std::stringstream buf;
  write_csv(buf, ds);
  auto back = read_csv(buf, ColumnMap{}, Design::Sharp);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto a = ds.observation(i), b = back.observation(i);
    CHECK(a.y == b.y);
    CHECK(a.x == b.x);
    CHECK(a.c == b.c);
    CHECK(a.d == b.d);
    CHECK(a.z == b.z);
  }
  CHECK(back.cutoffs() == ds.cutoffs());
}

TEST_CASE("normalized recenters at each cutoff") {
  auto ds = parse("y,x,c\n1,-900,-850\n2,-500,-571\n");
  auto nd = ds.normalized();
  CHECK(nd.x(0) == -50.0);
  CHECK(nd.x(1) == 71.0);
  CHECK(nd.cutoffs() == std::vector<double>{0.0});
  CHECK(nd.d(1) == 1);
}
