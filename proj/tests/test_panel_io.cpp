#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockcov/errors.hpp"
#include "blockcov/panel_io.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <fstream>

using namespace blockcov;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("write_panel then load_returns reproduces every value") {
  const auto dir = testing::temp_dir("panel_roundtrip");
  ReturnPanel panel = ReturnPanel::from_matrix(testing::gaussian(4, 7, 1) * 0.01);
  panel.values(2, 3) = 1.0 / 3.0;
  write_panel(panel, dir / "r.csv");
  const ReturnPanel back = load_returns(dir / "r.csv");
  CHECK(back.assets == panel.assets);
  CHECK(back.times == panel.times);
  CHECK(back.values == panel.values);
}

TEST_CASE("load_returns reads the wide layout") {
  const auto dir = testing::temp_dir("panel_wide");
  write_text(dir / "r.csv", "date,AAA,BBB\n2020-01-01,0.01,-0.02\n2020-01-02,0.5,0\n2020-01-03,1e-3,2\n");
  const ReturnPanel p = load_returns(dir / "r.csv");
  CHECK(p.p() == 2);
  CHECK(p.T() == 3);
  CHECK(p.assets[1] == "BBB");
  CHECK(p.times[2] == "2020-01-03");
  CHECK(p.values(0, 2) == doctest::Approx(1e-3));
  CHECK(p.values(1, 0) == doctest::Approx(-0.02));
}

TEST_CASE("load_returns rejects malformed files") {
  const auto dir = testing::temp_dir("panel_bad");
  write_text(dir / "ragged.csv", "date,A,B\nt1,1,2\nt2,1\nt3,1,2\n");
  CHECK_THROWS_AS(load_returns(dir / "ragged.csv"), DataError);
  write_text(dir / "dup.csv", "date,A,A\nt1,1,2\nt2,1,2\nt3,1,2\n");
  CHECK_THROWS_AS(load_returns(dir / "dup.csv"), DataError);
  write_text(dir / "nan.csv", "date,A,B\nt1,1,2\nt2,x,2\nt3,1,2\n");
  try {
    load_returns(dir / "nan.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
  write_text(dir / "short.csv", "date,A,B\nt1,1,2\nt2,1,2\n");
  CHECK_THROWS_AS(load_returns(dir / "short.csv"), DataError);
  CHECK_THROWS_AS(load_returns(dir / "missing.csv"), DataError);
}

TEST_CASE("ReturnPanel::validate enforces the shape contract") {
  ReturnPanel one = ReturnPanel::from_matrix(Matrix::Ones(1, 5));
  CHECK_THROWS_AS(one.validate(), DataError);
  ReturnPanel ok = ReturnPanel::from_matrix(testing::gaussian(3, 5, 2));
  CHECK_NOTHROW(ok.validate());
  ok.values(0, 0) = std::nan("");
  CHECK_THROWS_AS(ok.validate(), DataError);
}

TEST_CASE("slice_time and select_assets keep labels aligned") {
  const ReturnPanel p = ReturnPanel::from_matrix(testing::gaussian(4, 6, 3));
  const ReturnPanel s = p.slice_time(2, 3);
  CHECK(s.T() == 3);
  CHECK(s.times.front() == p.times[2]);
  CHECK(s.values(1, 0) == p.values(1, 2));
  const ReturnPanel a = p.select_assets({3, 1});
  CHECK(a.assets == std::vector<std::string>{p.assets[3], p.assets[1]});
  CHECK(a.values.row(0) == p.values.row(3));
  CHECK_THROWS_AS(p.slice_time(5, 2), DataError);
}

TEST_CASE("load_classification accepts an optional header") {
  const auto dir = testing::temp_dir("classes");
  write_text(dir / "with.csv", "asset,code\nA,10\nB,20\n");
  write_text(dir / "without.csv", "A,10\nB,20\n");
  const auto a = load_classification(dir / "with.csv");
  const auto b = load_classification(dir / "without.csv");
  CHECK(a == b);
  CHECK(a.at("B") == "20");
  write_text(dir / "bad.csv", "A,10,3\n");
  CHECK_THROWS_AS(load_classification(dir / "bad.csv"), DataError);
}

TEST_CASE("load_marketcaps stores missing cells as NaN") {
  const auto dir = testing::temp_dir("caps");
  write_text(dir / "caps.csv", "date,A,B,C\nt1,10,,NA\nt2,11,5,nan\n");
  const MarketCapPanel caps = load_marketcaps(dir / "caps.csv");
  CHECK(caps.assets.size() == 3);
  CHECK(caps.values(0, 0) == 10.0);
  CHECK(std::isnan(caps.values(1, 0)));
  CHECK(std::isnan(caps.values(2, 1)));
  CHECK(caps.values(1, 1) == 5.0);
}

TEST_CASE("select_universe applies the filters then ranks by cap") {
  Matrix v(5, 6);
  v << 0.1, 0.2, 0.1, 0.3, 0.1, 0.2,  //
      0.0, 0.0, 0.0, 0.0, 0.1, 0.2,   // all zero in train
      0.1, 0.1, 0.2, 0.1, 0.2, 0.1,   //
      0.2, 0.1, 0.2, 0.1, 0.0, 0.0,   // all zero in test
      0.3, 0.1, 0.1, 0.2, 0.1, 0.3;
  ReturnPanel panel = ReturnPanel::from_matrix(v);
  ClassificationMap classes = {{"A0001", "x"}, {"A0002", "x"}, {"A0003", "y"}, {"A0004", "y"}, {"A0005", "z"}};
  std::map<std::string, double> caps = {{"A0001", 7.0}, {"A0002", 100.0}, {"A0003", 7.0},
                                        {"A0004", 100.0}, {"A0005", 7.0}};
  // Three survivors tie on cap; the smaller identifiers win.
  const ReturnPanel u = select_universe(panel, caps, classes, 2, 4, 2);
  CHECK(u.assets == std::vector<std::string>{"A0001", "A0003"});
  const ReturnPanel u3 = select_universe(panel, caps, classes, 3, 4, 2);
  CHECK(u3.assets == std::vector<std::string>{"A0001", "A0003", "A0005"});

  classes.erase("A0005");
  const ReturnPanel u2 = select_universe(panel, caps, classes, 2, 4, 2);
  CHECK(u2.assets == std::vector<std::string>{"A0001", "A0003"});
  caps["A0001"] = std::nan("");
  CHECK_THROWS_AS(select_universe(panel, caps, classes, 2, 4, 2), DataError);
}

TEST_CASE("Report JSON round trip and validation") {
  Report r;
  r.tag = "SIMULATION";
  r.hyperparameters["p"] = 10;
  r.metrics["CSH.f1.mean"] = 0.5;
  Report child;
  child.tag = "CSH";
  child.metrics["K"] = 3;
  r.children.push_back(child);
  const auto j = r.to_json();
  const Report back = Report::from_json(j);
  CHECK(back.to_json() == j);

  const auto dir = testing::temp_dir("report");
  write_report(r, dir / "r.json");
  CHECK(read_report(dir / "r.json").to_json() == j);

  Report bad;
  bad.tag = "NOPE";
  CHECK_THROWS_AS(bad.validate(), DataError);
  Report nonfinite;
  nonfinite.tag = "CSK";
  nonfinite.metrics["x"] = std::nan("");
  CHECK_THROWS_AS(nonfinite.validate(), DataError);
  CHECK(is_valid_report_tag("BACKTEST"));
}
