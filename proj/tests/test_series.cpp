#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "domino/errors.hpp"
#include "domino/series.hpp"

using namespace domino;
using namespace domino::series;

namespace {

SyntheticSpec quiet_spec() {
  SyntheticSpec s;
  s.noise_std = 0.0;
  s.amplitude_jitter = 0.0;
  s.phase_jitter = 0.0;
  return s;
}

Dataset small_dataset(std::size_t count = 5, std::size_t n = 12, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.seed = seed;
  return generate_synthetic(s, make_grid(0.0, 1.0, n), count);
}

}  // namespace

TEST_CASE("make_grid") {
  const auto g = make_grid(0.0, 1.0, 3);
  CHECK(g.point(0) == 0.0);
  CHECK(g.point(1) == 1.0);
  CHECK(g.point(2) == 2.0);
  CHECK(make_grid(0.0, 0.5, 5).last() == 2.0);
  CHECK_THROWS_AS(make_grid(10.0, -1.0, 3), InvalidArgument);
  CHECK_THROWS_AS(make_grid(0.0, 0.0, 3), InvalidArgument);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 1), InvalidArgument);

  const Eigen::VectorXd p = make_grid(-2.0, 0.25, 9).points();
  for (Eigen::Index k = 1; k < p.size(); ++k) CHECK(p[k] > p[k - 1]);
}

TEST_CASE("grid slice and index_of") {
  const auto g = make_grid(1.0, 0.5, 10);
  const auto s = g.slice(3, 4);
  CHECK(s.size() == 4);
  CHECK(s.start() == g.point(3));
  CHECK(g.slice(9, 1).size() == 1);
  CHECK_THROWS_AS(g.slice(8, 3), InvalidArgument);
  CHECK(g.index_of(g.point(7)) == 7);
  CHECK(g.index_of(1.25) == -1);
  CHECK(g.index_of(100.0) == -1);
}

TEST_CASE("TimeSeries invariants") {
  const auto g = make_grid(0.0, 1.0, 3);
  CHECK_THROWS_AS(TimeSeries(0, g, Eigen::VectorXd::Zero(2)), InvalidArgument);
  Eigen::VectorXd bad(3);
  bad << 1.0, std::nan(""), 2.0;
  CHECK_THROWS_AS(TimeSeries(0, g, bad), InvalidArgument);
  bad[1] = INFINITY;
  CHECK_THROWS_AS(TimeSeries(0, g, bad), InvalidArgument);
}

TEST_CASE("Dataset invariants") {
  const auto g = make_grid(0.0, 1.0, 3);
  const TimeSeries a(0, g, Eigen::VectorXd::Zero(3));
  CHECK_THROWS_AS(Dataset({a}), InvalidArgument);
  const TimeSeries b(1, make_grid(0.0, 2.0, 3), Eigen::VectorXd::Zero(3));
  CHECK_THROWS_AS(Dataset({a, b}), InvalidArgument);
  const Dataset d({a, TimeSeries(7, g, Eigen::VectorXd::Ones(3))});
  CHECK(d.count() == 2);
  CHECK(d.find(7) == 1);
  CHECK(d.find(3) == -1);
}

TEST_CASE("generate_synthetic: deterministic linear case") {
  SyntheticSpec s = quiet_spec();
  s.periodic_components.clear();
  s.trend_slope = 2.0;
  s.trend_intercept = 1.0;
  const auto g = make_grid(0.0, 0.5, 20);
  const auto d = generate_synthetic(s, g, 3);
  for (const auto& ts : d.series())
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(ts.values[static_cast<Eigen::Index>(k)] == 1.0 + 2.0 * g.point(k));
}

TEST_CASE("generate_synthetic: pure sinusoid") {
  SyntheticSpec s = quiet_spec();
  s.trend_slope = 0.0;
  s.trend_intercept = 0.0;
  const auto g = make_grid(0.0, 1.0, 40);
  s.periodic_components = {{1.0, g.span(), 0.0}};
  const auto d = generate_synthetic(s, g, 2);
  CHECK(d[0].values[0] == 0.0);
  CHECK(d[0].values.maxCoeff() <= 1.0);
  CHECK(d[0].values.minCoeff() >= -1.0);
}

TEST_CASE("generate_synthetic: zero noise matches the closed form") {
  const SyntheticSpec s = quiet_spec();
  const auto g = make_grid(3.0, 0.7, 64);
  const auto d = generate_synthetic(s, g, 4);
  for (const auto& ts : d.series()) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = g.point(k);
      double y = s.trend_intercept + s.trend_slope * t;
      for (const auto& c : s.periodic_components)
        y += c.amplitude * std::sin(2.0 * std::numbers::pi * t / c.period + c.phase);
      CHECK(ts.values[static_cast<Eigen::Index>(k)] == doctest::Approx(y).epsilon(1e-14));
    }
  }
}

TEST_CASE("generate_synthetic: seeds and jitter") {
  const auto g = make_grid(0.0, 1.0, 30);
  SyntheticSpec s;
  s.seed = 11;
  const auto a = generate_synthetic(s, g, 4);
  const auto b = generate_synthetic(s, g, 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK((a[i].values.array() == b[i].values.array()).all());
  s.seed = 12;
  const auto c = generate_synthetic(s, g, 4);
  CHECK_FALSE((a[0].values.array() == c[0].values.array()).all());

  // Jitter alone makes individuals distinct.
  SyntheticSpec j = quiet_spec();
  j.amplitude_jitter = 0.1;
  j.phase_jitter = 0.2;
  const auto d = generate_synthetic(j, g, 3);
  CHECK_FALSE((d[0].values.array() == d[1].values.array()).all());
  CHECK((d[0].values - d[1].values).cwiseAbs().maxCoeff() < 10.0);
}

TEST_CASE("SyntheticSpec validation") {
  SyntheticSpec s;
  s.noise_std = -1.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SyntheticSpec{};
  s.periodic_components = {{1.0, 0.0, 0.0}};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  CHECK_THROWS_AS(generate_synthetic(SyntheticSpec{}, make_grid(0, 1, 5), 1), InvalidArgument);
}

TEST_CASE("split_holdout") {
  const auto d = small_dataset(5);
  const auto split = split_holdout(d, 2);
  CHECK(split.train.count() == 4);
  CHECK(split.train.find(d[2].id) == -1);
  CHECK(split.holdout.id == d[2].id);
  CHECK((split.holdout.values.array() == d[2].values.array()).all());

  std::multiset<std::int64_t> ids;
  for (const auto& s : split.train.series()) ids.insert(s.id);
  ids.insert(split.holdout.id);
  std::multiset<std::int64_t> orig;
  for (const auto& s : d.series()) orig.insert(s.id);
  CHECK(ids == orig);

  CHECK_THROWS_AS(split_holdout(small_dataset(2), 0), InvalidArgument);
  CHECK_THROWS_AS(split_holdout(d, 5), InvalidArgument);
}

TEST_CASE("split_query") {
  const auto d = small_dataset(3, 10);
  const auto q = split_query(d[0], 3);
  CHECK(q.observed.size() == 3);
  CHECK(q.target.size() == 7);
  CHECK(q.target.grid.start() == d[0].grid.point(3));
  Eigen::VectorXd joined(10);
  joined << q.observed.values, q.target.values;
  CHECK((joined.array() == d[0].values.array()).all());
  CHECK_THROWS_AS(split_query(d[0], 10), InvalidArgument);
  CHECK_THROWS_AS(split_query(d[0], 0), InvalidArgument);
  CHECK(split_query(d[0], 9).target.size() == 1);
}

TEST_CASE("dataset CSV round trip") {
  const auto d = small_dataset(3, 8);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const std::string text = ss.str();
  CHECK(text.rfind("series_id,t,y\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 1 + 3 * 8);

  const auto back = read_dataset_csv(ss);
  REQUIRE(back.count() == 3);
  CHECK(back.grid() == d.grid());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == d[i].id);
    CHECK((back[i].values.array() == d[i].values.array()).all());
  }
}

TEST_CASE("dataset CSV errors name the line") {
  auto parse_line = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_dataset_csv(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(parse_line("series_id,t,y\n0,0,1\n0,1,x\n1,0,1\n1,1,2\n") == 3);
  CHECK(parse_line("series_id,t,y\n0,0,1\n0,1\n") == 3);
  CHECK(parse_line("id,t,y\n") == 1);
  CHECK(parse_line("series_id,t,y\n0,0,1\n0,1,2\n1,0,1\n") > 0);  // ragged
  CHECK(parse_line("series_id,t,y\n0,1,1\n0,0,2\n1,0,1\n1,1,2\n") == 3);  // unsorted
}

TEST_CASE("read_points_csv") {
  std::istringstream a("t,y\n0,1.5\n1,2.5\n");
  const auto p = read_points_csv(a);
  CHECK(p.t == std::vector<double>{0.0, 1.0});
  CHECK(p.y == std::vector<double>{1.5, 2.5});
  std::istringstream b("series_id,t,y\n4,0,1\n4,1,2\n");
  CHECK(read_points_csv(b).y.size() == 2);
  std::istringstream c("series_id,t,y\n4,0,1\n5,1,2\n");
  CHECK_THROWS_AS(read_points_csv(c), ParseError);
  std::istringstream e("t,y\n");
  CHECK_THROWS_AS(read_points_csv(e), ParseError);
}
