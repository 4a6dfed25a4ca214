#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "metric_oracles.hpp"
#include "pamcurator/core/csv.hpp"
#include "pamcurator/metrics/metrics.hpp"

using namespace pam;
using namespace pam::metrics;
using Catch::Approx;

TEST_CASE("spec_at_sens simple cases", "[spec]") {
  const auto sep = spec_at_sens(std::vector<double>{0.9, 0.8, 0.7, 0.2, 0.1}, std::vector<int>{1, 1, 1, 0, 0}, 0.95);
  CHECK(*sep.row.value == 1.0);
  CHECK(sep.threshold == 0.7);
  const auto flat = spec_at_sens(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}, 0.95);
  CHECK(flat.sensitivity == 1.0);
  CHECK(*flat.row.value == 0.0);
  const auto none = spec_at_sens(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}, 0.95);
  CHECK(!none.row.defined());
  CHECK_THROWS_AS(spec_at_sens(std::vector<double>{0.1}, std::vector<int>{1}, 0.0), ArgumentError);
  CHECK_THROWS_AS(spec_at_sens(std::vector<double>{0.1}, std::vector<int>{1, 0}, 0.5), ArgumentError);
}

TEST_CASE("spec_at_sens matches the exhaustive sweep", "[spec]") {
  Rng rng(1);
  std::vector<double> s;
  std::vector<int> y;
  for (int trial = 0; trial < 1000; ++trial) {
    test::random_scores(rng, s, y);
    const double target = trial % 3 == 0 ? 0.95 : rng.uniform(0.01, 1.0);
    const auto got = spec_at_sens(s, y, target);
    const auto want = test::spec_at_sens_oracle(s, y, target);
    REQUIRE(got.row.defined() == want.defined);
    REQUIRE(*got.row.value == want.specificity);
    REQUIRE(got.threshold == want.threshold);
  }
}

TEST_CASE("spec_at_sens is a rank statistic", "[spec][property]") {
  Rng rng(2);
  std::vector<double> s;
  std::vector<int> y;
  for (int trial = 0; trial < 200; ++trial) {
    test::random_scores(rng, s, y);
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(2.0 * s[i]) + 5.0;
    REQUIRE(*spec_at_sens(s, y).row.value == *spec_at_sens(t, y).row.value);
  }
}

TEST_CASE("cohens_kappa examples", "[kappa]") {
  const std::vector<std::string> a{"P", "N", "P", "N", "N"};
  CHECK(*cohens_kappa(a, a).value == 1.0);
  CHECK(*cohens_kappa(std::vector<char>{'P', 'P', 'N', 'N'}, std::vector<char>{'N', 'N', 'P', 'P'}).value == -1.0);
  CHECK(!cohens_kappa(std::vector<int>{1, 1, 1}, std::vector<int>{1, 1, 1}).defined());
  CHECK_THROWS_AS(cohens_kappa(std::vector<int>{}, std::vector<int>{}), ArgumentError);
  // Reference value: 2x2 table [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5.
  std::vector<int> r1, r2;
  auto add = [&](int x, int y, int k) {
    for (int i = 0; i < k; ++i) {
      r1.push_back(x);
      r2.push_back(y);
    }
  };
  add(1, 1, 20);
  add(1, 0, 5);
  add(0, 1, 10);
  add(0, 0, 15);
  CHECK(*cohens_kappa(r1, r2).value == Approx(0.4));
}

TEST_CASE("cohens_kappa matches the confusion-table oracle", "[kappa]") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const int k = 1 + static_cast<int>(rng.below(5));
    const double agree = rng.uniform(0, 1);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      b[i] = rng.bernoulli(agree) ? a[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    const auto got = cohens_kappa(a, b);
    const auto want = test::kappa_oracle(a, b);
    REQUIRE(got.defined() == want.has_value());
    if (want) REQUIRE(*got.value == *want);
    // Symmetry and renaming.
    const auto swapped = cohens_kappa(b, a);
    REQUIRE(swapped.value == got.value);
    std::vector<int> ra(n), rb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ra[i] = 7 * (k - a[i]);
      rb[i] = 7 * (k - b[i]);
    }
    REQUIRE(cohens_kappa(ra, rb).value == got.value);
  }
}

TEST_CASE("cohens_kappa of independent raters is near zero", "[kappa]") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(10000), b(10000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.bernoulli(0.3);
      b[i] = rng.bernoulli(0.6);
    }
    CHECK(std::abs(*cohens_kappa(a, b).value) <= 0.05);
  }
}

TEST_CASE("mapped_top1 examples and oracle", "[top1]") {
  const std::vector<std::string> cls{"a", "b", "c"};
  const std::vector<std::string> t{"a", "b", "c", "a"};
  CHECK(*mapped_top1(t, t, identity_mapping(cls)).value == 1.0);
  // Test class "z" has no preimage: always wrong.
  const std::map<std::string, std::string> m{{"a", "z2"}, {"b", "z2"}, {"c", "unmapped"}};
  CHECK(*mapped_top1({"a", "b", "c"}, {"z", "z", "z"}, m).value == 0.0);
  CHECK(*mapped_top1({"a", "c"}, {"z2", "unmapped"}, m).value == 0.5);
  CHECK_THROWS_AS(mapped_top1({"q"}, {"a"}, m), ArgumentError);
  CHECK(!mapped_top1({}, {}, m).defined());

  Rng rng(5);
  const std::vector<std::string> train{"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9", "t10"};
  const std::vector<std::string> test{"e0", "e1", "e2", "e3"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<std::string, std::string> map;
    for (const auto& c : train) map[c] = rng.bernoulli(0.2) ? "unmapped" : test[rng.below(3)];  // e3 never mapped
    const std::size_t n = 1 + rng.below(500);
    std::vector<std::string> p(n), tr(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = train[rng.below(train.size())];
      tr[i] = test[rng.below(test.size())];
    }
    REQUIRE(*mapped_top1(p, tr, map).value == test::mapped_top1_oracle(p, tr, map));
    // Identity mapping equals plain top-1.
    std::vector<std::string> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = rng.bernoulli(0.5) ? p[i] : train[rng.below(train.size())];
    std::size_t plain = 0;
    for (std::size_t i = 0; i < n; ++i) plain += p[i] == q[i];
    REQUIRE(*mapped_top1(p, q, identity_mapping(train)).value == static_cast<double>(plain) / static_cast<double>(n));
  }
}

TEST_CASE("pu_rate_bound branches", "[pu]") {
  const auto lin = pu_rate_bound(100, 10000, 1, 0.5);
  CHECK(lin.branch == "linear");
  CHECK(lin.value == Approx(0.02).epsilon(1e-15));
  const auto sq = pu_rate_bound(100, 10000, 1, 0.05);
  CHECK(sq.branch == "sqrt");
  CHECK(sq.value == Approx(0.1));
  CHECK_THROWS_AS(pu_rate_bound(0, 1, 1, 1), ArgumentError);
  CHECK_THROWS_AS(pu_rate_bound(1, 1, 1.5, 1), ArgumentError);
  CHECK_THROWS_AS(pu_rate_bound(1, -1, 1, 1), ArgumentError);
}

TEST_CASE("pu_rate_bound is continuous and monotone", "[pu][property]") {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const double V = std::exp(rng.uniform(-3, 8)), n = std::exp(rng.uniform(0, 14)), e = rng.uniform(1e-3, 1.0);
    const double hb = std::sqrt(V / (n * e));
    const auto at = pu_rate_bound(V, n, e, hb);
    const auto below = pu_rate_bound(V, n, e, std::nextafter(hb, 0.0));
    REQUIRE(at.branch == "linear");
    REQUIRE(below.branch == "sqrt");
    REQUIRE(std::abs(at.value - below.value) <= 1e-12 * below.value);
    REQUIRE(std::abs(V / (n * e * hb) - hb) <= 1e-12 * hb);
    const double h = rng.uniform(0.01, 2.0);
    REQUIRE(pu_rate_bound(V, 2 * n, e, h).value <= pu_rate_bound(V, n, e, h).value);
    REQUIRE(pu_rate_bound(V, n, std::min(1.0, 1.5 * e), h).value <= pu_rate_bound(V, n, e, h).value);
  }
}

TEST_CASE("positivity_rate", "[positivity]") {
  std::vector<std::optional<int>> pool(200);
  CHECK(!positivity_rate(pool).defined());
  for (int i = 0; i < 100; ++i) pool[static_cast<std::size_t>(i)] = i < 10 ? 1 : 0;
  CHECK(*positivity_rate(pool).value == 0.10);
  CHECK(positivity_rate(pool, 0.02).params["dataset_rate"] == 0.02);
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::optional<int>> p(1 + rng.below(500));
    const double lab = rng.uniform(0, 1), pos = rng.uniform(0, 1);
    for (auto& v : p)
      if (rng.bernoulli(lab)) v = rng.bernoulli(pos);
    const auto got = positivity_rate(p);
    const auto want = test::positivity_oracle(p);
    REQUIRE(got.defined() == want.has_value());
    if (want) REQUIRE(*got.value == *want);
  }
}

TEST_CASE("metrics CSV marks undefined values", "[csv]") {
  std::ostringstream out;
  const std::vector<MetricsRow> rows_in{cohens_kappa(std::vector<int>{1, 1}, std::vector<int>{1, 1}),
                                        spec_at_sens(std::vector<double>{1, 0}, std::vector<int>{1, 0}).row};
  write_metrics_csv(out, rows_in);
  const auto rows = csv::parse(out.str());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"name", "value", "support", "params"});
  CHECK(rows[1][1] == "NA");
  CHECK(rows[2][1] == "1");
  CHECK(nlohmann::json::parse(rows[2][3])["threshold"] == 1.0);
}

TEST_CASE("csv quoting round trip", "[csv]") {
  const std::vector<std::string> f{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  const auto rows = csv::parse(csv::join(f) + "\r\nx,y\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == f);
  CHECK(rows[1] == std::vector<std::string>{"x", "y"});
  CHECK(csv::number(0.1) == "0.1");
  CHECK(std::strtod(csv::number(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
  CHECK_THROWS_AS(csv::parse("\"open"), DataError);
}
