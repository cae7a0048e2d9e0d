#include <doctest.h>

#include <cmath>

#include "pbrl/oracle/oracle.hpp"

using namespace pbrl;
using namespace pbrl::oracle;
using data::PreferenceLabel;

namespace {

data::Segment with_return(Real g) {
  data::Segment s;
  s.states = {{0}, {0}};
  s.actions = {{0}, {0}};
  s.target_rewards = {g, 0};
  return s;
}

}  // namespace

TEST_CASE("perfect oracle") {
  SyntheticOracle o(OracleSpec::parse("perfect"));
  CHECK(o.label(with_return(1), with_return(0)) == PreferenceLabel::prefer_a());
  CHECK(o.label(with_return(0), with_return(1)) == PreferenceLabel::prefer_b());
  CHECK(o.label(with_return(1), with_return(1)) == PreferenceLabel::equal());
  OracleSpec s;
  s.equal_threshold = 0.5f;
  SyntheticOracle t(s);
  CHECK(t.label(with_return(1), with_return(0.6f)) == PreferenceLabel::equal());
}

TEST_CASE("perfect labels are antisymmetric") {
  SyntheticOracle o(OracleSpec{});
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> g(0, 3);
  for (int i = 0; i < 200; ++i) {
    auto a = with_return(static_cast<Real>(g(rng))), b = with_return(static_cast<Real>(g(rng)));
    CHECK(o.label(a, b) == o.label(b, a).swapped());
  }
}

TEST_CASE("mistake oracle boundaries") {
  auto one = OracleSpec::parse("mistake:1.0");
  SyntheticOracle always(one);
  for (int i = 0; i < 20; ++i) CHECK(always.label(with_return(1), with_return(0)) == PreferenceLabel::prefer_b());
  CHECK(always.label(with_return(1), with_return(1)) == PreferenceLabel::equal());

  SyntheticOracle never(OracleSpec::parse("mistake:0")), perfect(OracleSpec{});
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    auto a = with_return(static_cast<Real>(n(rng))), b = with_return(static_cast<Real>(n(rng)));
    CHECK(never.label(a, b) == perfect.label(a, b));
  }
}

TEST_CASE("mistake oracle with epsilon 0.2, seed 13 matches its own coin stream") {
  auto spec = OracleSpec::parse("mistake:0.2");
  spec.seed = 13;
  SyntheticOracle o(spec);
  std::mt19937_64 replay(13);
  std::bernoulli_distribution coin(0.2);
  int expected = 0, flipped = 0;
  for (int i = 0; i < 1000; ++i) {
    expected += coin(replay);
    flipped += o.label(with_return(static_cast<Real>(i + 1)), with_return(0)) == PreferenceLabel::prefer_b();
  }
  CHECK(flipped == expected);
  CHECK(o.flips() == flipped);
  CHECK(flipped >= 150);
  CHECK(flipped <= 250);
}

TEST_CASE("mistake flip fraction within 3 sigma at n = 10000") {
  auto spec = OracleSpec::parse("mistake:0.2");
  spec.seed = 99;
  SyntheticOracle o(spec);
  for (int i = 0; i < 10000; ++i) o.label(with_return(1), with_return(0));
  const double sigma = std::sqrt(0.2 * 0.8 / 10000);
  CHECK(std::abs(o.flips() / 10000.0 - 0.2) < 3 * sigma);
}

TEST_CASE("mistake oracle reproducible with the same seed") {
  auto spec = OracleSpec::parse("mistake:0.3");
  spec.seed = 5;
  SyntheticOracle a(spec), b(spec);
  for (int i = 0; i < 300; ++i) CHECK(a.label(with_return(2), with_return(1)) == b.label(with_return(2), with_return(1)));
}

TEST_CASE("fixed-fraction mistakes flip an exact count") {
  auto spec = OracleSpec::parse("mistake:0.2");
  spec.fixed_fraction = true;
  spec.budget = 200;
  SyntheticOracle o(spec);
  for (int i = 0; i < 200; ++i) o.label(with_return(1), with_return(0));
  CHECK(o.flips() == 40);
}

TEST_CASE("oracle spec parsing") {
  CHECK(OracleSpec::parse("mistake:0.25").epsilon == doctest::Approx(0.25));
  CHECK(OracleSpec::parse("human").kind == OracleKind::human);
  CHECK_THROWS_AS(OracleSpec::parse("mistake:1.5"), ConfigError);
  CHECK_THROWS_AS(OracleSpec::parse("mistake:x"), ConfigError);
  CHECK_THROWS_AS(OracleSpec::parse("crowd"), ConfigError);
}

TEST_CASE("human bridge accepts each query once") {
  HumanBridge bridge;
  CHECK(bridge.pending().empty());
  bridge.post(PendingQuery{7, with_return(0), with_return(1), {}});
  CHECK(bridge.pending().size() == 1);
  CHECK(bridge.submit(8, PreferenceLabel::prefer_a(), 0) == SubmitStatus::not_found);
  CHECK(bridge.submit(7, PreferenceLabel::prefer_a(), 10) == SubmitStatus::accepted);
  CHECK(bridge.submit(7, PreferenceLabel::prefer_b(), 11) == SubmitStatus::conflict);
  auto got = bridge.drain();
  REQUIRE(got.size() == 1);
  CHECK(got[0].second.label == PreferenceLabel::prefer_a());
  CHECK(bridge.drain().empty());
  CHECK(label_from_choice("equal") == PreferenceLabel::equal());
  CHECK_FALSE(label_from_choice("c").has_value());
}
