#include <doctest.h>

#include <random>

#include "armassist/errors.hpp"
#include "armassist/stats.hpp"
#include "oracles.hpp"

using namespace armassist;
using namespace armassist::stats;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<double> stdvec(const Vec& v) { return {v.data(), v.data() + v.size()}; }

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double phi_inv(double p) {
  double a = -40.0, b = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (phi(m) < p ? a : b) = m;
  }
  return 0.5 * (a + b);
}

double mean_stat(const VecRef& x) { return x.mean(); }

// Textbook BCa on the same resample stream, for continuous data (no ties with the estimate).
std::pair<double, double> bca_reference(const Vec& x, int B, std::uint64_t seed, double level) {
  const auto n = x.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<double> boot;
  for (int b = 0; b < B; ++b) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += x[pick(rng)];
    boot.push_back(s / static_cast<double>(n));
  }
  const double est = x.mean();
  int below = 0;
  for (double v : boot) below += v < est;
  const double z0 = phi_inv(static_cast<double>(below) / B);
  std::vector<double> jack;
  for (Eigen::Index i = 0; i < n; ++i) jack.push_back((x.sum() - x[i]) / static_cast<double>(n - 1));
  double jm = 0;
  for (double v : jack) jm += v / static_cast<double>(n);
  double num = 0, den = 0;
  for (double v : jack) {
    num += std::pow(jm - v, 3);
    den += std::pow(jm - v, 2);
  }
  const double a = num / (6.0 * std::pow(den, 1.5));
  std::sort(boot.begin(), boot.end());
  auto q = [&](double p) {
    const double h = (B - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    return lo + 1 < boot.size() ? boot[lo] + (h - lo) * (boot[lo + 1] - boot[lo]) : boot[lo];
  };
  auto adj = [&](double alpha) {
    const double z = z0 + phi_inv(alpha);
    return phi(z0 + z / (1 - a * z));
  };
  const double alpha = (1 - level) / 2;
  return {q(adj(alpha)), q(adj(1 - alpha))};
}

}  // namespace

TEST_CASE("median and quantiles") {
  CHECK(median(vec({3, 1, 2})) == 2.0);
  CHECK(median(vec({4, 1, 3, 2})) == 2.5);
  CHECK(quantile(vec({1, 2, 3, 4}), 0.25) == doctest::Approx(1.75));
  CHECK(quantile(vec({1, 2, 3, 4}), 1.0) == 4.0);
  const auto r = iqr(vec({7, 1, 3, 5, 9}));
  CHECK(r.q1 == 3.0);
  CHECK(r.q3 == 7.0);
  CHECK_THROWS_AS(median(Vec()), InsufficientDataError);
  CHECK(paired_median_delta(vec({1, 2, 3}), vec({2, 4, 3})) == 1.0);
  CHECK_THROWS_AS(paired_median_delta(vec({1, 2}), vec({1})), ValidationError);
}

TEST_CASE("normal helpers invert each other") {
  for (double p : {1e-6, 0.025, 0.3, 0.5, 0.975}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054));
}

TEST_CASE("Wilcoxon exact matches full enumeration") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(3, 10), grid(-4, 4);
  std::uniform_real_distribution<double> cont(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const int n = size(rng);
    Vec d(n);
    // Half the sets sit on an integer grid so ties and zeros are common.
    for (int i = 0; i < n; ++i) d[i] = k % 2 ? grid(rng) : cont(rng) + 0.3;
    const auto r = wilcoxon_exact(d);
    CAPTURE(k);
    CHECK(r.p_value == doctest::Approx(oracle::wilcoxon_bruteforce(stdvec(d))).epsilon(1e-12));
  }
}

TEST_CASE("Wilcoxon edge cases") {
  CHECK(wilcoxon_exact(Vec::Constant(12, 1.5)).p_value == doctest::Approx(2.0 / 4096.0));
  CHECK(wilcoxon_exact(vec({-1, -2, -3, -4, -5, -6, -7, -8, -9, -10, -11, -12})).p_value == doctest::Approx(2.0 / 4096.0));
  CHECK(wilcoxon_exact(vec({0.7})).p_value == 1.0);
  const auto zeros = wilcoxon_exact(vec({0, 0, 0}));
  CHECK(zeros.p_value == 1.0);
  CHECK(zeros.n_nonzero == 0);
  const auto r = wilcoxon_exact(vec({1, -2, 3, 0}));
  CHECK(r.n_nonzero == 3);
  CHECK(r.w_plus == 4.0);
  // Beyond full enumeration the DP still agrees with the sign-count bound.
  Vec big = Vec::LinSpaced(40, 1.0, 40.0);
  CHECK(wilcoxon_exact(big).p_value == doctest::Approx(2.0 / std::pow(2.0, 40)));
  CHECK_THROWS_AS(wilcoxon_exact(Vec::LinSpaced(61, 1.0, 61.0)), ValidationError);
}

TEST_CASE("Cliff's delta sign patterns") {
  Vec a = Vec::Constant(12, -1.0);
  a[0] = 1.0;
  CHECK(cliffs_delta_signed(a) == doctest::Approx(-10.0 / 12.0));
  Vec b = Vec::Constant(12, 1.0);
  b[0] = -1.0;
  b[1] = 0.0;
  CHECK(cliffs_delta_signed(b) == doctest::Approx(0.75));
  Vec c = Vec::Constant(12, 2.0);
  c[5] = 0.0;
  CHECK(cliffs_delta_signed(c) == doctest::Approx(11.0 / 12.0));
  CHECK_THROWS_AS(cliffs_delta_signed(Vec()), InsufficientDataError);
}

TEST_CASE("trimmed mean agrees with sort and slice") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  for (int n : {5, 10, 12, 23}) {
    Vec x(n);
    for (auto& v : x) v = nd(rng);
    const auto t = trimmed_mean(x, 0.2);
    CHECK(t.value == doctest::Approx(oracle::trimmed_mean_sort_slice(stdvec(x), 0.2)).epsilon(1e-12));
    CHECK(t.dropped_each_side == static_cast<std::size_t>(0.2 * n));
    CHECK_FALSE(t.fell_back);
  }
  const auto small = trimmed_mean(vec({1, 2, 30}), 0.2);
  CHECK(small.fell_back);
  CHECK(small.value == doctest::Approx(11.0));
}

TEST_CASE("BCa matches a textbook implementation") {
  std::mt19937_64 rng(11);
  std::gamma_distribution<double> skewed(1.5, 2.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Vec x(15);
    for (auto& v : x) v = skewed(rng);
    const auto ci = bca_ci(x, mean_stat, 2000, seed);
    const auto [lo, hi] = bca_reference(x, 2000, seed, 0.95);
    CHECK(ci.low == doctest::Approx(lo).epsilon(1e-9));
    CHECK(ci.high == doctest::Approx(hi).epsilon(1e-9));
    CHECK(ci.estimate == doctest::Approx(x.mean()));
  }
}

TEST_CASE("BCa behaviour") {
  const Vec x = vec({0.1, 0.4, -0.2, 0.8, 0.3, 0.5, 0.2, 0.9, 0.0, 0.6, 0.35, 0.45});
  const auto a = bca_ci(x, median_statistic, 2000, 42);
  const auto b = bca_ci(x, median_statistic, 2000, 42);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low <= a.estimate);
  CHECK(a.estimate <= a.high);
  const auto narrow = bca_ci(x, median_statistic, 2000, 42, 0.8);
  CHECK(narrow.low >= a.low);
  CHECK(narrow.high <= a.high);

  // Shifting the data shifts the interval.
  const auto shifted = bca_ci((x.array() + 1.0).matrix(), median_statistic, 2000, 42);
  CHECK(shifted.low == doctest::Approx(a.low + 1.0));
  CHECK(shifted.high == doctest::Approx(a.high + 1.0));

  const auto flat = bca_ci(Vec::Constant(8, 2.5), median_statistic, 1000, 1);
  CHECK(flat.low == 2.5);
  CHECK(flat.high == 2.5);

  CHECK_THROWS_AS(bca_ci(vec({1, 2}), median_statistic, 2000, 1), InsufficientDataError);
  CHECK_THROWS_AS(bca_ci(x, median_statistic, 999, 1), ValidationError);
  CHECK_THROWS_AS(bca_ci(x, median_statistic, 2000, 1, 1.0), ValidationError);
}

TEST_CASE("symmetric data: BCa is close to the percentile interval") {
  Vec x(41);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i - 20) / 10.0;
  const auto ci = bca_ci(x, mean_stat, 4000, 9);
  CHECK(std::abs(ci.acceleration) < 1e-12);
  CHECK(std::abs(ci.z0) < 0.1);
  CHECK(ci.low == doctest::Approx(-ci.high).epsilon(0.1));
}

TEST_CASE("task resampling") {
  std::vector<TrialValue> trials;
  for (const std::string id : {"S01", "S02", "S03"})
    for (TaskKind t : all_task_kinds())
      for (int k = 0; k < 3; ++k) {
        trials.push_back({id, t, Condition::baseline, 1.0 + 0.01 * k});
        trials.push_back({id, t, Condition::assisted, 2.0 + 0.01 * k});
      }
  trials.push_back({"S04", TaskKind::push_extend, Condition::baseline, 1.0});
  const auto r = task_resample_sensitivity(trials, 200, 3);
  CHECK(r.point_estimate == doctest::Approx(1.0));
  CHECK(r.contrasts.size() == 200);
  CHECK(r.sign_consistency == 1.0);
  CHECK(r.skipped_subjects == std::vector<std::string>{"S04"});
  CHECK(task_resample_sensitivity(trials, 200, 3).contrasts == r.contrasts);
  for (double c : r.contrasts) CHECK(std::abs(c - 1.0) <= 0.02 + 1e-12);

  // A single trial per task leaves nothing to resample.
  std::vector<TrialValue> one = {{"S01", TaskKind::push_extend, Condition::baseline, 3.0},
                                 {"S01", TaskKind::push_extend, Condition::assisted, 2.0}};
  const auto single = task_resample_sensitivity(one, 50, 1);
  for (double c : single.contrasts) CHECK(c == -1.0);
  CHECK_THROWS_AS(task_resample_sensitivity({trials.back()}, 10, 1), InsufficientDataError);
}

TEST_CASE("responder table") {
  std::vector<SubjectPair> s(4);
  const double ti_a[] = {0.25, 0.30, 0.31, 0.5};
  const double rom_gain[] = {5.0, 4.9, 10.0, -1.0};
  const double reps_gain[] = {1.5, 2.0, 1.49, 0.0};
  for (int i = 0; i < 4; ++i) {
    s[i].id = "S0" + std::to_string(i + 1);
    s[i].baseline = {0.45, 80.0, 10.0, -0.4};
    s[i].assisted = {ti_a[i], 80.0 + rom_gain[i], 10.0 + reps_gain[i], -0.3};
  }
  const auto rows = responder_table(s, {});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].count == 2);
  CHECK(rows[1].count == 2);
  CHECK(rows[2].count == 2);
  CHECK(rows[0].n == 4);
  CHECK(rows[0].fraction == 0.5);

  const double inf = std::numeric_limits<double>::infinity();
  ResponderThresholds none{-inf, inf, inf};
  for (const auto& r : responder_table(s, none)) CHECK(r.count == 0);
  ResponderThresholds all{inf, -inf, 0.0};
  s[3].assisted.reps_per_min = 10.0;
  for (const auto& r : responder_table(s, all)) CHECK(r.count == 4);
}

TEST_CASE("responder thresholds parse") {
  const auto t = ResponderThresholds::parse("ti=0.25,rom=6,reps=2");
  CHECK(t.ti_max == 0.25);
  CHECK(t.rom_gain_deg == 6.0);
  CHECK(t.reps_gain_per_min == 2.0);
  CHECK(ResponderThresholds::parse(t.to_string()).rom_gain_deg == 6.0);
  CHECK_THROWS_AS(ResponderThresholds::parse("ti=2"), ValidationError);
  CHECK(std::isinf(ResponderThresholds::parse("ti=inf,rom=-inf,reps=inf").rom_gain_deg));
  CHECK_THROWS_AS(ResponderThresholds::parse("rom=abc"), ValidationError);
  CHECK_THROWS_AS(ResponderThresholds::parse("speed=1"), ValidationError);
}
