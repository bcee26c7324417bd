#include <doctest.h>

#include <numbers>
#include <random>

#include "armassist/metrics.hpp"
#include "armassist/signalgen.hpp"
#include "oracles.hpp"

using namespace armassist;
using namespace armassist::metrics;
using std::numbers::pi;

namespace {

Eigen::ArrayXd tone(double f, double rate, Eigen::Index n, double amp = 1.0, double phase = 0.0) {
  return amp * (2.0 * pi * f * Eigen::ArrayXd::LinSpaced(n, 0, static_cast<double>(n - 1)) / rate + phase).sin();
}

double ti_of(const Eigen::ArrayXd& accel) { return tremor_index(dsp::welch_psd(accel, 200.0, 400)).value; }

}  // namespace

TEST_CASE("tremor index on pure and mixed tones") {
  CHECK(ti_of(tone(8.0, 200, 1600)) >= 0.98);
  CHECK(ti_of(tone(2.0, 200, 1600)) <= 0.02);
  const Eigen::ArrayXd mix = tone(2.0, 200, 1600) + tone(8.0, 200, 1600, 1.0, 0.4);
  const double ti = ti_of(mix);
  CHECK(ti == doctest::Approx(0.5).epsilon(0.04));
  const std::vector<double> v(mix.data(), mix.data() + mix.size());
  CHECK(ti == doctest::Approx(oracle::band_ratio_dft(v, 200.0, 4.0, 12.0, 0.5, 20.0)).epsilon(0.04));
}

TEST_CASE("tremor index errors") {
  CHECK_THROWS_AS(ti_of(Eigen::ArrayXd::Zero(1600)), NoMotionError);
  // 20 Hz rate: the spectrum ends at 10 Hz, short of the reference band.
  CHECK_THROWS_AS(tremor_index(dsp::welch_psd(tone(3.0, 20.0, 200), 20.0, 40)), ValidationError);
}

TEST_CASE("range of motion") {
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(1000, 0, 999) / 100.0;
  const Eigen::ArrayXd theta = 45.0 * (2 * pi * t).sin() + 45.0;
  CHECK(rom(theta).value_deg == doctest::Approx(90.0).epsilon(0.5 / 90.0));
  CHECK(rom(theta).joint == "elbow");
  CHECK(rom(Eigen::ArrayXd::Constant(50, 12.0)).value_deg == 0.0);
  Eigen::ArrayXd gappy = theta;
  gappy.head(30).setConstant(std::nan(""));
  CHECK(std::isfinite(rom(gappy).value_deg));
  CHECK_THROWS_AS(rom(Eigen::ArrayXd::Constant(5, std::nan(""))), ValidationError);
}

TEST_CASE("repetition counting") {
  const double rate = 100.0;
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(6000, 0, 5999) / rate;
  const Eigen::ArrayXd clean = -(2 * pi * t / 6.0).cos();
  auto r = count_reps(clean, rate);
  CHECK(r.count == 10);
  CHECK(r.rate_per_min == doctest::Approx(10.0));
  CHECK(r.duration_s == doctest::Approx(60.0));

  // 40 Hz chatter on the rising half makes each upward crossing flicker for about 50 ms.
  const Eigen::ArrayXd rising = ((2 * pi * t / 6.0).sin() > 0.0).cast<double>();
  const Eigen::ArrayXd jitter = clean + 0.05 * rising * (2 * pi * 40.0 * t).sin();
  const double mean = jitter.mean();
  int raw = 0;
  for (Eigen::Index i = 1; i < jitter.size(); ++i)
    if (jitter[i - 1] < mean && jitter[i] >= mean) ++raw;
  CHECK(raw > 10);
  CHECK(count_reps(jitter, rate, 0.3).count == 10);

  CHECK(count_reps(Eigen::ArrayXd::Constant(6000, 1.0), rate).count == 0);
  CHECK_THROWS_AS(count_reps(Eigen::ArrayXd::Zero(50), rate, 0.3), ValidationError);
}

TEST_CASE("fatigue slope") {
  Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(40, 0, 117);
  Eigen::ArrayXd f = 100.0 - 0.5 * t / 60.0;
  auto line = fatigue_slope(t, f);
  CHECK(line.slope_hz_per_min == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(line.intercept_hz == doctest::Approx(100.0));
  CHECK(line.fit_method == "theil_sen");

  Eigen::ArrayXd g = 90.0 + 0.1 * t / 60.0;
  g[17] += 40.0;
  const auto robust = fatigue_slope(t, g);
  CHECK(robust.slope_hz_per_min == doctest::Approx(0.1).epsilon(0.05));
  const std::vector<double> tv(t.data(), t.data() + t.size()), gv(g.data(), g.data() + g.size());
  CHECK(robust.slope_hz_per_min == doctest::Approx(60.0 * oracle::theil_sen_bruteforce(tv, gv)).epsilon(1e-12));

  Eigen::ArrayXd t2(2), f2(2);
  t2 << 0.0, 30.0;
  f2 << 80.0, 81.0;
  CHECK(fatigue_slope(t2, f2).slope_hz_per_min == doctest::Approx(2.0));
  CHECK_THROWS_AS(fatigue_slope(t2.head(1), f2.head(1)), InsufficientDataError);
}

TEST_CASE("session outcomes track the generator") {
  signalgen::SubjectProfile p;
  p.id = "S01";
  p.ti_baseline = 0.447;
  p.rom_baseline_deg = 81.5;
  p.reps_baseline_per_min = 10.0;
  p.fmed_slope_baseline = -0.45;
  p.rng_seed = 99;
  auto rec = signalgen::generate_session(p, default_task(TaskKind::push_extend), Condition::baseline);
  const auto o = session_outcomes(rec);
  CHECK(o.ti_median == doctest::Approx(0.447).epsilon(0.02 / 0.447));
  CHECK(std::abs(o.rom_deg - 81.5) <= 0.5);
  CHECK(std::abs(o.reps_per_min - 10.0) <= 0.5);
  CHECK(o.fmed_slope_hz_per_min < 0.0);

  // The session TI is the sorted-middle median of the window values.
  auto windows = session_windows(rec, PipelineConfig{});
  std::vector<double> tis;
  for (const auto& w : windows)
    if (w.ti) tis.push_back(*w.ti);
  CHECK(o.n_ti_windows == tis.size());
  CHECK(o.ti_median == oracle::sorted_median(tis));
}

TEST_CASE("median definition for odd and even counts") {
  // Both parities are exercised by trimming the session length by one hop.
  signalgen::SubjectProfile p;
  p.id = "S02";
  p.rng_seed = 5;
  for (double dur : {30.0, 30.125}) {
    auto rec = signalgen::generate_session(p, default_task(TaskKind::reach_hold, dur), Condition::assisted);
    const auto o = session_outcomes(rec);
    std::vector<double> tis;
    for (const auto& w : session_windows(rec, PipelineConfig{}))
      if (w.ti) tis.push_back(*w.ti);
    CHECK(o.ti_median == oracle::sorted_median(tis));
  }
}

TEST_CASE("zero-valued channels raise a no-motion error") {
  signalgen::SubjectProfile p;
  p.id = "S03";
  auto rec = signalgen::generate_session(p, default_task(TaskKind::pinch_grip, 20.0), Condition::baseline);
  for (auto& [kind, stream] : rec.channels)
    for (auto& pk : stream.packets) std::fill(pk.payload.begin(), pk.payload.end(), 0);
  CHECK_THROWS_AS(session_outcomes(rec), NoMotionError);
}

TEST_CASE("excluded sessions are refused") {
  signalgen::SubjectProfile p;
  p.id = "S04";
  auto rec = signalgen::generate_session(p, default_task(TaskKind::pinch_grip, 20.0), Condition::baseline);
  rec.qc.excluded = true;
  CHECK_THROWS_AS(session_outcomes(rec), ValidationError);
}
