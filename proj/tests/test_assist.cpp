#include <doctest.h>

#include <random>

#include "armassist/assist.hpp"
#include "armassist/errors.hpp"
#include "armassist/persist.hpp"
#include "armassist/signalgen.hpp"
#include "tmpdir.hpp"

using namespace armassist;
using namespace armassist::assist;

namespace {

session::AlignedView short_view(double duration_s = 10.0) {
  signalgen::SubjectProfile p;
  p.id = "S01";
  p.rng_seed = 23;
  return session::synchronize(
      signalgen::generate_session(p, default_task(TaskKind::push_extend, duration_s), Condition::assisted).channels);
}

}  // namespace

TEST_CASE("logistic need score") {
  LogisticNeedModel m;
  m.bias = 0.0;
  m.w_rms = m.w_mav = m.w_zc = m.w_ti = m.w_fmed = 0.0;
  CHECK(m.score({}) == doctest::Approx(0.5));
  m.w_ti = 1.0;
  WindowFeatures f;
  f.ti = 2.0;
  CHECK(m.score(f) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  LogisticNeedModel def;
  f.rms = 1e6;
  CHECK(def.score(f) <= 1.0);
  f.rms = -1e6;
  CHECK(def.score(f) >= 0.0);
}

TEST_CASE("PD reference examples") {
  CHECK(pd_reference(10.0, 0.0, 0.0, {1.0, 0.0}) == doctest::Approx(10.0));
  CHECK(pd_reference(0.0, 0.0, 4.0, {0.0, 0.5}) == doctest::Approx(-2.0));
  CHECK(pd_reference(90.0, 80.0, 4.0, {0.8, 0.5}) == doctest::Approx(6.0));
  CHECK_THROWS_AS(PdGains({-1.0, 0.0}).validate(), ValidationError);
}

TEST_CASE("torque clamp and angle limit") {
  SafetyEnvelope env;
  env.jerk_max = 1e12;  // effectively no rate limit
  SafetyState s(env);
  auto cmd = s.apply(100.0, 90.0, 50.0, 0.0);
  CHECK(cmd.torque <= env.torque_max);
  CHECK(cmd.flags.torque_clamped);
  cmd = s.apply(5.0, env.angle_max_deg + 1.0, 50.0, 0.01);
  CHECK(cmd.flags.angle_limited);
  CHECK(cmd.torque == doctest::Approx(0.0));
  // Pulling back from the limit is allowed.
  cmd = s.apply(-5.0, env.angle_max_deg + 1.0, 50.0, 0.02);
  CHECK_FALSE(cmd.flags.angle_limited);
  CHECK(cmd.torque == doctest::Approx(-5.0));
  cmd = s.apply(std::nan(""), 90.0, 50.0, 0.03);
  CHECK(cmd.torque == doctest::Approx(0.0));
}

TEST_CASE("jerk limit slews a step") {
  SafetyEnvelope env;
  env.jerk_max = 1e3;
  SafetyState s(env);
  const double step = env.jerk_max * env.dt_s * env.dt_s;
  auto c1 = s.apply(10.0, 90.0, 50.0, 0.0);
  CHECK(c1.torque == doctest::Approx(step));
  CHECK(c1.flags.jerk_limited);
  auto c2 = s.apply(10.0, 90.0, 50.0, 0.01);
  CHECK(c2.torque == doctest::Approx(3 * step));
  int ticks = 2;
  double u = c2.torque;
  while (std::abs(u - 10.0) > 1e-9 && ticks < 1000) {
    u = s.apply(10.0, 90.0, 50.0, ticks * 0.01).torque;
    CHECK(u <= 10.0 + 1e-9);  // no overshoot past the target
    ++ticks;
  }
  CHECK(ticks < 1000);
}

TEST_CASE("stall cut and reset") {
  SafetyEnvelope env;
  env.jerk_max = 1e12;
  SafetyState s(env);
  CHECK(env.stall_ticks() == 101);
  int t = 0;
  for (; t < 500 && s.engaged(); ++t) s.apply(env.torque_max, 90.0, 0.0, t * env.dt_s);
  // Stalling from the first tick: cut on tick 101, exactly stall_timeout_s after onset.
  CHECK(t == 101);
  auto cmd = s.apply(env.torque_max, 90.0, 50.0, 5.0);
  CHECK_FALSE(cmd.engaged);
  CHECK(cmd.torque == 0.0);
  CHECK(cmd.flags.stall_timeout);
  s.reset();
  CHECK(s.engaged());
  CHECK(s.apply(5.0, 90.0, 50.0, 6.0).torque == doctest::Approx(5.0));

  // Motion in between restarts the count.
  SafetyState m(env);
  for (int k = 0; k < 300; ++k) m.apply(env.torque_max, 90.0, k % 100 == 99 ? 10.0 : 0.0, k * env.dt_s);
  CHECK(m.engaged());
}

TEST_CASE("envelope properties over random inputs") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    SafetyEnvelope env;
    env.torque_max = 1.0 + 49.0 * u01(rng);
    env.jerk_max = std::pow(10.0, 3.0 + 3.0 * u01(rng));
    env.stall_timeout_s = 0.05 + 0.5 * u01(rng);
    SafetyState s(env);
    const double bound = env.jerk_max * env.dt_s * env.dt_s;
    double u1 = 0.0, u2 = 0.0;
    bool was_cut = false;
    for (int k = 0; k < 200; ++k) {
      const double raw = (u01(rng) < 0.02) ? std::nan("") : (u01(rng) - 0.5) * 4.0 * env.torque_max;
      const double vel = u01(rng) < 0.5 ? 0.0 : 100.0 * (u01(rng) - 0.5);
      const auto c = s.apply(raw, 180.0 * u01(rng) - 15.0, vel, k * env.dt_s);
      CHECK(std::abs(c.torque) <= env.torque_max + 1e-9);
      if (was_cut) CHECK_FALSE(c.engaged);
      if (c.engaged) CHECK(std::abs(c.torque - 2 * u1 + u2) <= bound * (1 + 1e-9) + 1e-12);
      was_cut = !c.engaged;
      u2 = u1;
      u1 = c.torque;
    }
  }
}

TEST_CASE("loop runs floor(duration * rate) ticks") {
  const auto view = short_view();
  LoopOptions opt;
  opt.duration_s = 10.0;
  const auto r = run_loop(view, TaskKind::push_extend, LogisticNeedModel{}, {}, {}, opt);
  CHECK(r.stats.ticks == 1000);
  CHECK(r.commands.size() == 1000);
  CHECK(r.stats.latency_s.size() == 1000);
  CHECK(r.commands[0].t_s == doctest::Approx(0.01));  // stamped at the end of its tick
  CHECK(r.commands.back().t_s == doctest::Approx(10.0));
  CHECK(r.stats.median_latency_s() <= r.stats.p95_latency_s());
  CHECK(r.stats.p95_latency_s() <= r.stats.max_latency_s());
  bool any = false;
  for (const auto& c : r.commands) any |= c.torque != 0.0;
  CHECK(any);
  CHECK_FALSE(r.features.empty());
}

TEST_CASE("zero assist level commands nothing") {
  LoopOptions opt;
  opt.duration_s = 5.0;
  opt.assist_level = 0.0;
  const auto r = run_loop(short_view(), TaskKind::push_extend, LogisticNeedModel{}, {}, {}, opt);
  for (const auto& c : r.commands) CHECK(c.torque == 0.0);
}

TEST_CASE("loop honours stop, live level, reset and the command hook") {
  const auto view = short_view();
  std::atomic<bool> stop{false}, reset{true};
  std::atomic<double> level{0.0};
  int seen = 0;
  LoopOptions opt;
  opt.duration_s = 10.0;
  opt.stop = &stop;
  opt.live_assist_level = &level;
  opt.reset_request = &reset;
  opt.on_command = [&](const AssistCommand&) {
    if (++seen == 300) stop = true;
  };
  const auto r = run_loop(view, TaskKind::push_extend, LogisticNeedModel{}, {}, {}, opt);
  CHECK(r.stats.ticks < 1000);
  CHECK(r.stats.ticks >= 300);
  CHECK_FALSE(reset.load());
  for (const auto& c : r.commands) CHECK(c.torque == 0.0);
}

TEST_CASE("loop artifacts") {
  TempDir tmp;
  LoopOptions opt;
  opt.duration_s = 2.0;
  const auto r = run_loop(short_view(), TaskKind::push_extend, LogisticNeedModel{}, {}, {}, opt);
  write_loop_artifacts(r, tmp.path());
  const auto commands = session::read_text(tmp.path() / "commands.jsonl");
  CHECK(std::count(commands.begin(), commands.end(), '\n') == 200);
  const auto stats = nlohmann::json::parse(session::read_text(tmp.path() / "loop_stats.json"));
  CHECK(stats.at("ticks") == 200);

  TempDir again;
  write_loop_artifacts(run_loop(short_view(), TaskKind::push_extend, LogisticNeedModel{}, {}, {}, opt), again.path());
  CHECK(session::read_text(again.path() / "commands.jsonl") == commands);
}
