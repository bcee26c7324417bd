#include <doctest.h>

#include "armassist/config.hpp"
#include "armassist/errors.hpp"
#include "armassist/persist.hpp"
#include "tmpdir.hpp"

using namespace armassist;

TEST_CASE("defaults validate and round-trip through text") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  const auto back = RunConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.tasks == all_task_kinds());
  CHECK(back.analysis.b_resamples == 10000);
}

TEST_CASE("every field survives a round-trip") {
  RunConfig c;
  c.cohort_size = 5;
  c.seed = 99;
  c.tasks = {TaskKind::reach_hold, TaskKind::push_extend};
  c.condition_order = ConditionOrder::randomized;
  c.trials_per_task = 2;
  c.duration_s = 30.5;
  c.mains_hz = 60.0;
  c.mad_threshold = 4.0;
  c.calibration_path = "cal.txt";
  c.envelope.torque_max = 12.5;
  c.envelope.stall_timeout_s = 0.75;
  c.gains.kp = 1.25;
  c.assist_level = 0.3;
  c.run_loop = false;
  c.output_root = "elsewhere";
  c.port = 0;
  c.ui_rate_hz = 40.0;
  c.analysis.b_resamples = 2000;
  c.analysis.seed = 7;
  c.analysis.trim = 0.1;
  c.analysis.task_resamples = 10;
  c.analysis.thresholds.rom_gain_deg = 4.0;
  const auto b = RunConfig::parse(c.to_text());
  CHECK(b.to_text() == c.to_text());
  CHECK(b.tasks == c.tasks);
  CHECK(b.condition_order == ConditionOrder::randomized);
  CHECK(b.duration_s == 30.5);
  CHECK(b.envelope.stall_timeout_s == 0.75);
  CHECK_FALSE(b.run_loop);
  CHECK(b.analysis.thresholds.rom_gain_deg == 4.0);
}

TEST_CASE("parsing accepts comments and blank lines") {
  const auto c = RunConfig::parse("# cohort\n\ncohort_size = 4   # small\n  seed=5\ntasks = pinch_grip\n");
  CHECK(c.cohort_size == 4);
  CHECK(c.seed == 5);
  CHECK(c.tasks == std::vector<TaskKind>{TaskKind::pinch_grip});
}

TEST_CASE("bad configs are rejected") {
  for (const char* text : {"cohort_size\n", "colour = red\n", "seed = 1\nseed = 2\n", "duration_s = fast\n",
                           "duration_s = 5\n", "mains_hz = 55\n", "ui_rate_hz = 60\n", "tasks = juggling\n",
                           "tasks = pinch_grip,pinch_grip\n", "run_loop = maybe\n", "b_resamples = 500\n",
                           "condition_order = alphabetical\n", "port = 70000\n", "cohort_size = 1.5\n"}) {
    CAPTURE(text);
    CHECK_THROWS_AS(RunConfig::parse(text), ValidationError);
  }
}

TEST_CASE("load reads a file and reports missing ones") {
  TempDir tmp;
  session::write_text(tmp.path() / "run.conf", "cohort_size = 3\n");
  CHECK(RunConfig::load(tmp.path() / "run.conf").cohort_size == 3);
  CHECK_THROWS_AS(RunConfig::load(tmp.path() / "absent.conf"), IoError);
}

TEST_CASE("condition order and task list parsing") {
  CHECK(parse_condition_order("baseline_first") == ConditionOrder::baseline_first);
  CHECK(to_string(ConditionOrder::randomized) == "randomized");
  CHECK(parse_task_list("push_extend, reach_hold") ==
        std::vector<TaskKind>{TaskKind::push_extend, TaskKind::reach_hold});
}
