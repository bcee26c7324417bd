#include "armassist/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "armassist/errors.hpp"

namespace armassist::stats {

namespace {

std::vector<double> sorted(const VecRef& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  return v;
}

double sorted_quantile(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + t * (v[i + 1] - v[i]) : v[i];
}

void require_finite(const VecRef& x, const char* what) {
  if (!x.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace

double median(const VecRef& x) {
  if (x.size() == 0) throw InsufficientDataError("median of an empty sample");
  std::vector<double> v(x.data(), x.data() + x.size());
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

double quantile(const VecRef& x, double q) {
  if (x.size() == 0) throw InsufficientDataError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must be in [0, 1]");
  return sorted_quantile(sorted(x), q);
}

Iqr iqr(const VecRef& x) {
  if (x.size() == 0) throw InsufficientDataError("IQR of an empty sample");
  const auto v = sorted(x);
  return {sorted_quantile(v, 0.25), sorted_quantile(v, 0.75)};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double paired_median_delta(const VecRef& baseline, const VecRef& assisted) {
  if (baseline.size() != assisted.size()) throw ValidationError("paired samples differ in length");
  if (baseline.size() == 0) throw InsufficientDataError("no pairs");
  require_finite(baseline, "baseline");
  require_finite(assisted, "assisted");
  return median(assisted - baseline);
}

WilcoxonResult wilcoxon_exact(const VecRef& deltas) {
  require_finite(deltas, "deltas");
  std::vector<double> d;
  for (Eigen::Index i = 0; i < deltas.size(); ++i)
    if (deltas[i] != 0.0) d.push_back(deltas[i]);
  WilcoxonResult r;
  r.n_nonzero = d.size();
  if (d.empty()) return r;
  if (d.size() > 60) throw ValidationError("exact signed-rank test limited to 60 non-zero pairs");

  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled midranks keep everything integral.
  std::vector<int> rank2(d.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int r2 = static_cast<int>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }
  int total = 0, observed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += rank2[i];
    if (d[i] > 0.0) observed += rank2[i];
  }
  // Counts of sign patterns by doubled positive-rank sum.
  std::vector<long double> count(static_cast<std::size_t>(total) + 1, 0.0L);
  count[0] = 1.0L;
  int reach = 0;
  for (int r2 : rank2) {
    for (int s = reach; s >= 0; --s)
      if (count[static_cast<std::size_t>(s)] != 0.0L) count[static_cast<std::size_t>(s + r2)] += count[static_cast<std::size_t>(s)];
    reach += r2;
  }
  const long double all = std::ldexp(1.0L, static_cast<int>(d.size()));
  long double lower = 0.0L, upper = 0.0L;
  for (int s = 0; s <= total; ++s) {
    if (s <= observed) lower += count[static_cast<std::size_t>(s)];
    if (s >= observed) upper += count[static_cast<std::size_t>(s)];
  }
  r.w_plus = observed / 2.0;
  r.p_value = static_cast<double>(std::min(1.0L, 2.0L * std::min(lower, upper) / all));
  return r;
}

double median_statistic(const VecRef& x) { return median(x); }

ConfidenceInterval bca_ci(const VecRef& data, const Statistic& statistic, int resamples, std::uint64_t seed,
                          double level) {
  if (data.size() < 3) throw InsufficientDataError("bootstrap needs at least 3 observations");
  if (resamples < 1000) throw ValidationError("bootstrap needs at least 1000 resamples");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must be in (0, 1)");
  require_finite(data, "bootstrap data");
  const Eigen::Index n = data.size();
  ConfidenceInterval ci;
  ci.level = level;
  ci.resamples = resamples;
  ci.estimate = statistic(data);
  if ((data.array() == data[0]).all()) {
    ci.low = ci.high = ci.estimate;
    return ci;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<double> boot(static_cast<std::size_t>(resamples));
  Vec sample(n);
  for (int b = 0; b < resamples; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) sample[i] = data[pick(rng)];
    boot[static_cast<std::size_t>(b)] = statistic(sample);
  }
  std::sort(boot.begin(), boot.end());
  if (boot.front() == boot.back()) {
    ci.low = ci.high = boot.front();
    return ci;
  }
  // Ties with the estimate count half, which keeps z0 unbiased for discrete statistics.
  const auto lo_it = std::lower_bound(boot.begin(), boot.end(), ci.estimate);
  const auto hi_it = std::upper_bound(boot.begin(), boot.end(), ci.estimate);
  const double below = static_cast<double>(lo_it - boot.begin()) + 0.5 * static_cast<double>(hi_it - lo_it);
  const double frac = std::clamp(below / resamples, 0.5 / resamples, 1.0 - 0.5 / resamples);
  ci.z0 = normal_quantile(frac);

  Vec jack(n), loo(n - 1 > 0 ? n - 1 : 1);
  if (n > 1) {
    for (Eigen::Index i = 0; i < n; ++i) {
      loo << data.head(i), data.tail(n - 1 - i);
      jack[i] = statistic(loo);
    }
    const Vec dev = jack.array().mean() - jack.array();
    const double den = std::pow(dev.squaredNorm(), 1.5);
    ci.acceleration = den > 0.0 ? dev.array().cube().sum() / (6.0 * den) : 0.0;
  }
  const double alpha = (1.0 - level) / 2.0;
  auto adjusted = [&](double p) {
    const double z = normal_quantile(p);
    const double num = ci.z0 + z;
    return normal_cdf(ci.z0 + num / (1.0 - ci.acceleration * num));
  };
  ci.low = sorted_quantile(boot, std::clamp(adjusted(alpha), 0.0, 1.0));
  ci.high = sorted_quantile(boot, std::clamp(adjusted(1.0 - alpha), 0.0, 1.0));
  return ci;
}

double cliffs_delta_signed(const VecRef& deltas) {
  if (deltas.size() == 0) throw InsufficientDataError("Cliff's delta of an empty sample");
  require_finite(deltas, "deltas");
  const double pos = static_cast<double>((deltas.array() > 0.0).count());
  const double neg = static_cast<double>((deltas.array() < 0.0).count());
  return (pos - neg) / static_cast<double>(deltas.size());
}

TrimmedMean trimmed_mean(const VecRef& x, double trim) {
  if (x.size() == 0) throw InsufficientDataError("trimmed mean of an empty sample");
  if (!(trim >= 0.0 && trim < 0.5)) throw ValidationError("trim fraction must be in [0, 0.5)");
  require_finite(x, "sample");
  const auto v = sorted(x);
  TrimmedMean t;
  const auto g = static_cast<std::size_t>(std::floor(trim * static_cast<double>(v.size()) + 1e-9));
  if ((g == 0 && trim > 0.0) || 2 * g >= v.size()) {
    t.fell_back = trim > 0.0;
    t.value = x.mean();
    return t;
  }
  t.dropped_each_side = g;
  double s = 0.0;
  for (std::size_t i = g; i < v.size() - g; ++i) s += v[i];
  t.value = s / static_cast<double>(v.size() - 2 * g);
  return t;
}

TaskResampleResult task_resample_sensitivity(const std::vector<TrialValue>& trials, int resamples,
                                             std::uint64_t seed) {
  if (resamples < 1) throw ValidationError("need at least one resample");
  // subject -> condition -> task -> trial values
  std::map<std::string, std::map<Condition, std::map<TaskKind, std::vector<double>>>> data;
  std::set<TaskKind> tasks;
  for (const auto& t : trials) {
    if (!std::isfinite(t.value)) throw ValidationError("trial value is not finite");
    data[t.subject_id][t.condition][t.task].push_back(t.value);
    tasks.insert(t.task);
  }
  TaskResampleResult out;
  std::vector<std::string> subjects;
  for (const auto& [id, by_cond] : data) {
    bool complete = by_cond.size() == 2;
    for (const auto& [cond, by_task] : by_cond) complete = complete && by_task.size() == tasks.size();
    if (complete) subjects.push_back(id);
    else out.skipped_subjects.push_back(id);
  }
  if (subjects.empty()) throw InsufficientDataError("no subject has every task in both conditions");

  auto task_median = [&](const std::map<TaskKind, std::vector<double>>& by_task, auto&& pick) {
    Vec v(static_cast<Eigen::Index>(by_task.size()));
    Eigen::Index i = 0;
    for (const auto& [task, values] : by_task) v[i++] = pick(values);
    return median(v);
  };
  auto contrast = [&](auto&& pick) {
    Vec d(static_cast<Eigen::Index>(subjects.size()));
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      const auto& c = data[subjects[s]];
      d[static_cast<Eigen::Index>(s)] =
          task_median(c.at(Condition::assisted), pick) - task_median(c.at(Condition::baseline), pick);
    }
    return median(d);
  };
  out.point_estimate = contrast([](const std::vector<double>& v) {
    return median(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  });
  std::mt19937_64 rng(seed);
  int same = 0;
  for (int r = 0; r < resamples; ++r) {
    const double c = contrast([&](const std::vector<double>& v) {
      std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
      return v[pick(rng)];
    });
    out.contrasts.push_back(c);
    if ((c > 0.0 && out.point_estimate > 0.0) || (c < 0.0 && out.point_estimate < 0.0) ||
        (c == 0.0 && out.point_estimate == 0.0))
      ++same;
  }
  out.sign_consistency = static_cast<double>(same) / resamples;
  return out;
}

void ResponderThresholds::validate() const {
  // Infinite cutoffs are allowed: they make a criterion unreachable or automatic.
  if (std::isnan(ti_max) || std::isnan(rom_gain_deg) || std::isnan(reps_gain_per_min))
    throw ValidationError("responder thresholds must be numbers");
  if (std::isfinite(ti_max) && !(ti_max >= 0.0 && ti_max <= 1.0))
    throw ValidationError("TI threshold must be in [0, 1] or infinite");
}

std::string ResponderThresholds::to_string() const {
  std::ostringstream s;
  s << "ti=" << ti_max << ",rom=" << rom_gain_deg << ",reps=" << reps_gain_per_min;
  return s.str();
}

ResponderThresholds ResponderThresholds::parse(const std::string& text) {
  ResponderThresholds t;
  std::stringstream ss(text);
  std::string item;
  std::set<std::string> seen;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("threshold '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != val.size()) throw ValidationError("threshold '" + key + "' has bad value '" + val + "'");
    if (!seen.insert(key).second) throw ValidationError("threshold '" + key + "' given twice");
    if (key == "ti") t.ti_max = v;
    else if (key == "rom") t.rom_gain_deg = v;
    else if (key == "reps") t.reps_gain_per_min = v;
    else throw ValidationError("unknown threshold '" + key + "'");
  }
  t.validate();
  return t;
}

std::vector<ResponderRow> responder_table(const std::vector<SubjectPair>& subjects,
                                          const ResponderThresholds& thresholds) {
  thresholds.validate();
  std::ostringstream ti, rom, reps;
  ti << "assisted TI <= " << thresholds.ti_max;
  rom << "ROM gain >= " << thresholds.rom_gain_deg << " deg";
  reps << "Reps gain >= " << thresholds.reps_gain_per_min << "/min";
  std::vector<ResponderRow> rows = {{ti.str()}, {rom.str()}, {reps.str()}};
  const int n = static_cast<int>(subjects.size());
  for (const auto& s : subjects) {
    if (s.assisted.ti <= thresholds.ti_max) ++rows[0].count;
    if (s.assisted.rom_deg - s.baseline.rom_deg >= thresholds.rom_gain_deg) ++rows[1].count;
    if (s.assisted.reps_per_min - s.baseline.reps_per_min >= thresholds.reps_gain_per_min) ++rows[2].count;
  }
  for (auto& r : rows) {
    r.n = n;
    r.fraction = n > 0 ? static_cast<double>(r.count) / n : 0.0;
  }
  return rows;
}

}  // namespace armassist::stats
