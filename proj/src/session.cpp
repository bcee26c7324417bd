#include "armassist/session.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "armassist/dsp.hpp"
#include "armassist/errors.hpp"

namespace armassist::session {

namespace {

std::vector<const SamplePacket*> ordered(const ChannelStream& stream, ChannelKind kind) {
  std::vector<const SamplePacket*> p;
  p.reserve(stream.packets.size());
  for (const auto& pk : stream.packets) {
    if (pk.channel != kind)
      throw ValidationError("packet for " + std::string(to_string(pk.channel)) + " filed under " +
                            std::string(to_string(kind)));
    p.push_back(&pk);
  }
  std::stable_sort(p.begin(), p.end(), [](const SamplePacket* a, const SamplePacket* b) { return a->seq < b->seq; });
  for (std::size_t i = 1; i < p.size(); ++i) {
    std::ostringstream msg;
    if (p[i]->seq == p[i - 1]->seq) {
      msg << to_string(kind) << ": duplicate sequence number " << p[i]->seq;
      throw CorruptStreamError(msg.str());
    }
    if (p[i]->hub_timestamp_s < p[i - 1]->hub_timestamp_s) {
      msg << to_string(kind) << ": timestamp runs backwards at sequence " << p[i]->seq;
      throw CorruptStreamError(msg.str());
    }
  }
  return p;
}

}  // namespace

const AlignedChannel& AlignedView::channel(ChannelKind kind) const {
  auto it = channels.find(kind);
  if (it == channels.end()) throw ValidationError("view has no " + std::string(to_string(kind)) + " channel");
  return it->second;
}

AlignedView synchronize(const std::map<ChannelKind, ChannelStream>& channels) {
  AlignedView view;
  if (channels.empty()) return view;
  bool first = true;
  for (const auto& [kind, stream] : channels) {
    for (const auto& pk : stream.packets) {
      if (first || pk.hub_timestamp_s < view.start_s) view.start_s = pk.hub_timestamp_s;
      first = false;
    }
  }
  view.end_s = view.start_s;
  for (const auto& [kind, stream] : channels) {
    stream.config.validate();
    const auto packets = ordered(stream, kind);
    const double rate = stream.config.sample_rate_hz;
    const auto spp = static_cast<std::size_t>(stream.config.samples_per_packet);

    std::size_t total = 0;
    std::vector<std::size_t> offsets(packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) {
      const auto* pk = packets[i];
      const double pos = (pk->hub_timestamp_s - view.start_s) * rate;
      offsets[i] = static_cast<std::size_t>(std::llround(pos));
      const std::size_t n = pk->loss_flag ? spp : pk->payload.size();
      if (i > 0 && offsets[i] < offsets[i - 1] + (packets[i - 1]->loss_flag ? spp : packets[i - 1]->payload.size()))
        throw CorruptStreamError(std::string(to_string(kind)) + ": packets overlap at sequence " +
                                 std::to_string(pk->seq));
      total = std::max(total, offsets[i] + n);
    }

    AlignedChannel ch;
    ch.config = stream.config;
    ch.values = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(total), std::nan(""));
    for (std::size_t i = 0; i < packets.size(); ++i) {
      const auto* pk = packets[i];
      if (pk->loss_flag) continue;
      for (std::size_t j = 0; j < pk->payload.size(); ++j)
        ch.values[static_cast<Eigen::Index>(offsets[i] + j)] = pk->payload[j] * stream.config.lsb;
    }
    for (std::size_t i = 0; i < total;) {
      const bool present = std::isfinite(ch.values[static_cast<Eigen::Index>(i)]);
      std::size_t j = i;
      while (j < total && std::isfinite(ch.values[static_cast<Eigen::Index>(j)]) == present) ++j;
      ch.spans.push_back({view.start_s + i / rate, view.start_s + j / rate, present, i, j - i});
      i = j;
    }
    view.end_s = std::max(view.end_s, view.start_s + total / rate);
    view.channels.emplace(kind, std::move(ch));
  }
  return view;
}

bool is_primary(ChannelKind kind) { return kind != ChannelKind::imu_gyro; }

double missingness(const ChannelStream& stream) {
  if (stream.packets.empty()) return 1.0;
  std::uint64_t lo = stream.packets.front().seq, hi = lo;
  std::size_t received = 0;
  std::set<std::uint64_t> seen;
  for (const auto& pk : stream.packets) {
    lo = std::min(lo, pk.seq);
    hi = std::max(hi, pk.seq);
    if (!pk.loss_flag && seen.insert(pk.seq).second) ++received;
  }
  const double expected = static_cast<double>(hi - lo + 1);
  return 1.0 - static_cast<double>(received) / expected;
}

bool has_clipping(const ChannelStream& stream) {
  std::vector<const SamplePacket*> p;
  for (const auto& pk : stream.packets) p.push_back(&pk);
  std::stable_sort(p.begin(), p.end(), [](const SamplePacket* a, const SamplePacket* b) { return a->seq < b->seq; });
  const auto hi = stream.config.max_count(), lo = stream.config.min_count();
  int run = 0;
  std::int32_t rail = 0;
  std::uint64_t prev_seq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->loss_flag || (i > 0 && p[i]->seq != prev_seq + 1)) run = 0;
    prev_seq = p[i]->seq;
    for (auto v : p[i]->payload) {
      if (v == hi || v == lo) {
        run = (run > 0 && v == rail) ? run + 1 : 1;
        rail = v;
        if (run >= 3) return true;
      } else {
        run = 0;
      }
    }
  }
  return false;
}

std::vector<std::size_t> mad_outlier_windows(const Eigen::Ref<const Eigen::ArrayXd>& window_rms,
                                             const std::vector<std::size_t>& window_index, double threshold) {
  if (static_cast<std::size_t>(window_rms.size()) != window_index.size())
    throw ValidationError("window RMS and index lists differ in length");
  if (!(threshold > 0.0)) throw ValidationError("MAD threshold must be positive");
  std::vector<std::size_t> out;
  if (window_rms.size() < 3) return out;
  auto median = [](std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
  };
  std::vector<double> x(window_rms.data(), window_rms.data() + window_rms.size());
  const double med = median(x);
  std::vector<double> dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = std::abs(x[i] - med);
  const double mad = median(dev);
  if (!(mad > 0.0)) return out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(0.6745 * (x[i] - med) / mad) > threshold) out.push_back(window_index[i]);
  }
  return out;
}

QcSummary run_qc(const SessionRecord& record, double mad_threshold) {
  QcSummary qc;
  qc.impedance_ok = record.impedance_ok;
  std::vector<std::string> reasons;
  for (const auto& [kind, stream] : record.channels) {
    qc.missingness[kind] = missingness(stream);
    qc.clipping[kind] = has_clipping(stream);
    if (!is_primary(kind)) continue;
    if (qc.missingness[kind] > 0.05) {
      std::ostringstream msg;
      msg << to_string(kind) << " missingness " << qc.missingness[kind];
      reasons.push_back(msg.str());
    }
    if (qc.clipping[kind]) reasons.push_back(std::string(to_string(kind)) + " clipping");
  }
  if (!record.impedance_ok) reasons.push_back("impedance check failed");

  const auto view = synchronize(record.channels);
  std::set<std::size_t> flagged;
  for (const auto& [kind, ch] : view.channels) {
    if (!is_emg(kind)) continue;
    const auto windows = dsp::windowize(ch.values, ch.config.sample_rate_hz);
    std::vector<double> rms;
    std::vector<std::size_t> index;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto& w = windows[k].samples;
      if (!w.allFinite()) continue;
      rms.push_back(std::sqrt(w.square().mean()));
      index.push_back(k);
    }
    const auto out = mad_outlier_windows(Eigen::Map<const Eigen::ArrayXd>(rms.data(), static_cast<Eigen::Index>(rms.size())),
                                         index, mad_threshold);
    flagged.insert(out.begin(), out.end());
  }
  qc.outlier_window_indices.assign(flagged.begin(), flagged.end());
  qc.excluded = !reasons.empty();
  for (std::size_t i = 0; i < reasons.size(); ++i) qc.exclusion_reason += (i ? "; " : "") + reasons[i];
  return qc;
}

}  // namespace armassist::session
