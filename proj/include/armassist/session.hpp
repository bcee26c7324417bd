#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "armassist/types.hpp"

namespace armassist::session {

struct Span {
  double start_s = 0.0;
  double end_s = 0.0;
  bool present = false;
  std::size_t first_sample = 0;
  std::size_t n_samples = 0;

  bool operator==(const Span&) const = default;
};

struct AlignedChannel {
  ChannelConfig config;
  std::vector<Span> spans;
  Eigen::ArrayXd values;  // physical units, NaN inside null spans
};

// All channels placed on the hub clock. Lost data is kept as explicit null spans.
struct AlignedView {
  double start_s = 0.0;
  double end_s = 0.0;
  std::map<ChannelKind, AlignedChannel> channels;

  const AlignedChannel& channel(ChannelKind kind) const;
  bool has(ChannelKind kind) const { return channels.count(kind) > 0; }
};

// Orders packets by sequence number and places them by hub timestamp.
// Duplicate sequence numbers or timestamps running backwards throw CorruptStreamError.
AlignedView synchronize(const std::map<ChannelKind, ChannelStream>& channels);

// Channels whose loss or clipping excludes a session.
bool is_primary(ChannelKind kind);

// Fraction of expected packets that are flagged lost or absent from the sequence.
double missingness(const ChannelStream& stream);

// True when a run of at least three consecutive samples sits at a rail.
bool has_clipping(const ChannelStream& stream);

// Robust z-scores of per-window EMG RMS; windows above the threshold are outliers.
std::vector<std::size_t> mad_outlier_windows(const Eigen::Ref<const Eigen::ArrayXd>& window_rms,
                                             const std::vector<std::size_t>& window_index, double threshold);

QcSummary run_qc(const SessionRecord& record, double mad_threshold = 3.5);

}  // namespace armassist::session
