#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evg::events {

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint64_t t = 0;  // microseconds
  std::int8_t p = 1;    // polarity, -1 or +1

  bool operator==(const Event&) const = default;
};

struct EventStream {
  std::vector<Event> events;  // sorted by t, non-decreasing
  std::uint16_t sensor_width = 0;
  std::uint16_t sensor_height = 0;
  std::uint64_t duration = 0;  // microseconds, >= max event t

  bool operator==(const EventStream&) const = default;
  std::uint64_t max_t() const { return events.empty() ? 0 : events.back().t; }
};

// Throws on violated invariants (coordinates, polarity, ordering, duration).
void validate_stream(const EventStream& s);

enum class PatternKind { MovingBar, MovingDot, TwoObject, Stagnation };

PatternKind pattern_kind_from_string(const std::string& name);
const char* pattern_kind_name(PatternKind kind);

// Synthetic labeled pattern. Streams are a pure function of (spec, width,
// height). Moving shapes emit +1 on the leading edge and -1 on the trailing
// edge; `Stagnation` is a moving bar that emits no pattern events while
// t/duration lies in [stall_begin, stall_end) (noise keeps running).
//
// Geometry contract (relied on by trajectory tests): bars are 3 px thick and
// span the sensor across the motion axis; dots are 3x3 px. The leading-edge
// position at time t (ms) along the dominant motion axis is
//   pos(t) = start_fraction * extent + velocity * t   (wrapped into [0, extent))
// with the default start_fraction 0.25 for positive velocity and 0.75 for
// negative velocity.
struct PatternSpec {
  PatternKind kind = PatternKind::MovingBar;
  double velocity_x = 0.0;  // pixels per ms
  double velocity_y = 0.0;
  double duration_ms = 0.0;
  double event_rate = 0.0;  // pattern events per ms
  double noise_rate = 0.0;  // uniform noise events per ms
  std::uint64_t seed = 0;
  double start_fraction = -1.0;  // <0 selects the velocity-sign default
  double stall_begin = 0.4;      // Stagnation only, fractions of duration
  double stall_end = 0.6;
};

EventStream generate_pattern(const PatternSpec& spec, int width, int height);

// Bit-exact little-endian container: magic "EVG1", u16 width, u16 height,
// u64 count, then per event u64 t, u16 x, u16 y, i8 p, u8 pad.
// The recording duration is not part of the format; read_events returns a
// stream with duration == max event t.
void write_events(const EventStream& stream, const std::string& path);
EventStream read_events(const std::string& path);

struct ManifestEntry {
  std::string path;
  int label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::string split;  // "train", "test", ...
};

// JSON-lines: header {"class_names":[...],"split":...}, then one
// {"path":...,"label":...} per line.
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Stratified split, deterministic in seed. Every class keeps at least one
// sample on each side and deviates from train_fraction by < 1 sample.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest,
                                                           double train_fraction,
                                                           std::uint64_t seed);

}  // namespace evg::events
