#include "evgraph/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evgraph/error.hpp"
#include "evgraph/rng.hpp"

namespace evg::events {

using json = nlohmann::json;

void validate_stream(const EventStream& s) {
  std::uint64_t prev_t = 0;
  for (size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x >= s.sensor_width || e.y >= s.sensor_height)
      raise(ErrorCode::InvalidArgument,
            "event " + std::to_string(i) + " out of sensor bounds");
    if (e.p != 1 && e.p != -1)
      raise(ErrorCode::InvalidArgument, "event " + std::to_string(i) + " has polarity " +
                                            std::to_string(int(e.p)));
    if (e.t < prev_t)
      raise(ErrorCode::InvalidArgument,
            "event " + std::to_string(i) + " breaks timestamp ordering");
    prev_t = e.t;
  }
  if (!s.events.empty() && s.duration < s.events.back().t)
    raise(ErrorCode::InvalidArgument, "duration is below the last event timestamp");
}

PatternKind pattern_kind_from_string(const std::string& name) {
  if (name == "moving_bar") return PatternKind::MovingBar;
  if (name == "moving_dot") return PatternKind::MovingDot;
  if (name == "two_object") return PatternKind::TwoObject;
  if (name == "stagnation") return PatternKind::Stagnation;
  raise(ErrorCode::InvalidArgument, "unknown pattern kind: " + name);
}

const char* pattern_kind_name(PatternKind kind) {
  switch (kind) {
    case PatternKind::MovingBar: return "moving_bar";
    case PatternKind::MovingDot: return "moving_dot";
    case PatternKind::TwoObject: return "two_object";
    case PatternKind::Stagnation: return "stagnation";
  }
  return "?";
}

namespace {

constexpr int kBarThickness = 3;
constexpr int kDotSide = 3;

double wrap(double x, double extent) {
  x = std::fmod(x, extent);
  if (x < 0) x += extent;
  return x;
}

struct MovingShape {
  // Dominant axis: true when motion is along x (bar spans full height).
  bool along_x = true;
  double speed = 0.0;     // signed pixels/ms along the dominant axis
  double start = 0.0;     // leading-edge start position, pixels
  double cross_speed = 0.0;  // minor-axis drift for dots
  double cross_start = 0.0;
  int thickness = kBarThickness;
  int cross_size = 0;  // 0: spans the sensor (bar); else dot side length

  // Leading-edge position at time t (ms), wrapped.
  double lead(double t_ms, double extent) const {
    return wrap(start + speed * t_ms, extent);
  }
};

MovingShape make_shape(const PatternSpec& spec, int width, int height, bool dot,
                       double start_fraction) {
  MovingShape sh;
  sh.along_x = std::abs(spec.velocity_x) >= std::abs(spec.velocity_y);
  const double extent = sh.along_x ? width : height;
  sh.speed = sh.along_x ? spec.velocity_x : spec.velocity_y;
  double frac = start_fraction;
  if (frac < 0) frac = sh.speed >= 0 ? 0.25 : 0.75;
  sh.start = frac * extent;
  if (dot) {
    sh.cross_size = kDotSide;
    sh.thickness = kDotSide;
    sh.cross_speed = sh.along_x ? spec.velocity_y : spec.velocity_x;
    sh.cross_start = 0.5 * (sh.along_x ? height : width);
  }
  return sh;
}

// Emit one edge event of the shape at time t. Positive polarity sits on the
// leading edge, negative on the trailing edge.
Event shape_event(const MovingShape& sh, double t_ms, bool leading, Rng& rng, int width,
                  int height) {
  const double extent = sh.along_x ? width : height;
  const double cross_extent = sh.along_x ? height : width;
  const double lead = sh.lead(t_ms, extent);
  double axis_pos = leading ? lead : wrap(lead - (sh.speed >= 0 ? sh.thickness : -sh.thickness),
                                          extent);
  int cross_lo = 0;
  int cross_hi = static_cast<int>(cross_extent);
  if (sh.cross_size > 0) {
    const double c = wrap(sh.cross_start + sh.cross_speed * t_ms, cross_extent);
    cross_lo = static_cast<int>(c);
    cross_hi = std::min(cross_lo + sh.cross_size, static_cast<int>(cross_extent));
  }
  const int cross = cross_lo + static_cast<int>(rng.uniform_int(
                                   std::max(1, cross_hi - cross_lo)));
  int a = static_cast<int>(axis_pos);
  a = std::min(a, static_cast<int>(extent) - 1);
  Event e;
  e.x = static_cast<std::uint16_t>(sh.along_x ? a : cross);
  e.y = static_cast<std::uint16_t>(sh.along_x ? cross : a);
  e.p = leading ? 1 : -1;
  return e;
}

std::vector<double> sorted_uniform_times(Rng& rng, std::uint64_t n, double duration_ms) {
  std::vector<double> t(n);
  for (auto& x : t) x = rng.uniform() * duration_ms;
  std::sort(t.begin(), t.end());
  return t;
}

}  // namespace

EventStream generate_pattern(const PatternSpec& spec, int width, int height) {
  if (spec.duration_ms <= 0)
    raise(ErrorCode::InvalidArgument, "pattern duration must be positive");
  if (spec.event_rate < 0 || spec.noise_rate < 0)
    raise(ErrorCode::InvalidArgument, "pattern rates must be non-negative");
  if (width < 8 || height < 8)
    raise(ErrorCode::InvalidArgument, "sensor must be at least 8x8");
  if (spec.kind == PatternKind::Stagnation &&
      !(0.0 <= spec.stall_begin && spec.stall_begin <= spec.stall_end && spec.stall_end <= 1.0))
    raise(ErrorCode::InvalidArgument, "stall window must satisfy 0 <= begin <= end <= 1");

  EventStream out;
  out.sensor_width = static_cast<std::uint16_t>(width);
  out.sensor_height = static_cast<std::uint16_t>(height);
  const auto duration_us = static_cast<std::uint64_t>(std::llround(spec.duration_ms * 1000.0));
  out.duration = duration_us;

  Rng rng(mix_seed(spec.seed, 0x65766731ULL));

  std::vector<MovingShape> shapes;
  const bool dot = spec.kind == PatternKind::MovingDot || spec.kind == PatternKind::TwoObject;
  shapes.push_back(make_shape(spec, width, height, dot, spec.start_fraction));
  if (spec.kind == PatternKind::TwoObject) {
    // Counter-moving second object; the first occludes it on overlap.
    PatternSpec mirrored = spec;
    mirrored.velocity_x = -spec.velocity_x;
    mirrored.velocity_y = -spec.velocity_y;
    double frac = spec.start_fraction;
    shapes.push_back(make_shape(mirrored, width, height, true,
                                frac < 0 ? -1.0 : 1.0 - frac));
  }

  const auto n_pattern = static_cast<std::uint64_t>(
      std::llround(spec.event_rate * spec.duration_ms));
  const auto n_noise = static_cast<std::uint64_t>(
      std::llround(spec.noise_rate * spec.duration_ms));

  std::vector<Event> pattern;
  pattern.reserve(n_pattern);
  const std::vector<double> times = sorted_uniform_times(rng, n_pattern, spec.duration_ms);
  for (double t_raw : times) {
    // Quantize first: geometry is a function of the stored microsecond stamp.
    const std::uint64_t t_us = std::min<std::uint64_t>(
        static_cast<std::uint64_t>(t_raw * 1000.0), duration_us > 0 ? duration_us - 1 : 0);
    const double t_ms = static_cast<double>(t_us) / 1000.0;
    const double phase = t_ms / spec.duration_ms;
    if (spec.kind == PatternKind::Stagnation && phase >= spec.stall_begin &&
        phase < spec.stall_end)
      continue;  // motion stalls, no pattern events
    const size_t which = shapes.size() > 1 ? rng.uniform_int(shapes.size()) : 0;
    const bool leading = rng.coin();
    if (which == 1) {
      // Occlusion: skip the second object while the two overlap on the
      // dominant axis.
      const double extent = shapes[0].along_x ? width : height;
      const double d = std::abs(shapes[0].lead(t_ms, extent) - shapes[1].lead(t_ms, extent));
      if (std::min(d, extent - d) < kDotSide) continue;
    }
    Event e = shape_event(shapes[which], t_ms, leading, rng, width, height);
    e.t = t_us;
    pattern.push_back(e);
  }

  std::vector<Event> noise;
  noise.reserve(n_noise);
  for (double t_ms : sorted_uniform_times(rng, n_noise, spec.duration_ms)) {
    Event e;
    e.x = static_cast<std::uint16_t>(rng.uniform_int(width));
    e.y = static_cast<std::uint16_t>(rng.uniform_int(height));
    e.p = rng.coin() ? 1 : -1;
    e.t = std::min<std::uint64_t>(static_cast<std::uint64_t>(t_ms * 1000.0),
                                  duration_us > 0 ? duration_us - 1 : 0);
    noise.push_back(e);
  }

  out.events.resize(pattern.size() + noise.size());
  std::merge(pattern.begin(), pattern.end(), noise.begin(), noise.end(), out.events.begin(),
             [](const Event& a, const Event& b) { return a.t < b.t; });
  validate_stream(out);
  return out;
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'G', '1'};
constexpr size_t kRecordSize = 14;  // u64 t + u16 x + u16 y + i8 p + u8 pad

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

[[noreturn]] void format_error(const std::string& path, size_t offset, const std::string& what) {
  raise(ErrorCode::Format,
        path + ": " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

void write_events(const EventStream& stream, const std::string& path) {
  validate_stream(stream);
  std::string buf;
  buf.reserve(16 + kRecordSize * stream.events.size());
  buf.append(kMagic, 4);
  put_u16(buf, stream.sensor_width);
  put_u16(buf, stream.sensor_height);
  put_u64(buf, stream.events.size());
  for (const Event& e : stream.events) {
    put_u64(buf, e.t);
    put_u16(buf, e.x);
    put_u16(buf, e.y);
    buf.push_back(static_cast<char>(e.p));
    buf.push_back('\0');
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::Io, "cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) raise(ErrorCode::Io, "write failed: " + path);
}

EventStream read_events(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::Io, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < 16) format_error(path, buf.size(), "truncated header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) format_error(path, 0, "bad magic");

  EventStream s;
  s.sensor_width = get_u16(p + 4);
  s.sensor_height = get_u16(p + 6);
  const std::uint64_t count = get_u64(p + 8);
  if (buf.size() != 16 + kRecordSize * count)
    format_error(path, buf.size(), "truncated event records");

  s.events.resize(count);
  std::uint64_t prev_t = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const size_t off = 16 + kRecordSize * i;
    const unsigned char* r = p + off;
    Event& e = s.events[i];
    e.t = get_u64(r);
    e.x = get_u16(r + 8);
    e.y = get_u16(r + 10);
    e.p = static_cast<std::int8_t>(r[12]);
    if (e.t < prev_t) format_error(path, off, "non-monotone timestamp");
    if (e.p != 1 && e.p != -1) format_error(path, off + 12, "bad polarity");
    if (e.x >= s.sensor_width || e.y >= s.sensor_height)
      format_error(path, off + 8, "coordinate out of sensor bounds");
    prev_t = e.t;
  }
  s.duration = s.max_t();
  return s;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::Io, "cannot open for writing: " + path);
  json header;
  header["class_names"] = manifest.class_names;
  header["split"] = manifest.split;
  f << header.dump() << "\n";
  for (const auto& e : manifest.entries) {
    json line;
    line["path"] = e.path;
    line["label"] = e.label;
    f << line.dump() << "\n";
  }
  if (!f) raise(ErrorCode::Io, "write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::Io, "cannot open: " + path);
  DatasetManifest m;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      raise(ErrorCode::Format, path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    if (line_no == 1) {
      if (!j.contains("class_names"))
        raise(ErrorCode::Format, path + ": first line must carry class_names");
      m.class_names = j["class_names"].get<std::vector<std::string>>();
      m.split = j.value("split", "");
      continue;
    }
    ManifestEntry e;
    e.path = j.at("path").get<std::string>();
    e.label = j.at("label").get<int>();
    if (e.label < 0 || e.label >= static_cast<int>(m.class_names.size()))
      raise(ErrorCode::Format,
            path + ":" + std::to_string(line_no) + ": label out of range");
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest,
                                                           double train_fraction,
                                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    raise(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");

  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    by_class[manifest.entries[i].label].push_back(i);

  DatasetManifest train{{}, manifest.class_names, "train"};
  DatasetManifest test{{}, manifest.class_names, "test"};
  Rng rng(mix_seed(seed, 0x73706c69ULL));
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      raise(ErrorCode::InvalidArgument,
            "class " + std::to_string(label) + " has fewer than 2 samples");
    // Fisher-Yates with the shared rng; deterministic in seed.
    for (size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    const auto n = static_cast<long>(idx.size());
    long n_train = std::llround(train_fraction * static_cast<double>(n));
    n_train = std::clamp(n_train, 1L, n - 1);
    for (long i = 0; i < n; ++i)
      (i < n_train ? train : test).entries.push_back(manifest.entries[idx[i]]);
  }
  return {train, test};
}

}  // namespace evg::events
