#include <cstdio>

#include <fstream>

#include "evgraph/error.hpp"
#include "evgraph/harness.hpp"

namespace evg::harness {

using nlohmann::json;

json default_config_json() {
  json j;
  j["dataset"] = {
      {"root", "data/default"},
      {"sensor_width", 32},
      {"sensor_height", 32},
      {"samples_per_class", 50},
      {"train_fraction", 0.8},
      {"duration_ms", 80.0},
      {"event_rate", 30.0},
      {"noise_rate", 2.0},
      {"speed_jitter", 0.15},
      {"seed", 7},
      {"classes",
       json::array({{{"name", "right"}, {"kind", "moving_bar"}, {"velocity", {0.25, 0.0}}},
                    {{"name", "left"}, {"kind", "moving_bar"}, {"velocity", {-0.25, 0.0}}},
                    {{"name", "down"}, {"kind", "moving_bar"}, {"velocity", {0.0, 0.25}}},
                    {{"name", "up"}, {"kind", "moving_bar"}, {"velocity", {0.0, -0.25}}}})},
  };
  j["representation"] = {
      {"voxel",
       {{"v_x", 5}, {"v_y", 5}, {"v_t_ms", 25.0}, {"n_vertices", 512}, {"normalize", true}}},
      {"grid", {{"bins", 8}, {"height", 24}, {"width", 24}}},
  };
  j["student"] = {
      {"layers",
       json::array({{{"d_in_u", 3}, {"d_in_f", 25}, {"d_out_f", 64}, {"n_neighbors", 20}},
                    {{"d_in_u", 25}, {"d_in_f", 64}, {"d_out_f", 64}, {"n_neighbors", 20}},
                    {{"d_in_u", 64}, {"d_in_f", 64}, {"d_out_f", 128}, {"n_neighbors", 20}}})},
      {"head_width", 128},
      {"hidden_mult", 4},
      {"variant", "C"},
      {"rel_relative", false},
  };
  j["teacher"] = {
      {"channels", {16, 32, 64}},
      {"blocks_per_stage", 1},
      {"taps", 3},
      {"weights", ""},
      {"init_weights", ""},
  };
  j["distill"] = {
      {"enabled", false}, {"variant", "C"},           {"lambda", 0.5},
      {"kd_temperature", 4.0}, {"ntxent_temperature", 0.5}, {"taps", 3},
  };
  j["optimizer"] = {
      {"epochs", 30},
      {"batch_size", 32},
      {"sgd", {{"lr_max", 0.1}, {"lr_min", 1e-4}}},
      {"adam", {{"lr", 1e-4}, {"halve_every", 20}}},
  };
  j["run"] = {
      {"seed", 1},       {"num_seeds", 1},    {"jobs", 0},
      {"precision", "f32"}, {"out_root", "runs"}, {"name", ""},
  };
  return j;
}

namespace {

void deep_merge(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

}  // namespace

void apply_override(json& config, const std::string& dotted_assignment) {
  const auto eq = dotted_assignment.find('=');
  if (eq == std::string::npos)
    raise(ErrorCode::InvalidArgument,
          "override must look like section.key=value: " + dotted_assignment);
  const std::string path = dotted_assignment.substr(0, eq);
  const std::string raw = dotted_assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings are allowed unquoted
  }
  json* node = &config;
  size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty())
      raise(ErrorCode::InvalidArgument, "bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig config_from_json(const json& user) {
  json j = default_config_json();
  deep_merge(j, user);

  RunConfig cfg;
  cfg.resolved = j;
  try {
    const json& d = j.at("dataset");
    cfg.dataset.root = d.at("root").get<std::string>();
    cfg.dataset.sensor_width = d.at("sensor_width").get<int>();
    cfg.dataset.sensor_height = d.at("sensor_height").get<int>();
    cfg.dataset.samples_per_class = d.at("samples_per_class").get<int>();
    cfg.dataset.train_fraction = d.at("train_fraction").get<double>();
    cfg.dataset.duration_ms = d.at("duration_ms").get<double>();
    cfg.dataset.event_rate = d.at("event_rate").get<double>();
    cfg.dataset.noise_rate = d.at("noise_rate").get<double>();
    cfg.dataset.speed_jitter = d.at("speed_jitter").get<double>();
    cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
    for (const auto& c : d.at("classes")) {
      ClassSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.kind = events::pattern_kind_from_string(c.at("kind").get<std::string>());
      const auto vel = c.at("velocity").get<std::vector<double>>();
      if (vel.size() != 2)
        raise(ErrorCode::Config, "class velocity must have two components");
      spec.velocity_x = vel[0];
      spec.velocity_y = vel[1];
      if (c.contains("event_rate")) spec.event_rate = c["event_rate"].get<double>();
      if (c.contains("noise_rate")) spec.noise_rate = c["noise_rate"].get<double>();
      if (c.contains("stall")) {
        const auto stall = c["stall"].get<std::vector<double>>();
        if (stall.size() != 2) raise(ErrorCode::Config, "class stall must be [begin, end]");
        spec.stall_begin = stall[0];
        spec.stall_end = stall[1];
      }
      cfg.dataset.classes.push_back(std::move(spec));
    }

    const json& r = j.at("representation");
    cfg.voxel.v_x = r.at("voxel").at("v_x").get<int>();
    cfg.voxel.v_y = r.at("voxel").at("v_y").get<int>();
    cfg.voxel.v_t_ms = r.at("voxel").at("v_t_ms").get<double>();
    cfg.voxel.n_vertices = r.at("voxel").at("n_vertices").get<int>();
    cfg.voxel.normalize = r.at("voxel").at("normalize").get<bool>();
    cfg.grid_bins = r.at("grid").at("bins").get<int>();
    cfg.grid_height = r.at("grid").at("height").get<int>();
    cfg.grid_width = r.at("grid").at("width").get<int>();

    const json& s = j.at("student");
    cfg.student.layers.clear();
    for (const auto& l : s.at("layers"))
      cfg.student.layers.push_back({l.at("d_in_u").get<int>(), l.at("d_in_f").get<int>(),
                                    l.at("d_out_f").get<int>(), l.at("n_neighbors").get<int>()});
    cfg.student.head_width = s.at("head_width").get<int>();
    cfg.student.hidden_mult = s.at("hidden_mult").get<int>();
    cfg.student.variant = edgcn::variant_from_string(s.at("variant").get<std::string>());
    cfg.student.rel_relative = s.at("rel_relative").get<bool>();
    cfg.student.input_width = cfg.voxel.input_width();

    const json& t = j.at("teacher");
    cfg.teacher.channels = t.at("channels").get<std::vector<int>>();
    cfg.teacher.blocks_per_stage = t.at("blocks_per_stage").get<int>();
    cfg.teacher.taps = t.at("taps").get<int>();
    cfg.teacher.bins = cfg.grid_bins;
    cfg.teacher_weights = t.at("weights").get<std::string>();
    cfg.teacher_init_weights = t.at("init_weights").get<std::string>();

    const json& di = j.at("distill");
    cfg.distill.enabled = di.at("enabled").get<bool>();
    cfg.distill.variant = distill::distill_variant_from_string(di.at("variant").get<std::string>());
    cfg.distill.lambda = di.at("lambda").get<double>();
    cfg.distill.kd_temperature = di.at("kd_temperature").get<double>();
    cfg.distill.ntxent_temperature = di.at("ntxent_temperature").get<double>();
    cfg.distill.taps = di.at("taps").get<int>();
    cfg.distill.validate();

    const json& o = j.at("optimizer");
    cfg.epochs = o.at("epochs").get<int>();
    cfg.batch_size = o.at("batch_size").get<int>();
    cfg.sgd.lr_max = o.at("sgd").at("lr_max").get<double>();
    cfg.sgd.lr_min = o.at("sgd").at("lr_min").get<double>();
    cfg.adam.lr = o.at("adam").at("lr").get<double>();
    cfg.adam.halve_every = o.at("adam").at("halve_every").get<int>();

    const json& run = j.at("run");
    cfg.run.seed = run.at("seed").get<std::uint64_t>();
    cfg.run.num_seeds = run.at("num_seeds").get<int>();
    cfg.run.jobs = run.at("jobs").get<int>();
    const std::string prec = run.at("precision").get<std::string>();
    if (prec == "f32")
      cfg.run.precision = Precision::F32;
    else if (prec == "f64")
      cfg.run.precision = Precision::F64;
    else
      raise(ErrorCode::Config, "run.precision must be f32 or f64");
    cfg.run.out_root = run.at("out_root").get<std::string>();
    cfg.run.name = run.at("name").get<std::string>();
  } catch (const json::exception& ex) {
    raise(ErrorCode::Config, std::string("config: ") + ex.what());
  }

  if (cfg.epochs < 1) raise(ErrorCode::Config, "optimizer.epochs must be >= 1");
  if (cfg.batch_size < 1) raise(ErrorCode::Config, "optimizer.batch_size must be >= 1");
  if (cfg.distill.enabled && cfg.distill.taps > 0 && cfg.batch_size < 2)
    raise(ErrorCode::Config, "batch_size must be >= 2 when NT-Xent is enabled");
  if (cfg.run.num_seeds < 1) raise(ErrorCode::Config, "run.num_seeds must be >= 1");
  if (!(cfg.dataset.train_fraction > 0 && cfg.dataset.train_fraction < 1))
    raise(ErrorCode::Config, "dataset.train_fraction must lie in (0, 1)");
  return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json user;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) raise(ErrorCode::Io, "cannot open config: " + path);
    try {
      f >> user;
    } catch (const json::exception& ex) {
      raise(ErrorCode::Format, path + ": " + ex.what());
    }
  } else {
    user = json::object();
  }
  for (const auto& o : overrides) apply_override(user, o);
  return config_from_json(user);
}

std::string config_hash(const nlohmann::json& resolved) {
  const std::string s = resolved.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);  // first 8 hex digits are plenty
}

}  // namespace evg::harness
