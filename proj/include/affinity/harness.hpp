#pragma once

// Experiment runner: builds a fresh cluster per repetition, replays the
// pipeline trace, and turns the store and run logs into per-frame latency
// records and summaries.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "affinity/compute.hpp"
#include "affinity/core.hpp"
#include "affinity/error.hpp"
#include "affinity/netsim.hpp"
#include "affinity/simulator.hpp"
#include "affinity/store.hpp"
#include "affinity/workload.hpp"

namespace affinity::harness {

using rcp::LayoutShape;
using rcp::PerStep;
using rcp::Strategy;
using rcp::WorkloadConfig;

struct ExperimentConfig {
  std::string name = "experiment";
  LayoutShape layout;
  PerStep replication;
  PerStep workers;
  Strategy strategy = Strategy::Affinity;
  bool cache_enabled = true;
  std::optional<std::uint64_t> cache_capacity_bytes;
  LinkModel link;
  WorkloadConfig workload;
  std::uint32_t repetitions = 3;
  std::uint64_t rng_seed = 1;
  std::string output_dir = "out";
  std::optional<std::string> trace_file;  // replay this trace instead of generating one

  // "x/y/z", with "@rN" (or "@rA,B,C") appended when any pool is replicated.
  std::string layout_label() const {
    std::string s = layout.str();
    if (replication == PerStep{}) return s;
    if (replication.uniform()) return s + "@r" + std::to_string(replication.mot);
    return s + "@r" + std::to_string(replication.mot) + "," + std::to_string(replication.pred) + "," +
           std::to_string(replication.cd);
  }

  void validate() const {
    if (name.empty()) throw Error(ErrorCode::BadConfig, "name must not be empty");
    for (char c : name) {
      bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                c == '_' || c == '.';
      if (!ok) throw Error(ErrorCode::BadConfig, "name '" + name + "' may only use [A-Za-z0-9._-]");
    }
    if (repetitions < 1) throw Error(ErrorCode::BadConfig, "repetitions must be >= 1");
    if (replication.mot < 1 || replication.pred < 1 || replication.cd < 1) {
      throw Error(ErrorCode::BadConfig, "replication must be >= 1");
    }
    if (workers.mot < 1 || workers.pred < 1 || workers.cd < 1) throw Error(ErrorCode::BadConfig, "workers must be >= 1");
    if (cache_capacity_bytes && *cache_capacity_bytes == 0) {
      throw Error(ErrorCode::BadConfig, "cache_capacity_bytes must be > 0 (omit it for unbounded)");
    }
    link.validate();
    workload.validate();
  }
};

// ---------------------------------------------------------------------------
// Config file (JSON)

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, std::string(where) + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw Error(ErrorCode::BadConfig, "unknown field '" + std::string(where) + "." + k + "'");
    }
  }
}

template <class T>
void read(const json& j, std::string_view key, T& out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw Error(ErrorCode::BadConfig, "");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw Error(ErrorCode::BadConfig, "");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw Error(ErrorCode::BadConfig, "");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadConfig, "field '" + std::string(key) + "' has the wrong type");
  }
}

inline PerStep read_per_step(const json& j, std::string_view key, PerStep def) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return def;
  if (it->is_number_unsigned()) {
    auto v = it->get<std::uint32_t>();
    return PerStep{v, v, v};
  }
  check_keys(*it, key, {"mot", "pred", "cd"});
  read(*it, "mot", def.mot);
  read(*it, "pred", def.pred);
  read(*it, "cd", def.cd);
  return def;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline WorkloadConfig parse_workload(const json& j) {
  check_keys(j, "workload",
             {"clients", "fps", "frames", "warmup_discard", "p", "q", "frame_bytes", "state_bytes", "position_bytes",
              "prediction_bytes", "cd_bytes", "collision_probability", "actors", "service", "frames_mode"});
  WorkloadConfig w;
  read(j, "clients", w.clients);
  read(j, "fps", w.fps);
  read(j, "frames", w.frames);
  read(j, "warmup_discard", w.warmup_discard);
  read(j, "p", w.p);
  read(j, "q", w.q);
  read(j, "frame_bytes", w.frame_bytes);
  read(j, "position_bytes", w.position_bytes);
  if (j.contains("prediction_bytes") && !j.at("prediction_bytes").is_null()) {
    std::uint64_t v = 0;
    read(j, "prediction_bytes", v);
    w.prediction_bytes = v;
  }
  read(j, "cd_bytes", w.cd_bytes);
  read(j, "collision_probability", w.collision_probability);
  if (j.contains("state_bytes")) {
    const auto& s = j.at("state_bytes");
    check_keys(s, "workload.state_bytes", {"base_bytes", "per_actor_bytes", "cap_bytes"});
    read(s, "base_bytes", w.state.base_bytes);
    read(s, "per_actor_bytes", w.state.per_actor_bytes);
    read(s, "cap_bytes", w.state.cap_bytes);
  }
  if (j.contains("actors")) {
    const auto& a = j.at("actors");
    check_keys(a, "workload.actors", {"max_concurrent", "arrival_rate", "mean_lifetime_frames"});
    read(a, "max_concurrent", w.actors.max_concurrent);
    read(a, "arrival_rate", w.actors.arrival_rate);
    read(a, "mean_lifetime_frames", w.actors.mean_lifetime_frames);
  }
  if (j.contains("service")) {
    const auto& s = j.at("service");
    check_keys(s, "workload.service", {"mot_base_us", "mot_per_actor_us", "pred_us", "cd_per_pair_us"});
    read(s, "mot_base_us", w.service.mot_base_us);
    read(s, "mot_per_actor_us", w.service.mot_per_actor_us);
    read(s, "pred_us", w.service.pred_us);
    read(s, "cd_per_pair_us", w.service.cd_per_pair_us);
  }
  if (j.contains("frames_mode")) {
    std::string m;
    read(j, "frames_mode", m);
    m = upper(m);
    if (m == "VOLATILE") w.frames_mode = PutMode::Volatile;
    else if (m == "TRIGGER") w.frames_mode = PutMode::Trigger;
    else throw Error(ErrorCode::BadConfig, "frames_mode must be VOLATILE or TRIGGER");
  }
  return w;
}

}  // namespace detail

// `base_dir` resolves a relative trace_file.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read;
  detail::check_keys(j, "config",
                     {"name", "layout", "replication", "workers", "strategy", "cache_enabled", "cache_capacity_bytes",
                      "link", "repetitions", "rng_seed", "output_dir", "trace_file", "workload"});
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("layout")) {
    std::string l;
    read(j, "layout", l);
    c.layout = LayoutShape::parse(l);
  }
  c.replication = detail::read_per_step(j, "replication", c.replication);
  c.workers = detail::read_per_step(j, "workers", c.workers);
  if (j.contains("strategy")) {
    std::string s;
    read(j, "strategy", s);
    s = detail::upper(s);
    if (s == "RANDOM") c.strategy = Strategy::Random;
    else if (s == "AFFINITY") c.strategy = Strategy::Affinity;
    else throw Error(ErrorCode::BadConfig, "strategy must be RANDOM or AFFINITY");
  }
  read(j, "cache_enabled", c.cache_enabled);
  if (j.contains("cache_capacity_bytes") && !j.at("cache_capacity_bytes").is_null()) {
    std::uint64_t v = 0;
    read(j, "cache_capacity_bytes", v);
    c.cache_capacity_bytes = v;
  }
  if (j.contains("link")) {
    const auto& l = j.at("link");
    detail::check_keys(l, "link", {"latency_us", "bandwidth_bytes_per_us"});
    read(l, "latency_us", c.link.latency_us);
    read(l, "bandwidth_bytes_per_us", c.link.bandwidth_bytes_per_us);
  }
  read(j, "repetitions", c.repetitions);
  read(j, "rng_seed", c.rng_seed);
  read(j, "output_dir", c.output_dir);
  if (j.contains("trace_file") && !j.at("trace_file").is_null()) {
    std::string t;
    read(j, "trace_file", t);
    std::filesystem::path p(t);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.trace_file = p.string();
  }
  if (j.contains("workload")) c.workload = detail::parse_workload(j.at("workload"));
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BadConfig, std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j, base_dir);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Results

struct LatencyRecord {
  std::string run_id;
  std::string client;
  std::uint32_t frame = 0;
  Micros e2e_us = 0;
  Micros mot_us = 0;
  Micros pred_us = 0;
  Micros cd_us = 0;
  std::uint64_t remote_bytes = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

struct Summary {
  double median_us = 0;
  double p75_us = 0;
  double p99_us = 0;
  double mean_us = 0;
  double fps = 0;
  double offered_fps = 0;
  bool saturated = false;
  std::uint64_t total_remote_bytes = 0;
  double cache_hit_rate = 0;
};

struct RepetitionResult {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<LatencyRecord> records;  // frames >= warmup_discard only
  std::vector<TaskRecord> run_log;
  std::vector<PutRecord> puts;
  std::vector<AccessRecord> accesses;
  StoreCounters counters;
  std::string store_dump;
  std::size_t failed_tasks = 0;
  Micros end_us = 0;
  double fps = 0;
};

struct MetricsReport {
  ExperimentConfig config;
  std::vector<RepetitionResult> repetitions;
  std::vector<LatencyRecord> records;  // pooled over repetitions
  Summary summary;
};

// Linear interpolation between closest ranks.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline std::vector<double> e2e_values(const std::vector<LatencyRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(static_cast<double>(r.e2e_us));
  return v;
}

// ---------------------------------------------------------------------------
// Running

inline std::shared_ptr<const rcp::FrameTrace> trace_for(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.trace_file) {
    std::ifstream in(*config.trace_file);
    if (!in) throw Error(ErrorCode::Io, "cannot open trace " + *config.trace_file);
    return std::make_shared<const rcp::FrameTrace>(rcp::read_trace(in, config.workload));
  }
  WorkloadConfig w = config.workload;
  w.rng_seed = seed;
  return std::make_shared<const rcp::FrameTrace>(rcp::generate_trace(w));
}

inline std::string run_id_for(const ExperimentConfig& config, std::uint64_t seed) {
  return config.name + "-s" + std::to_string(seed);
}

namespace detail {

struct FrameAcc {
  std::optional<Micros> mot_fired;
  std::optional<Micros> state_done;
  Micros pred_max = 0;
  std::optional<Micros> pred_last_done;
  std::optional<Micros> cd_first_fired;
  std::optional<Micros> cd_last_done;
  std::uint64_t remote_bytes = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

inline std::optional<rcp::FrameRef> attributed_frame(const Attribution& by, std::string_view key) {
  if (!by.task_key.empty()) return rcp::frame_of(by.task_key);
  return rcp::frame_of(key);
}

}  // namespace detail

// One repetition on a freshly built cluster.
inline RepetitionResult run_repetition(const ExperimentConfig& config, std::uint64_t seed,
                                       std::shared_ptr<const rcp::FrameTrace> trace = nullptr) {
  config.validate();
  if (!trace) trace = trace_for(config, seed);
  const auto& w = config.workload;

  auto cluster = rcp::rcp_layout(config.layout, config.replication, config.workers, config.strategy, w.clients.size());
  SimOptions opts;
  opts.link = config.link;
  opts.cache = CacheConfig{config.cache_enabled, config.cache_capacity_bytes};
  opts.seed = seed;
  Simulator sim(cluster.layout, opts);
  rcp::register_handlers(sim.runtime(), trace, w);
  rcp::schedule_clients(sim, w, cluster.client_nodes);
  RepetitionResult out;
  out.end_us = sim.run_until_idle();
  out.run_id = run_id_for(config, seed);
  out.seed = seed;

  std::map<rcp::FrameRef, detail::FrameAcc> acc;
  for (const auto& t : sim.runtime().log()) {
    if (t.state == TaskState::Failed) ++out.failed_tasks;
    auto ref = rcp::frame_of(t.key);
    if (!ref) continue;
    auto& a = acc[*ref];
    switch (t.step) {
      case Step::Mot:
        a.mot_fired = t.fired_at;
        break;
      case Step::Pred:
        a.pred_max = std::max(a.pred_max, t.done - t.fired_at);
        a.pred_last_done = std::max(a.pred_last_done.value_or(t.done), t.done);
        break;
      case Step::Cd:
        a.cd_first_fired = std::min(a.cd_first_fired.value_or(t.fired_at), t.fired_at);
        break;
      default:
        break;
    }
  }
  for (const auto& p : sim.store().puts()) {
    auto ref = rcp::frame_of(p.key);
    if (!ref) continue;
    auto& a = acc[*ref];
    if (p.key.rfind("/states/", 0) == 0) a.state_done = p.completes_at;
    if (p.key.rfind("/cd/", 0) == 0) a.cd_last_done = std::max(a.cd_last_done.value_or(p.completes_at), p.completes_at);
  }
  for (const auto& r : sim.store().accesses()) {
    auto ref = detail::attributed_frame(r.by, r.key);
    if (!ref) continue;
    auto& a = acc[*ref];
    if (r.remote()) a.remote_bytes += r.bytes;
    if (r.kind == AccessKind::Get) {
      if (r.source == AccessSource::Cache) ++a.hits;
      else ++a.misses;
    }
  }

  const Micros period = w.period_us();
  Micros first_put = 0;
  Micros last_done = 0;
  bool any = false;
  for (const auto& client : w.clients) {
    for (std::uint32_t k = w.warmup_discard; k < w.frames; ++k) {
      auto it = acc.find(rcp::FrameRef{client, k});
      if (it == acc.end()) continue;
      const auto& a = it->second;
      const Micros put_at = static_cast<Micros>(k) * period;
      // Frames without any prediction end at the later of MOT's state put and
      // the last PRED task.
      Micros end = a.cd_last_done.value_or(std::max(a.state_done.value_or(put_at), a.pred_last_done.value_or(put_at)));
      LatencyRecord rec;
      rec.run_id = out.run_id;
      rec.client = client;
      rec.frame = k;
      rec.e2e_us = end - put_at;
      rec.mot_us = a.state_done && a.mot_fired ? *a.state_done - *a.mot_fired : 0;
      rec.pred_us = a.pred_max;
      rec.cd_us = a.cd_last_done && a.cd_first_fired ? *a.cd_last_done - *a.cd_first_fired : 0;
      rec.remote_bytes = a.remote_bytes;
      rec.cache_hits = a.hits;
      rec.cache_misses = a.misses;
      out.records.push_back(rec);
      first_put = any ? std::min(first_put, put_at) : put_at;
      last_done = std::max(last_done, end);
      any = true;
    }
  }
  if (any && last_done > first_put) {
    out.fps = static_cast<double>(out.records.size()) * 1e6 / static_cast<double>(last_done - first_put);
  }

  out.run_log = sim.runtime().log();
  out.puts = sim.store().puts();
  out.accesses = sim.store().accesses();
  out.counters = sim.store().counters();
  std::ostringstream dump;
  sim.store().dump(dump);
  out.store_dump = dump.str();
  return out;
}

inline Summary summarize(const ExperimentConfig& config, const std::vector<RepetitionResult>& reps) {
  Summary s;
  std::vector<LatencyRecord> pooled;
  double fps_sum = 0;
  for (const auto& r : reps) {
    pooled.insert(pooled.end(), r.records.begin(), r.records.end());
    fps_sum += r.fps;
  }
  auto v = e2e_values(pooled);
  s.median_us = percentile(v, 0.5);
  s.p75_us = percentile(v, 0.75);
  s.p99_us = percentile(v, 0.99);
  double total = 0;
  std::uint64_t hits = 0, misses = 0;
  for (const auto& r : pooled) {
    total += static_cast<double>(r.e2e_us);
    s.total_remote_bytes += r.remote_bytes;
    hits += r.cache_hits;
    misses += r.cache_misses;
  }
  s.mean_us = pooled.empty() ? 0.0 : total / static_cast<double>(pooled.size());
  s.cache_hit_rate = hits + misses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(hits + misses);
  s.fps = reps.empty() ? 0.0 : fps_sum / static_cast<double>(reps.size());
  s.offered_fps = config.workload.fps * static_cast<double>(config.workload.clients.size());
  // A stable run measures slightly under the offered rate because the last
  // frame's own latency is inside the window; 5% absorbs that.
  s.saturated = s.offered_fps > 1.05 * s.fps;
  return s;
}

// Repetition i uses seed rng_seed + i.
inline MetricsReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  MetricsReport report;
  report.config = config;
  for (std::uint32_t i = 0; i < config.repetitions; ++i) {
    report.repetitions.push_back(run_repetition(config, config.rng_seed + i));
    const auto& recs = report.repetitions.back().records;
    report.records.insert(report.records.end(), recs.begin(), recs.end());
  }
  report.summary = summarize(config, report.repetitions);
  return report;
}

// ---------------------------------------------------------------------------
// CSV output

inline constexpr std::string_view kRecordsHeader =
    "run_id,strategy,layout,client,frame,e2e_us,mot_us,pred_us,cd_us,remote_bytes,cache_hits,cache_misses";
inline constexpr std::string_view kSummaryHeader =
    "run_id,strategy,layout,clients,median_us,p75_us,p99_us,mean_us,fps,total_remote_bytes,cache_hit_rate";

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_records(std::ostream& os, const ExperimentConfig& config, const std::vector<LatencyRecord>& rows) {
  os << kRecordsHeader << '\n';
  const auto strategy = rcp::to_string(config.strategy);
  const auto layout = config.layout_label();
  for (const auto& r : rows) {
    os << r.run_id << ',' << strategy << ',' << layout << ',' << r.client << ',' << r.frame << ',' << r.e2e_us << ','
       << r.mot_us << ',' << r.pred_us << ',' << r.cd_us << ',' << r.remote_bytes << ',' << r.cache_hits << ','
       << r.cache_misses << '\n';
  }
}

inline void write_summary_row(std::ostream& os, const ExperimentConfig& config, const Summary& s) {
  os << config.name << ',' << rcp::to_string(config.strategy) << ',' << config.layout_label() << ','
     << config.workload.clients.size() << ',' << fixed(s.median_us, 1) << ',' << fixed(s.p75_us, 1) << ','
     << fixed(s.p99_us, 1) << ',' << fixed(s.mean_us, 1) << ',' << fixed(s.fps, 4) << ',' << s.total_remote_bytes
     << ',' << fixed(s.cache_hit_rate, 6) << '\n';
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

// records.csv, summary.csv, and per repetition store_dump-<run_id>.csv and
// run_log-<run_id>.csv.
inline void write_outputs(const MetricsReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream records;
  write_records(records, report.config, report.records);
  write_file(dir / "records.csv", records.str());
  std::ostringstream summary;
  summary << kSummaryHeader << '\n';
  write_summary_row(summary, report.config, report.summary);
  write_file(dir / "summary.csv", summary.str());
  for (const auto& rep : report.repetitions) {
    write_file(dir / ("store_dump-" + rep.run_id + ".csv"), rep.store_dump);
    std::ostringstream log;
    write_run_log(log, rep.run_log);
    write_file(dir / ("run_log-" + rep.run_id + ".csv"), log.str());
  }
}

// ---------------------------------------------------------------------------
// Comparison

struct BoxStats {
  double min = 0, whisker_low = 0, q1 = 0, median = 0, q3 = 0, whisker_high = 0, max = 0, mean = 0;
  std::size_t n = 0;
};

// Tukey whiskers: the most extreme samples within 1.5 IQR of the box.
inline BoxStats box_stats(std::vector<double> v) {
  BoxStats b;
  b.n = v.size();
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  b.min = v.front();
  b.max = v.back();
  b.q1 = percentile(v, 0.25);
  b.median = percentile(v, 0.5);
  b.q3 = percentile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  b.whisker_low = b.max;
  b.whisker_high = b.min;
  double sum = 0;
  for (double x : v) {
    sum += x;
    if (x >= b.q1 - 1.5 * iqr) b.whisker_low = std::min(b.whisker_low, x);
    if (x <= b.q3 + 1.5 * iqr) b.whisker_high = std::max(b.whisker_high, x);
  }
  b.mean = sum / static_cast<double>(v.size());
  return b;
}

struct ComparisonRow {
  ExperimentConfig config;
  Summary summary;
  BoxStats box;
};

inline constexpr std::string_view kComparisonHeader =
    "run_id,strategy,layout,cache_enabled,n,min_us,whisker_low_us,q1_us,median_us,q3_us,whisker_high_us,max_us,"
    "mean_us,fps,offered_fps,saturated";

inline void write_comparison(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << kComparisonHeader << '\n';
  for (const auto& r : rows) {
    const auto& b = r.box;
    os << r.config.name << ',' << rcp::to_string(r.config.strategy) << ',' << r.config.layout_label() << ','
       << (r.config.cache_enabled ? "true" : "false") << ',' << b.n << ',' << fixed(b.min, 1) << ','
       << fixed(b.whisker_low, 1) << ',' << fixed(b.q1, 1) << ',' << fixed(b.median, 1) << ',' << fixed(b.q3, 1)
       << ',' << fixed(b.whisker_high, 1) << ',' << fixed(b.max, 1) << ',' << fixed(b.mean, 1) << ','
       << fixed(r.summary.fps, 4) << ',' << fixed(r.summary.offered_fps, 4) << ','
       << (r.summary.saturated ? "true" : "false") << '\n';
  }
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline double nice_ceiling(double v) {
  if (v <= 0) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double step : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (v <= step * mag) return step * mag;
  }
  return 10.0 * mag;
}

}  // namespace detail

// Static box-and-whisker chart of E2E latency (ms), one box per config in
// input order.
inline void write_box_plot_svg(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  const double left = 70, right = 20, top = 40, bottom = 70, slot = 110, plot_h = 320;
  const double width = left + right + slot * static_cast<double>(std::max<std::size_t>(rows.size(), 1));
  const double height = top + plot_h + bottom;
  double ymax = 0;
  for (const auto& r : rows) ymax = std::max(ymax, r.box.whisker_high / 1000.0);
  ymax = detail::nice_ceiling(ymax);
  auto y = [&](double us) { return top + plot_h - (us / 1000.0) / ymax * plot_h; };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fixed(width / 2, 1) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
     << "E2E latency (virtual ms)</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ymax * i / 5.0;
    const double yy = top + plot_h - plot_h * i / 5.0;
    os << "<line x1=\"" << fixed(left, 1) << "\" x2=\"" << fixed(width - right, 1) << "\" y1=\"" << fixed(yy, 1)
       << "\" y2=\"" << fixed(yy, 1) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(yy + 4, 1) << "\" text-anchor=\"end\">"
       << fixed(v, v < 10 ? 1 : 0) << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& b = r.box;
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double hw = 28;
    const char* fill = r.config.strategy == Strategy::Affinity ? "#9ecae1" : "#fdae6b";
    if (b.n > 0) {
      os << "<line x1=\"" << fixed(cx, 1) << "\" x2=\"" << fixed(cx, 1) << "\" y1=\"" << fixed(y(b.whisker_low), 1)
         << "\" y2=\"" << fixed(y(b.q1), 1) << "\" stroke=\"black\"/>\n";
      os << "<line x1=\"" << fixed(cx, 1) << "\" x2=\"" << fixed(cx, 1) << "\" y1=\"" << fixed(y(b.q3), 1)
         << "\" y2=\"" << fixed(y(b.whisker_high), 1) << "\" stroke=\"black\"/>\n";
      for (double w : {b.whisker_low, b.whisker_high}) {
        os << "<line x1=\"" << fixed(cx - hw / 2, 1) << "\" x2=\"" << fixed(cx + hw / 2, 1) << "\" y1=\""
           << fixed(y(w), 1) << "\" y2=\"" << fixed(y(w), 1) << "\" stroke=\"black\"/>\n";
      }
      os << "<rect x=\"" << fixed(cx - hw, 1) << "\" y=\"" << fixed(y(b.q3), 1) << "\" width=\"" << fixed(2 * hw, 1)
         << "\" height=\"" << fixed(std::max(0.5, y(b.q1) - y(b.q3)), 1) << "\" fill=\"" << fill
         << "\" stroke=\"black\"/>\n";
      os << "<line x1=\"" << fixed(cx - hw, 1) << "\" x2=\"" << fixed(cx + hw, 1) << "\" y1=\""
         << fixed(y(b.median), 1) << "\" y2=\"" << fixed(y(b.median), 1) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
    os << "<text x=\"" << fixed(cx, 1) << "\" y=\"" << fixed(top + plot_h + 18, 1) << "\" text-anchor=\"middle\">"
       << detail::xml_escape(r.config.layout_label()) << "</text>\n";
    os << "<text x=\"" << fixed(cx, 1) << "\" y=\"" << fixed(top + plot_h + 32, 1) << "\" text-anchor=\"middle\">"
       << rcp::to_string(r.config.strategy) << (r.config.cache_enabled ? "" : " nocache") << "</text>\n";
    if (r.summary.saturated) {
      os << "<text x=\"" << fixed(cx, 1) << "\" y=\"" << fixed(top + plot_h + 46, 1)
         << "\" text-anchor=\"middle\" fill=\"#b00\">saturated</text>\n";
    }
  }
  os << "</svg>\n";
}

// Everything that determines which trace a config replays.
inline std::string trace_signature(const ExperimentConfig& c) {
  const auto& w = c.workload;
  std::ostringstream s;
  if (c.trace_file) {
    s << "file:" << *c.trace_file;
  } else {
    s << "seed:" << c.rng_seed << ";reps:" << c.repetitions;
  }
  s << ";clients:";
  for (const auto& n : w.clients) s << n << '|';
  s << ";frames:" << w.frames << ";warmup:" << w.warmup_discard << ";fps:" << w.fps << ";cap:" << w.actors.max_concurrent
    << ";arrival:" << w.actors.arrival_rate << ";life:" << w.actors.mean_lifetime_frames;
  return s.str();
}

struct ComparisonResult {
  std::vector<MetricsReport> reports;
  std::vector<ComparisonRow> rows;
};

// Runs every config (concurrently, one engine each) after checking they all
// replay the same trace. Writes per-config outputs under <out>/<name>/ plus
// comparison.csv and comparison.svg.
inline ComparisonResult compare(const std::vector<ExperimentConfig>& configs,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  if (configs.empty()) throw Error(ErrorCode::BadConfig, "compare needs at least one config");
  const auto sig = trace_signature(configs.front());
  std::set<std::string> names;
  for (const auto& c : configs) {
    c.validate();
    if (trace_signature(c) != sig) {
      throw Error(ErrorCode::TraceMismatch, "config '" + c.name + "' replays a different trace than '" +
                                                configs.front().name + "'");
    }
    if (!names.insert(c.name).second) throw Error(ErrorCode::BadConfig, "duplicate config name '" + c.name + "'");
  }
  std::vector<std::future<MetricsReport>> jobs;
  for (const auto& c : configs) jobs.push_back(std::async(std::launch::async, [c] { return run_experiment(c); }));
  ComparisonResult result;
  for (auto& j : jobs) result.reports.push_back(j.get());
  for (const auto& r : result.reports) {
    result.rows.push_back(ComparisonRow{r.config, r.summary, box_stats(e2e_values(r.records))});
  }
  if (out_dir) {
    for (const auto& r : result.reports) write_outputs(r, *out_dir / r.config.name);
    std::ostringstream csv;
    write_comparison(csv, result.rows);
    write_file(*out_dir / "comparison.csv", csv.str());
    std::ostringstream summary;
    summary << kSummaryHeader << '\n';
    for (const auto& r : result.reports) write_summary_row(summary, r.config, r.summary);
    write_file(*out_dir / "summary.csv", summary.str());
    std::ostringstream svg;
    write_box_plot_svg(svg, result.rows);
    write_file(*out_dir / "comparison.svg", svg.str());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pool-table check

struct RegexRow {
  std::string pool;
  std::string example_key;
  std::string step;
  std::string regex;     // "--" or empty for ungrouped pools
  std::string expected;  // "--" when no affinity key is expected
};

enum class RegexStatus { Match, Mismatch, NotApplicable };

inline constexpr std::string_view to_string(RegexStatus s) {
  switch (s) {
    case RegexStatus::Match: return "match";
    case RegexStatus::Mismatch: return "mismatch";
    case RegexStatus::NotApplicable: return "n/a";
  }
  return "?";
}

struct RegexCheck {
  RegexRow row;
  std::optional<std::string> actual;
  RegexStatus status = RegexStatus::NotApplicable;
};

struct RegexReport {
  std::vector<RegexCheck> checks;

  std::size_t count(RegexStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(checks.begin(), checks.end(), [s](const RegexCheck& c) { return c.status == s; }));
  }
};

namespace detail {

inline bool is_none(std::string_view s) { return s.empty() || s == "--"; }

// Comma-separated with optional double quoting ("" escapes a quote).
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace detail

// Columns: pool,example_key,step,regex,expected_affinity_key. A header row
// and blank lines are skipped.
inline std::vector<RegexRow> parse_pool_table(std::istream& is) {
  std::vector<RegexRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 5) {
      throw Error(ErrorCode::BadConfig, "pool table line " + std::to_string(lineno) + ": expected 5 fields, got " +
                                            std::to_string(f.size()));
    }
    if (lineno == 1 && f[0] == "pool") continue;
    rows.push_back(RegexRow{f[0], f[1], f[2], f[3], f[4]});
  }
  return rows;
}

inline RegexReport validate_regex(const std::vector<RegexRow>& rows) {
  RegexReport report;
  for (const auto& row : rows) {
    RegexCheck c;
    c.row = row;
    if (detail::is_none(row.regex)) {
      c.status = detail::is_none(row.expected) ? RegexStatus::NotApplicable : RegexStatus::Mismatch;
    } else {
      Pattern pattern(row.regex);
      if (auto key = extract_affinity_key(pattern, std::string_view(row.example_key))) c.actual = key->str();
      const bool ok = c.actual ? *c.actual == row.expected : detail::is_none(row.expected);
      c.status = ok ? RegexStatus::Match : RegexStatus::Mismatch;
    }
    report.checks.push_back(std::move(c));
  }
  return report;
}

inline RegexReport validate_regex_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return validate_regex(parse_pool_table(in));
}

inline void write_regex_report(std::ostream& os, const RegexReport& report) {
  os << "pool,example_key,regex,expected,actual,status\n";
  for (const auto& c : report.checks) {
    os << c.row.pool << ',' << c.row.example_key << ',' << (detail::is_none(c.row.regex) ? "--" : c.row.regex) << ','
       << c.row.expected << ',' << c.actual.value_or("--") << ',' << to_string(c.status) << '\n';
  }
  os << report.count(RegexStatus::Match) << " match, " << report.count(RegexStatus::Mismatch) << " mismatch, "
     << report.count(RegexStatus::NotApplicable) << " n/a\n";
}

}  // namespace affinity::harness
