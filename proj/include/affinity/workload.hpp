#pragma once

// Synthetic collision-prediction pipeline: clients stream frames, MOT tracks
// actors and emits one position per actor, PRED turns eight consecutive
// positions into a trajectory prediction, and CD pairs up all predictions of a
// frame. Only the data-access pattern is modeled; sizes and service times are
// parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "affinity/compute.hpp"
#include "affinity/core.hpp"
#include "affinity/error.hpp"
#include "affinity/hash.hpp"
#include "affinity/netsim.hpp"
#include "affinity/simulator.hpp"
#include "affinity/store.hpp"

namespace affinity::rcp {

// ---------------------------------------------------------------------------
// Key scheme and the pool table

inline constexpr std::string_view kClientRegex = "/[a-zA-Z0-9]+_";
inline constexpr std::string_view kClientNumberRegex = "/[a-zA-Z0-9]+_[0-9]+_";

struct PoolRow {
  std::string_view pool;
  std::string_view example_key;
  std::string_view step;          // "--" when the pool triggers nothing
  std::string_view regex;         // "--" when ungrouped
  std::string_view affinity_key;  // "--" when ungrouped
};

inline constexpr PoolRow kPoolTable[] = {
    {"/frames", "/frames/little3_42", "MOT", kClientRegex, "/little3_"},
    {"/states", "/states/little3_42", "--", kClientRegex, "/little3_"},
    {"/positions", "/positions/little3_7_42", "PRED", kClientNumberRegex, "/little3_7_"},
    {"/predictions", "/predictions/little3_42_7", "CD", kClientNumberRegex, "/little3_42_"},
    {"/cd", "/cd/little3_42_7_5", "--", "--", "--"},
};

inline std::string frame_key(std::string_view client, std::uint32_t k) {
  return "/frames/" + std::string(client) + "_" + std::to_string(k);
}
inline std::string state_key(std::string_view client, std::uint32_t k) {
  return "/states/" + std::string(client) + "_" + std::to_string(k);
}
inline std::string position_key(std::string_view client, std::uint32_t actor, std::uint32_t k) {
  return "/positions/" + std::string(client) + "_" + std::to_string(actor) + "_" + std::to_string(k);
}
inline std::string prediction_key(std::string_view client, std::uint32_t k, std::uint32_t actor) {
  return "/predictions/" + std::string(client) + "_" + std::to_string(k) + "_" + std::to_string(actor);
}
inline std::string prediction_prefix(std::string_view client, std::uint32_t k) {
  return "/predictions/" + std::string(client) + "_" + std::to_string(k) + "_";
}
inline std::string cd_key(std::string_view client, std::uint32_t k, std::uint32_t actor, std::uint32_t collisions) {
  return "/cd/" + std::string(client) + "_" + std::to_string(k) + "_" + std::to_string(actor) + "_" +
         std::to_string(collisions);
}

struct ParsedKey {
  std::string pool;
  std::string client;
  std::vector<std::uint32_t> numbers;
};

inline std::optional<ParsedKey> parse_key(std::string_view key) {
  if (key.size() < 2 || key.front() != '/') return std::nullopt;
  auto slash = key.find('/', 1);
  if (slash == std::string_view::npos) return std::nullopt;
  ParsedKey out;
  out.pool = std::string(key.substr(0, slash));
  std::string_view tail = key.substr(slash + 1);
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto us = tail.find('_', start);
    parts.push_back(tail.substr(start, us == std::string_view::npos ? std::string_view::npos : us - start));
    if (us == std::string_view::npos) break;
    start = us + 1;
  }
  if (parts.size() < 2 || parts.front().empty()) return std::nullopt;
  out.client = std::string(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].empty()) return std::nullopt;
    std::uint32_t v = 0;
    for (char c : parts[i]) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + static_cast<std::uint32_t>(c - '0');
    }
    out.numbers.push_back(v);
  }
  return out;
}

struct FrameRef {
  std::string client;
  std::uint32_t frame = 0;

  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

// Which (client, frame) a pipeline key belongs to.
inline std::optional<FrameRef> frame_of(std::string_view key) {
  auto p = parse_key(key);
  if (!p) return std::nullopt;
  if ((p->pool == "/frames" || p->pool == "/states") && p->numbers.size() == 1) {
    return FrameRef{p->client, p->numbers[0]};
  }
  if (p->pool == "/positions" && p->numbers.size() == 2) return FrameRef{p->client, p->numbers[1]};
  if (p->pool == "/predictions" && p->numbers.size() == 2) return FrameRef{p->client, p->numbers[0]};
  if (p->pool == "/cd" && p->numbers.size() == 3) return FrameRef{p->client, p->numbers[0]};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Configuration

struct ServiceTimes {
  Micros mot_base_us = 120'000;
  Micros mot_per_actor_us = 2'000;
  Micros pred_us = 40'000;
  Micros cd_per_pair_us = 500;
};

struct ActorModel {
  std::uint32_t max_concurrent = 49;
  double arrival_rate = 0.25;  // expected new actors per frame
  double mean_lifetime_frames = 32.0;
};

struct StateSize {
  std::uint64_t base_bytes = 16 * 1024;
  std::uint64_t per_actor_bytes = 200 * 1024;
  std::uint64_t cap_bytes = 10 * 1024 * 1024;
};

struct WorkloadConfig {
  std::vector<std::string> clients{"little3", "hyang5", "gates3"};
  double fps = 2.5;
  std::uint32_t frames = 700;
  std::uint32_t warmup_discard = 100;
  std::uint32_t p = 8;
  std::uint32_t q = 12;
  std::uint64_t frame_bytes = 8 * 1024 * 1024;
  StateSize state;
  std::uint64_t position_bytes = 64;
  std::optional<std::uint64_t> prediction_bytes;  // q * 16 when unset
  std::uint64_t cd_bytes = 32;
  double collision_probability = 1.0 / 32.0;
  ActorModel actors;
  ServiceTimes service;
  PutMode frames_mode = PutMode::Volatile;
  std::uint64_t rng_seed = 1;

  Micros period_us() const { return static_cast<Micros>(std::llround(1e6 / fps)); }

  std::uint64_t prediction_size() const { return prediction_bytes.value_or(static_cast<std::uint64_t>(q) * 16); }

  std::uint64_t state_bytes(std::uint32_t actor_count) const {
    return std::min(state.cap_bytes, state.base_bytes + actor_count * state.per_actor_bytes);
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
    if (clients.empty()) bad("workload needs at least one client");
    for (std::size_t i = 0; i < clients.size(); ++i) {
      const auto& c = clients[i];
      if (c.empty()) bad("empty client name");
      for (char ch : c) {
        bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
        if (!ok) bad("client name '" + c + "' must be alphanumeric");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (clients[j] == c) bad("duplicate client '" + c + "'");
      }
    }
    if (!(fps > 0.0)) bad("fps must be > 0");
    if (frames <= warmup_discard) bad("frames must exceed warmup_discard");
    if (p < 1) bad("p must be >= 1");
    if (q < 1) bad("q must be >= 1");
    if (actors.max_concurrent < 1) bad("actors.max_concurrent must be >= 1");
    if (!(actors.arrival_rate >= 0.0)) bad("actors.arrival_rate must be >= 0");
    if (!(actors.mean_lifetime_frames >= 1.0)) bad("actors.mean_lifetime_frames must be >= 1");
    if (!(collision_probability >= 0.0 && collision_probability <= 1.0)) bad("collision_probability out of [0,1]");
    if (service.mot_base_us < 0 || service.mot_per_actor_us < 0 || service.pred_us < 0 ||
        service.cd_per_pair_us < 0) {
      bad("service times must be >= 0");
    }
  }
};

// ---------------------------------------------------------------------------
// Trace

struct ActorTrack {
  std::uint32_t actor_id = 0;
  std::uint32_t first_frame = 0;
  std::uint32_t last_frame = 0;

  friend bool operator==(const ActorTrack&, const ActorTrack&) = default;
};

struct Sighting {
  std::uint32_t actor_id = 0;
  std::uint32_t seq = 0;  // 1 on the first frame the actor appears in

  friend bool operator==(const Sighting&, const Sighting&) = default;
};

struct ClientTrace {
  std::string client;
  std::vector<ActorTrack> actors;
  std::vector<std::vector<Sighting>> frames;  // per frame, ordered by actor id

  friend bool operator==(const ClientTrace&, const ClientTrace&) = default;
};

struct FrameTrace {
  std::vector<ClientTrace> clients;

  const ClientTrace& client(std::string_view name) const {
    for (const auto& c : clients) {
      if (c.client == name) return c;
    }
    throw Error(ErrorCode::BadConfig, "trace has no client '" + std::string(name) + "'");
  }

  const std::vector<Sighting>& live(std::string_view name, std::uint32_t frame) const {
    return client(name).frames.at(frame);
  }

  friend bool operator==(const FrameTrace&, const FrameTrace&) = default;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint32_t poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  std::uint32_t k = 0;
  double prod = uniform01(rng);
  while (prod > limit) {
    ++k;
    prod *= uniform01(rng);
  }
  return k;
}

// Support {1, 2, ...} with the given mean.
inline std::uint32_t geometric(std::mt19937_64& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  return 1 + static_cast<std::uint32_t>(std::floor(std::log(u) / std::log1p(-p)));
}

inline void fill_frames(ClientTrace& ct, std::uint32_t frames) {
  ct.frames.assign(frames, {});
  for (const auto& a : ct.actors) {
    for (std::uint32_t k = a.first_frame; k <= a.last_frame && k < frames; ++k) {
      ct.frames[k].push_back(Sighting{a.actor_id, k - a.first_frame + 1});
    }
  }
  for (auto& f : ct.frames) {
    std::sort(f.begin(), f.end(), [](const Sighting& x, const Sighting& y) { return x.actor_id < y.actor_id; });
  }
}

}  // namespace detail

// Poisson arrivals per frame, dropped while the client is at its actor cap;
// geometric lifetimes. Each client draws from its own seeded stream.
inline FrameTrace generate_trace(const WorkloadConfig& config) {
  config.validate();
  FrameTrace trace;
  for (const auto& name : config.clients) {
    ClientTrace ct;
    ct.client = name;
    std::mt19937_64 rng(mix_seed(config.rng_seed, fnv1a64(name)));
    std::vector<std::uint32_t> live_until;  // last frame of each live actor
    std::uint32_t next_id = 0;
    for (std::uint32_t k = 0; k < config.frames; ++k) {
      std::erase_if(live_until, [k](std::uint32_t last) { return last < k; });
      const std::uint32_t arrivals = detail::poisson(rng, config.actors.arrival_rate);
      for (std::uint32_t i = 0; i < arrivals; ++i) {
        const std::uint32_t lifetime = detail::geometric(rng, config.actors.mean_lifetime_frames);
        if (live_until.size() >= config.actors.max_concurrent) continue;
        const std::uint32_t last = std::min<std::uint64_t>(static_cast<std::uint64_t>(k) + lifetime - 1,
                                                           config.frames - 1);
        ct.actors.push_back(ActorTrack{next_id++, k, last});
        live_until.push_back(last);
      }
    }
    detail::fill_frames(ct, config.frames);
    trace.clients.push_back(std::move(ct));
  }
  return trace;
}

inline constexpr std::string_view kTraceHeader = "client,frame,actor_id,seq";

inline void write_trace(std::ostream& os, const FrameTrace& trace) {
  os << kTraceHeader << '\n';
  for (const auto& ct : trace.clients) {
    for (std::size_t k = 0; k < ct.frames.size(); ++k) {
      for (const auto& s : ct.frames[k]) os << ct.client << ',' << k << ',' << s.actor_id << ',' << s.seq << '\n';
    }
  }
}

// Rebuilds a trace for `config.clients` over `config.frames` frames.
inline FrameTrace read_trace(std::istream& is, const WorkloadConfig& config) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, "trace: " + what); };
  std::map<std::string, std::map<std::uint32_t, ActorTrack>> tracks;
  std::map<std::string, std::set<std::pair<std::uint32_t, std::uint32_t>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == kTraceHeader) continue;
    std::stringstream ss(line);
    std::string client, f, a, s;
    if (!std::getline(ss, client, ',') || !std::getline(ss, f, ',') || !std::getline(ss, a, ',') ||
        !std::getline(ss, s)) {
      bad("line " + std::to_string(lineno) + " has fewer than 4 fields");
    }
    std::uint32_t frame = 0, actor = 0, seq = 0;
    try {
      frame = static_cast<std::uint32_t>(std::stoul(f));
      actor = static_cast<std::uint32_t>(std::stoul(a));
      seq = static_cast<std::uint32_t>(std::stoul(s));
    } catch (const std::exception&) {
      bad("line " + std::to_string(lineno) + " has a non-numeric field");
    }
    if (seq < 1 || seq > frame + 1) bad("line " + std::to_string(lineno) + " has an impossible seq");
    const std::uint32_t first = frame + 1 - seq;
    auto [it, fresh] = tracks[client].try_emplace(actor, ActorTrack{actor, first, frame});
    if (!fresh) {
      if (it->second.first_frame != first) bad("actor " + std::to_string(actor) + " has inconsistent seq values");
      it->second.last_frame = std::max(it->second.last_frame, frame);
    }
    if (!rows[client].insert({actor, frame}).second) bad("line " + std::to_string(lineno) + " repeats a sighting");
  }
  FrameTrace trace;
  for (const auto& name : config.clients) {
    ClientTrace ct;
    ct.client = name;
    for (const auto& [id, t] : tracks[name]) {
      if (t.last_frame >= config.frames) bad("client " + name + " has frames beyond the configured count");
      const std::uint32_t span = t.last_frame - t.first_frame + 1;
      const auto& r = rows[name];
      const auto seen = std::distance(r.lower_bound({id, 0}), r.lower_bound({id + 1, 0}));
      if (static_cast<std::uint32_t>(seen) != span) bad("actor " + std::to_string(id) + " of " + name + " has a gap");
      ct.actors.push_back(t);
    }
    detail::fill_frames(ct, config.frames);
    trace.clients.push_back(std::move(ct));
  }
  for (const auto& [name, _] : tracks) {
    if (std::find(config.clients.begin(), config.clients.end(), name) == config.clients.end()) {
      bad("client '" + name + "' is not in the configuration");
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Handlers

class MotHandler : public Handler {
 public:
  MotHandler(std::shared_ptr<const FrameTrace> trace, WorkloadConfig config)
      : trace_(std::move(trace)), config_(std::move(config)) {}

  TaskPlan plan(const TaskContext& ctx) override {
    auto ref = frame_of(ctx.event.key.view());
    if (!ref) throw Error(ErrorCode::MalformedKey, "MOT trigger " + ctx.event.key.str());
    TaskPlan plan;
    if (ref->frame > 0) plan.gets.push_back(ObjectKey::parse(state_key(ref->client, ref->frame - 1)));
    return plan;
  }

  TaskOutput run(const TaskContext& ctx, const TaskInputs&) override {
    auto ref = frame_of(ctx.event.key.view());
    const auto& live = trace_->live(ref->client, ref->frame);
    const auto n = static_cast<std::uint32_t>(live.size());
    TaskOutput out;
    out.service_us = config_.service.mot_base_us + static_cast<Micros>(n) * config_.service.mot_per_actor_us;
    out.puts.push_back({ObjectKey::parse(state_key(ref->client, ref->frame)),
                        DataObject::synthetic("", config_.state_bytes(n)), PutMode::Volatile});
    for (const auto& s : live) {
      auto obj = DataObject::synthetic("", config_.position_bytes);
      obj.meta["actor"] = s.actor_id;
      obj.meta["seq"] = s.seq;
      out.puts.push_back(
          {ObjectKey::parse(position_key(ref->client, s.actor_id, ref->frame)), std::move(obj), PutMode::Volatile});
    }
    return out;
  }

 private:
  std::shared_ptr<const FrameTrace> trace_;
  WorkloadConfig config_;
};

class PredHandler : public Handler {
 public:
  explicit PredHandler(WorkloadConfig config) : config_(std::move(config)) {}

  TaskPlan plan(const TaskContext& ctx) override {
    auto p = parsed(ctx);
    TaskPlan plan;
    if (seq(ctx) < config_.p) return plan;
    const std::uint32_t actor = p.numbers[0];
    const std::uint32_t k = p.numbers[1];
    for (std::uint32_t back = config_.p - 1; back >= 1; --back) {
      plan.gets.push_back(ObjectKey::parse(position_key(p.client, actor, k - back)));
    }
    return plan;
  }

  TaskOutput run(const TaskContext& ctx, const TaskInputs&) override {
    TaskOutput out;
    if (seq(ctx) < config_.p) return out;
    auto p = parsed(ctx);
    out.service_us = config_.service.pred_us;
    auto obj = DataObject::synthetic("", config_.prediction_size());
    obj.meta["actor"] = p.numbers[0];
    out.puts.push_back({ObjectKey::parse(prediction_key(p.client, p.numbers[1], p.numbers[0])), std::move(obj),
                        PutMode::Volatile});
    return out;
  }

 private:
  static ParsedKey parsed(const TaskContext& ctx) {
    auto p = parse_key(ctx.event.key.view());
    if (!p || p->numbers.size() != 2) throw Error(ErrorCode::MalformedKey, "PRED trigger " + ctx.event.key.str());
    return *p;
  }

  static std::uint32_t seq(const TaskContext& ctx) {
    if (!ctx.trigger_object) return 0;
    auto it = ctx.trigger_object->meta.find("seq");
    return it == ctx.trigger_object->meta.end() ? 0 : static_cast<std::uint32_t>(it->second);
  }

  WorkloadConfig config_;
};

class CdHandler : public Handler {
 public:
  explicit CdHandler(WorkloadConfig config) : config_(std::move(config)) {}

  TaskPlan plan(const TaskContext& ctx) override {
    auto p = parsed(ctx);
    TaskPlan plan;
    plan.list_prefix = prediction_prefix(p.client, p.numbers[0]);
    return plan;
  }

  // Pairs this prediction with every prediction of the frame that became
  // visible before it. Each pair is then counted once, by whichever of the two
  // CD tasks was triggered later; that task always sees the other object.
  TaskOutput run(const TaskContext& ctx, const TaskInputs& inputs) override {
    auto p = parsed(ctx);
    const auto& self = ctx.trigger_object;
    std::uint32_t earlier = 0;
    for (const auto& o : inputs.listed) {
      if (o->key == self->key) continue;
      if (std::pair(o->created_at, o->commit_seq) < std::pair(self->created_at, self->commit_seq)) ++earlier;
    }
    std::uint32_t collisions = 0;
    for (std::uint32_t i = 0; i < earlier; ++i) {
      if (detail::uniform01(ctx.rng) < config_.collision_probability) ++collisions;
    }
    TaskOutput out;
    out.service_us = static_cast<Micros>(earlier) * config_.service.cd_per_pair_us;
    auto obj = DataObject::synthetic("", config_.cd_bytes);
    obj.meta["pairs"] = earlier;
    obj.meta["listed"] = static_cast<std::int64_t>(inputs.listed.size());
    out.puts.push_back({ObjectKey::parse(cd_key(p.client, p.numbers[0], p.numbers[1], collisions)), std::move(obj),
                        PutMode::Volatile});
    return out;
  }

 private:
  static ParsedKey parsed(const TaskContext& ctx) {
    auto p = parse_key(ctx.event.key.view());
    if (!p || p->numbers.size() != 2) throw Error(ErrorCode::MalformedKey, "CD trigger " + ctx.event.key.str());
    return *p;
  }

  WorkloadConfig config_;
};

// ---------------------------------------------------------------------------
// Cluster layout

enum class Strategy { Random, Affinity };

inline constexpr std::string_view to_string(Strategy s) { return s == Strategy::Random ? "RANDOM" : "AFFINITY"; }

// Shard counts for the MOT, PRED and CD pools, written "x/y/z".
struct LayoutShape {
  std::uint32_t mot = 1;
  std::uint32_t pred = 1;
  std::uint32_t cd = 1;

  static LayoutShape parse(std::string_view text) {
    LayoutShape s;
    std::uint32_t* fields[] = {&s.mot, &s.pred, &s.cd};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      auto end = text.find('/', pos);
      if ((i < 2) != (end != std::string_view::npos)) throw Error(ErrorCode::BadConfig, "layout '" + std::string(text) + "' is not x/y/z");
      auto part = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      if (part.empty() || part.size() > 6) throw Error(ErrorCode::BadConfig, "layout '" + std::string(text) + "' is not x/y/z");
      std::uint32_t v = 0;
      for (char c : part) {
        if (c < '0' || c > '9') throw Error(ErrorCode::BadConfig, "layout '" + std::string(text) + "' is not x/y/z");
        v = v * 10 + static_cast<std::uint32_t>(c - '0');
      }
      if (v == 0) throw Error(ErrorCode::BadConfig, "layout '" + std::string(text) + "' has a zero shard count");
      *fields[i] = v;
      pos = end + 1;
    }
    return s;
  }

  std::string str() const { return std::to_string(mot) + "/" + std::to_string(pred) + "/" + std::to_string(cd); }

  friend bool operator==(const LayoutShape&, const LayoutShape&) = default;
};

struct PerStep {
  std::uint32_t mot = 1;
  std::uint32_t pred = 1;
  std::uint32_t cd = 1;

  bool uniform() const { return mot == pred && pred == cd; }
  friend bool operator==(const PerStep&, const PerStep&) = default;
};

struct RcpCluster {
  ClusterLayout layout;
  std::vector<NodeId> client_nodes;
};

// Disjoint node groups for MOT, PRED and CD, followed by one node per client.
// /states shares the MOT nodes and shard map with /frames, /predictions and
// /cd live on the CD nodes; only AFFINITY attaches the regexes.
inline RcpCluster rcp_layout(const LayoutShape& shape, const PerStep& replication, const PerStep& workers,
                             Strategy strategy, std::size_t clients) {
  RcpCluster out;
  auto& nodes = out.layout.nodes;
  auto group = [&](std::uint32_t count, const char* role, std::uint32_t w) {
    std::vector<NodeId> ids;
    for (std::uint32_t i = 0; i < count; ++i) {
      NodeId id{static_cast<std::uint32_t>(nodes.size())};
      nodes.push_back(NodeSpec{id, role, w});
      ids.push_back(id);
    }
    return ids;
  };
  auto mot = group(shape.mot * replication.mot, "mot", workers.mot);
  auto pred = group(shape.pred * replication.pred, "pred", workers.pred);
  auto cd = group(shape.cd * replication.cd, "cd", workers.cd);
  out.client_nodes = group(static_cast<std::uint32_t>(clients), "client", 0);

  auto regex = [&](std::string_view r) -> std::optional<std::string> {
    if (strategy == Strategy::Random) return std::nullopt;
    return std::string(r);
  };
  auto add = [&](std::string_view path, std::uint32_t shards, std::uint32_t r, std::optional<std::string> rx,
                 const std::vector<NodeId>& where) {
    PoolSpec spec(path, shards, r, std::move(rx));
    auto members = assign_shards(spec, where);
    out.layout.pools.push_back(PoolAssignment{std::move(spec), std::move(members)});
  };
  add("/frames", shape.mot, replication.mot, regex(kClientRegex), mot);
  add("/states", shape.mot, replication.mot, regex(kClientRegex), mot);
  add("/positions", shape.pred, replication.pred, regex(kClientNumberRegex), pred);
  add("/predictions", shape.cd, replication.cd, regex(kClientNumberRegex), cd);
  add("/cd", shape.cd, replication.cd, std::nullopt, cd);
  return out;
}

inline void register_handlers(Runtime& runtime, std::shared_ptr<const FrameTrace> trace,
                              const WorkloadConfig& config) {
  runtime.register_udl("/frames", "mot", Step::Mot, std::make_shared<MotHandler>(std::move(trace), config));
  runtime.register_udl("/positions", "pred", Step::Pred, std::make_shared<PredHandler>(config));
  runtime.register_udl("/predictions", "cd", Step::Cd, std::make_shared<CdHandler>(config));
}

// Frame k of client c is put at k * period from that client's node.
inline void schedule_clients(Simulator& sim, const WorkloadConfig& config, const std::vector<NodeId>& client_nodes) {
  const Micros period = config.period_us();
  for (std::size_t c = 0; c < config.clients.size(); ++c) {
    const std::string client = config.clients[c];
    const NodeId node = client_nodes.at(c);
    for (std::uint32_t k = 0; k < config.frames; ++k) {
      sim.engine().schedule_at(static_cast<Micros>(k) * period, "client " + client,
                               [&sim, client, node, k, bytes = config.frame_bytes, mode = config.frames_mode]() {
                                 sim.store().put(ObjectKey::parse(frame_key(client, k)),
                                                 DataObject::synthetic("", bytes), mode, node,
                                                 Attribution{"", "CLIENT"});
                               });
    }
  }
}

}  // namespace affinity::rcp
