#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/error.hpp"

namespace affinity {

// Virtual time, microseconds since the start of a run.
using Micros = std::int64_t;

// Uniform full-bisection network. Same-node transfers are free.
struct LinkModel {
  Micros latency_us = 50;
  double bandwidth_bytes_per_us = 12'500.0;  // 100 Gbit/s

  void validate() const {
    if (latency_us < 0) throw Error(ErrorCode::BadConfig, "link latency must be >= 0");
    if (!(bandwidth_bytes_per_us > 0.0)) throw Error(ErrorCode::BadConfig, "link bandwidth must be > 0");
  }

  // latency + bytes / bandwidth, rounded up to a whole microsecond.
  Micros transfer_time(std::uint64_t bytes, bool local) const {
    if (local) return 0;
    auto wire = static_cast<Micros>(std::ceil(static_cast<double>(bytes) / bandwidth_bytes_per_us));
    return latency_us + wire;
  }
};

// Discrete-event engine. Events run in (at, sequence) order where sequence is
// the creation order, so equal inputs always give the same interleaving.
class Engine {
 public:
  using Action = std::function<void()>;

  struct LoggedEvent {
    Micros at;
    std::uint64_t sequence;
    std::string label;
  };

  Micros now() const noexcept { return now_; }

  void schedule_at(Micros at, std::string label, Action action) {
    if (at < now_) {
      throw std::logic_error("event '" + label + "' scheduled in the past (" + std::to_string(at) +
                             " < " + std::to_string(now_) + ")");
    }
    queue_.push(Pending{at, next_sequence_++, std::move(label), std::move(action)});
  }

  // Sequence number the next scheduled event will get.
  std::uint64_t next_sequence() const noexcept { return next_sequence_; }

  void schedule_after(Micros delay, std::string label, Action action) {
    schedule_at(now_ + delay, std::move(label), std::move(action));
  }

  // Runs one event; returns false when nothing is pending.
  bool step() {
    if (queue_.empty()) return false;
    Pending ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    ++executed_;
    if (record_) log_.push_back({ev.at, ev.sequence, ev.label});
    ev.action();
    return true;
  }

  Micros run_until_idle() {
    while (step()) {
    }
    return now_;
  }

  bool idle() const noexcept { return queue_.empty(); }
  std::uint64_t executed() const noexcept { return executed_; }

  void set_recording(bool on) noexcept { record_ = on; }
  const std::vector<LoggedEvent>& log() const noexcept { return log_; }

 private:
  struct Pending {
    Micros at;
    std::uint64_t sequence;
    std::string label;
    Action action;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const noexcept {
      if (a.at != b.at) return a.at > b.at;
      return a.sequence > b.sequence;
    }
  };

  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  Micros now_ = 0;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t executed_ = 0;
  bool record_ = false;
  std::vector<LoggedEvent> log_;
};

struct NodeSpec {
  NodeId id;
  std::string role;          // free-form, e.g. "mot", "pred", "cd", "client"
  std::uint32_t workers = 1;  // concurrent tasks; 0 for nodes that never run tasks
};

struct PoolAssignment {
  PoolSpec spec;
  // shard index -> member nodes (size == replication_factor)
  std::vector<std::vector<NodeId>> members;
};

struct ClusterLayout {
  std::vector<NodeSpec> nodes;
  std::vector<PoolAssignment> pools;

  const NodeSpec& node(NodeId id) const { return nodes.at(id.value); }

  // Every shard has exactly replication_factor distinct, existing members.
  void validate() const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id.value != i) throw Error(ErrorCode::BadConfig, "node ids must be dense and ordered");
    }
    for (const auto& pa : pools) {
      if (pa.members.size() != pa.spec.shard_count()) {
        throw Error(ErrorCode::BadConfig, pa.spec.path().str() + ": shard member table size mismatch");
      }
      for (const auto& shard : pa.members) {
        if (shard.size() != pa.spec.replication_factor()) {
          throw Error(ErrorCode::BadConfig, pa.spec.path().str() + ": shard size != replication_factor");
        }
        for (std::size_t a = 0; a < shard.size(); ++a) {
          if (shard[a].value >= nodes.size()) {
            throw Error(ErrorCode::BadConfig, pa.spec.path().str() + ": unknown member node");
          }
          for (std::size_t b = a + 1; b < shard.size(); ++b) {
            if (shard[a] == shard[b]) {
              throw Error(ErrorCode::BadConfig, pa.spec.path().str() + ": duplicate shard member");
            }
          }
        }
      }
    }
  }
};

// Shard i gets nodes[i*r .. i*r + r - 1] of the candidate list.
inline std::vector<std::vector<NodeId>> assign_shards(const PoolSpec& spec, const std::vector<NodeId>& candidates) {
  const std::size_t need = static_cast<std::size_t>(spec.shard_count()) * spec.replication_factor();
  if (candidates.size() < need) {
    throw Error(ErrorCode::InsufficientNodes, spec.path().str() + " needs " + std::to_string(need) +
                                                  " nodes, layout offers " + std::to_string(candidates.size()));
  }
  std::vector<std::vector<NodeId>> members(spec.shard_count());
  for (std::uint32_t s = 0; s < spec.shard_count(); ++s) {
    for (std::uint32_t r = 0; r < spec.replication_factor(); ++r) {
      members[s].push_back(candidates[s * spec.replication_factor() + r]);
    }
  }
  return members;
}

}  // namespace affinity
