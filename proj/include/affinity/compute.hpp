#pragma once

// Trigger framework: handlers registered under key prefixes fire when a put
// lands on a node. Tasks that share an affinity key on a node run one at a
// time in arrival order; everything else only competes for the node's workers.

#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/error.hpp"
#include "affinity/hash.hpp"
#include "affinity/netsim.hpp"
#include "affinity/store.hpp"

namespace affinity {

enum class Step { Mot, Pred, Cd, Other };

inline constexpr std::string_view to_string(Step s) {
  switch (s) {
    case Step::Mot: return "MOT";
    case Step::Pred: return "PRED";
    case Step::Cd: return "CD";
    case Step::Other: return "OTHER";
  }
  return "?";
}

enum class TaskState { Queued, Running, Suspended, Done, Failed };

struct TriggerEvent {
  ObjectKey key;
  std::optional<AffinityKey> affinity_key;
  NodeId node;
  Micros fired_at = 0;
  std::string pool;
};

struct TaskContext {
  const TriggerEvent& event;
  const ObjectRef& trigger_object;
  Step step;
  std::mt19937_64& rng;
};

// What a handler wants to read before it computes. Gets are blocking and are
// issued one after the other; the optional list runs after them.
struct TaskPlan {
  std::vector<ObjectKey> gets;
  std::optional<std::string> list_prefix;
};

struct TaskInputs {
  std::vector<ObjectRef> gets;
  std::vector<ObjectRef> listed;
};

struct PutRequest {
  ObjectKey key;
  DataObject object;
  PutMode mode = PutMode::Volatile;
};

struct TaskOutput {
  Micros service_us = 0;
  std::vector<PutRequest> puts;
};

class Handler {
 public:
  virtual ~Handler() = default;
  virtual TaskPlan plan(const TaskContext& ctx) = 0;
  virtual TaskOutput run(const TaskContext& ctx, const TaskInputs& inputs) = 0;
};

struct UdlRegistration {
  std::string prefix;
  std::string handler_id;
  Step step = Step::Other;
};

// One row of the run log.
struct TaskRecord {
  std::uint64_t id = 0;
  Micros fired_at = 0;
  Micros start = 0;
  Micros done = 0;
  NodeId node;
  Step step = Step::Other;
  std::string key;
  std::string affinity_key;
  Micros fetch_us = 0;
  Micros service_us = 0;
  std::uint64_t remote_bytes = 0;
  TaskState state = TaskState::Queued;
  std::string error;
};

inline constexpr std::string_view kRunLogHeader =
    "fired_at_us,start_us,done_us,node,step,key,affinity_key,fetch_us,service_us,remote_bytes";

inline void write_run_log(std::ostream& os, const std::vector<TaskRecord>& rows) {
  os << kRunLogHeader << '\n';
  for (const auto& r : rows) {
    os << r.fired_at << ',' << r.start << ',' << r.done << ',' << r.node.value << ',' << to_string(r.step) << ','
       << r.key << ',' << r.affinity_key << ',' << r.fetch_us << ',' << r.service_us << ',' << r.remote_bytes
       << '\n';
  }
}

class Runtime {
 public:
  Runtime(Engine& engine, Store& store, std::vector<std::uint32_t> workers_per_node, std::uint64_t seed)
      : engine_(engine), store_(store), seed_(seed) {
    nodes_.resize(workers_per_node.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].workers = workers_per_node[i];
    store_.set_delivery_hook([this](const TriggerDelivery& d) { on_delivery(d); });
  }

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  const UdlRegistration& register_udl(std::string_view prefix, std::string handler_id, Step step,
                                      std::shared_ptr<Handler> handler) {
    check_key_text(prefix);
    for (const auto& r : registrations_) {
      if (r.reg.prefix == prefix) throw Error(ErrorCode::DuplicatePrefix, std::string(prefix));
    }
    registrations_.push_back({UdlRegistration{std::string(prefix), std::move(handler_id), step}, std::move(handler)});
    return registrations_.back().reg;
  }

  // Longest registered prefix matching at a segment boundary.
  const UdlRegistration* match(std::string_view key) const {
    const Registered* best = nullptr;
    for (const auto& r : registrations_) {
      if (has_segment_prefix(key, r.reg.prefix) && (!best || r.reg.prefix.size() > best->reg.prefix.size())) {
        best = &r;
      }
    }
    return best ? &best->reg : nullptr;
  }

  // Queues a task for `event` on event.node. Returns the task id, or nothing
  // when no handler is registered for the key.
  std::optional<std::uint64_t> dispatch(const TriggerEvent& event, ObjectRef trigger_object) {
    const Registered* reg = find_registered(event.key.view());
    if (!reg) return std::nullopt;
    if (event.node.value >= nodes_.size()) throw Error(ErrorCode::BadConfig, "trigger on unknown node");

    const std::uint64_t id = tasks_.size();
    Task& t = tasks_.emplace_back(Task{event, std::move(trigger_object), reg->handler, reg->reg.step});
    t.record.id = id;
    t.record.fired_at = event.fired_at;
    t.record.node = event.node;
    t.record.step = reg->reg.step;
    t.record.key = event.key.str();
    t.record.affinity_key = event.affinity_key ? event.affinity_key->str() : std::string();
    t.queue_key = event.pool + '\x1f' + (event.affinity_key ? event.affinity_key->str() : event.key.str());
    t.rng.seed(mix_seed(seed_, fnv1a64(event.key.view())));

    NodeState& n = nodes_[event.node.value];
    auto& q = n.queues[t.queue_key];
    q.push_back(id);
    if (q.size() == 1 && !n.active.count(t.queue_key)) n.eligible.insert({id, t.queue_key});
    pump(event.node);
    return id;
  }

  const std::vector<TaskRecord>& log() const noexcept { return log_; }

  std::vector<TaskRecord> unfinished() const {
    std::vector<TaskRecord> out;
    for (const auto& t : tasks_) {
      if (t.record.state != TaskState::Done && t.record.state != TaskState::Failed) out.push_back(t.record);
    }
    return out;
  }

  std::size_t suspended() const {
    std::size_t n = 0;
    for (const auto& t : tasks_) n += t.record.state == TaskState::Suspended;
    return n;
  }

  std::size_t task_count() const noexcept { return tasks_.size(); }
  std::uint32_t peak_running(NodeId node) const { return nodes_.at(node.value).peak; }
  std::uint32_t workers(NodeId node) const { return nodes_.at(node.value).workers; }

 private:
  struct Registered {
    UdlRegistration reg;
    std::shared_ptr<Handler> handler;
  };

  struct Task {
    TriggerEvent event;
    ObjectRef trigger_object;
    std::shared_ptr<Handler> handler;
    Step step;
    TaskRecord record{};
    std::string queue_key{};
    std::mt19937_64 rng{};
    TaskPlan plan{};
    TaskInputs inputs{};
    std::size_t next_get = 0;
    bool listed = false;
  };

  struct NodeState {
    std::uint32_t workers = 1;
    std::uint32_t busy = 0;
    std::uint32_t peak = 0;
    std::map<std::string, std::deque<std::uint64_t>> queues;
    std::set<std::string> active;
    // Heads of queues whose key is idle, ordered by task id (= dispatch order).
    std::set<std::pair<std::uint64_t, std::string>> eligible;
    std::deque<std::uint64_t> resumable;
    bool pumping = false;
    bool again = false;
  };

  const Registered* find_registered(std::string_view key) const {
    const UdlRegistration* r = match(key);
    if (!r) return nullptr;
    for (const auto& reg : registrations_) {
      if (&reg.reg == r) return &reg;
    }
    return nullptr;
  }

  void on_delivery(const TriggerDelivery& d) {
    dispatch(TriggerEvent{d.key, d.affinity, d.node, d.at, d.pool}, d.object);
  }

  Attribution attribution(const Task& t) const {
    return Attribution{t.record.key, std::string(to_string(t.step))};
  }

  TaskContext context(Task& t) { return TaskContext{t.event, t.trigger_object, t.step, t.rng}; }

  void acquire(NodeState& n) {
    ++n.busy;
    n.peak = std::max(n.peak, n.busy);
  }

  // Starts or resumes tasks while workers are free. Re-entrant calls are
  // folded into the outermost loop.
  void pump(NodeId node) {
    NodeState& n = nodes_[node.value];
    if (n.pumping) {
      n.again = true;
      return;
    }
    n.pumping = true;
    do {
      n.again = false;
      while (n.busy < n.workers) {
        if (!n.resumable.empty()) {
          auto id = n.resumable.front();
          n.resumable.pop_front();
          acquire(n);
          tasks_[id].record.state = TaskState::Running;
          advance(id);
        } else if (!n.eligible.empty()) {
          auto [head, qk] = *n.eligible.begin();
          n.eligible.erase(n.eligible.begin());
          n.queues[qk].pop_front();
          n.active.insert(qk);
          acquire(n);
          start(head);
        } else {
          break;
        }
      }
    } while (n.again);
    n.pumping = false;
  }

  void start(std::uint64_t id) {
    Task& t = tasks_[id];
    t.record.state = TaskState::Running;
    t.record.start = engine_.now();
    try {
      auto ctx = context(t);
      t.plan = t.handler->plan(ctx);
    } catch (const std::exception& e) {
      fail(id, e.what());
      return;
    }
    advance(id);
  }

  void advance(std::uint64_t id) {
    Task& t = tasks_[id];
    NodeState& n = nodes_[t.event.node.value];
    if (t.next_get < t.plan.gets.size()) {
      const ObjectKey key = t.plan.gets[t.next_get];
      std::optional<GetOutcome> out;
      try {
        out = store_.try_get(key, t.event.node, attribution(t));
      } catch (const std::exception& e) {
        fail(id, e.what());
        return;
      }
      if (!out) {
        t.record.state = TaskState::Suspended;
        --n.busy;
        NodeId node = t.event.node;
        store_.on_available(key, [this, id, node]() {
          nodes_[node.value].resumable.push_back(id);
          pump(node);
        });
        pump(node);
        return;
      }
      t.record.remote_bytes += out->remote_bytes;
      engine_.schedule_after(out->cost, "fetched " + key.str(), [this, id, obj = out->object]() {
        Task& tt = tasks_[id];
        tt.inputs.gets.push_back(obj);
        ++tt.next_get;
        advance(id);
      });
      return;
    }
    if (t.plan.list_prefix && !t.listed) {
      ListOutcome out;
      try {
        out = store_.list_prefix(*t.plan.list_prefix, t.event.node, attribution(t));
      } catch (const std::exception& e) {
        fail(id, e.what());
        return;
      }
      t.record.remote_bytes += out.remote_bytes;
      engine_.schedule_after(out.cost, "listed " + *t.plan.list_prefix,
                             [this, id, objs = std::move(out.objects)]() mutable {
                               Task& tt = tasks_[id];
                               tt.inputs.listed = std::move(objs);
                               tt.listed = true;
                               advance(id);
                             });
      return;
    }

    t.record.fetch_us = engine_.now() - t.record.start;
    TaskOutput output;
    try {
      auto ctx = context(t);
      output = t.handler->run(ctx, t.inputs);
    } catch (const std::exception& e) {
      fail(id, e.what());
      return;
    }
    t.record.service_us = output.service_us;
    engine_.schedule_after(output.service_us, "service-done " + t.record.key,
                           [this, id, puts = std::move(output.puts)]() mutable {
                             Task& tt = tasks_[id];
                             for (auto& p : puts) {
                               try {
                                 auto rec = store_.put(p.key, std::move(p.object), p.mode, tt.event.node,
                                                       attribution(tt));
                                 tt.record.remote_bytes += rec.remote_bytes;
                               } catch (const std::exception& e) {
                                 tt.record.error += e.what();
                               }
                             }
                             finish(id, TaskState::Done);
                           });
  }

  void fail(std::uint64_t id, const std::string& what) {
    tasks_[id].record.error = what;
    finish(id, TaskState::Failed);
  }

  void finish(std::uint64_t id, TaskState state) {
    Task& t = tasks_[id];
    NodeState& n = nodes_[t.event.node.value];
    t.record.state = state;
    t.record.done = engine_.now();
    if (state == TaskState::Failed) t.record.fetch_us = t.record.done - t.record.start;
    --n.busy;
    n.active.erase(t.queue_key);
    auto& q = n.queues[t.queue_key];
    if (!q.empty()) n.eligible.insert({q.front(), t.queue_key});
    log_.push_back(t.record);
    t.plan = {};
    t.inputs = {};
    pump(t.event.node);
  }

  Engine& engine_;
  Store& store_;
  std::uint64_t seed_;
  std::deque<Registered> registrations_;
  std::deque<Task> tasks_;
  std::vector<NodeState> nodes_;
  std::vector<TaskRecord> log_;
};

}  // namespace affinity
