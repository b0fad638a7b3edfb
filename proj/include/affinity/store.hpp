#pragma once

// Sharded, volatile key/value store running on virtual time.
//
// Objects live in the shard picked by place(); all members of a shard hold the
// same state, which becomes visible only once the slowest replica transfer has
// finished. Every node has an optional cache that remembers what it read or
// wrote. All costs come from the LinkModel and are reported to the caller so
// that tasks can charge them to their own timeline.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/error.hpp"
#include "affinity/hash.hpp"
#include "affinity/netsim.hpp"

namespace affinity {

enum class PutMode { Trigger, Volatile };

inline constexpr std::string_view to_string(PutMode m) {
  return m == PutMode::Trigger ? "TRIGGER" : "VOLATILE";
}

struct DataObject {
  std::string key;
  std::uint64_t payload_size = 0;
  // Empty means a synthetic zero-filled buffer of payload_size bytes; only the
  // size is ever charged to the network.
  std::vector<std::byte> payload;
  std::uint64_t version = 0;
  Micros created_at = 0;
  // Engine sequence of the event that stores it: (created_at, commit_seq) is
  // the order in which objects become visible.
  std::uint64_t commit_seq = 0;
  std::map<std::string, std::int64_t> meta;

  static DataObject synthetic(std::string key, std::uint64_t size) {
    DataObject o;
    o.key = std::move(key);
    o.payload_size = size;
    return o;
  }
};

using ObjectRef = std::shared_ptr<const DataObject>;

enum class AccessKind { Put, Get, List };
enum class AccessSource { Cache, Local, Remote };

inline constexpr std::string_view to_string(AccessKind k) {
  switch (k) {
    case AccessKind::Put: return "put";
    case AccessKind::Get: return "get";
    case AccessKind::List: return "list";
  }
  return "?";
}

inline constexpr std::string_view to_string(AccessSource s) {
  switch (s) {
    case AccessSource::Cache: return "cache";
    case AccessSource::Local: return "local";
    case AccessSource::Remote: return "remote";
  }
  return "?";
}

// Who issued a store operation: the key of the triggering task (empty for
// client sources) and its step label.
struct Attribution {
  std::string task_key;
  std::string step;
};

struct AccessRecord {
  Micros at = 0;
  AccessKind kind = AccessKind::Get;
  std::string key;  // object key, or prefix for lists
  NodeId requester;
  NodeId peer;  // member written to / served from
  std::uint64_t bytes = 0;
  AccessSource source = AccessSource::Local;
  Attribution by;

  bool remote() const noexcept { return source == AccessSource::Remote; }
};

struct PutRecord {
  std::string key;
  PutMode mode = PutMode::Volatile;
  NodeId origin;
  NodeId designated;
  ShardId shard;
  std::string affinity_key;
  std::uint64_t bytes = 0;
  Micros issued_at = 0;
  Micros max_member_transfer = 0;
  Micros completes_at = 0;
  std::uint64_t remote_bytes = 0;
  Attribution by;
};

struct TriggerDelivery {
  ObjectKey key;
  std::optional<AffinityKey> affinity;
  std::string pool;
  NodeId node;
  Micros at = 0;
  ObjectRef object;
};

struct GetOutcome {
  ObjectRef object;
  Micros cost = 0;
  AccessSource source = AccessSource::Local;
  NodeId served_by;
  std::uint64_t remote_bytes = 0;
};

struct ListOutcome {
  std::vector<ObjectRef> objects;  // ordered by key
  Micros cost = 0;
  std::uint64_t remote_bytes = 0;
  std::vector<ShardId> consulted;
};

struct CacheConfig {
  bool enabled = true;
  std::optional<std::uint64_t> capacity_bytes;  // unbounded when absent
};

struct StoreCounters {
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t remote_bytes = 0;
  std::uint64_t fallback_placements = 0;
};

// Per-node object cache, LRU when a byte budget is configured.
class NodeCache {
 public:
  explicit NodeCache(std::optional<std::uint64_t> capacity = std::nullopt) : capacity_(capacity) {}

  ObjectRef lookup(const std::string& key) {
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }

  void insert(const ObjectRef& obj) {
    auto it = index_.find(obj->key);
    if (it != index_.end()) {
      bytes_ -= it->second->second->payload_size;
      it->second->second = obj;
      lru_.splice(lru_.begin(), lru_, it->second);
    } else {
      lru_.emplace_front(obj->key, obj);
      index_[obj->key] = lru_.begin();
    }
    bytes_ += obj->payload_size;
    if (!capacity_) return;
    while (bytes_ > *capacity_ && !lru_.empty()) {
      auto& victim = lru_.back();
      bytes_ -= victim.second->payload_size;
      index_.erase(victim.first);
      lru_.pop_back();
    }
  }

  std::size_t size() const noexcept { return index_.size(); }
  std::uint64_t bytes() const noexcept { return bytes_; }

 private:
  using Entry = std::pair<std::string, ObjectRef>;
  std::optional<std::uint64_t> capacity_;
  std::list<Entry> lru_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
  std::uint64_t bytes_ = 0;
};

class Store {
 public:
  using DeliveryHook = std::function<void(const TriggerDelivery&)>;
  using Waiter = std::function<void()>;

  Store(Engine& engine, LinkModel link, std::size_t node_count, CacheConfig cache = {})
      : engine_(engine), link_(link), cache_config_(cache) {
    link_.validate();
    caches_.reserve(node_count);
    for (std::size_t i = 0; i < node_count; ++i) caches_.emplace_back(cache.capacity_bytes);
  }

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  void set_delivery_hook(DeliveryHook hook) { on_delivery_ = std::move(hook); }

  // Registers a pool; shard i is served by candidates[i*r .. i*r + r - 1].
  // Without candidates every node of the cluster is eligible, in id order.
  const PoolSpec& create_object_pool(std::string_view path, std::uint32_t shard_count,
                                     std::uint32_t replication_factor,
                                     std::optional<std::string> affinity_regex = std::nullopt,
                                     std::optional<std::vector<NodeId>> candidates = std::nullopt) {
    if (registry_.find(path)) throw Error(ErrorCode::DuplicatePool, std::string(path));
    PoolSpec spec(path, shard_count, replication_factor, std::move(affinity_regex));
    std::vector<NodeId> nodes;
    if (candidates) {
      nodes = *candidates;
    } else {
      for (std::uint32_t i = 0; i < caches_.size(); ++i) nodes.push_back(NodeId{i});
    }
    auto members = assign_shards(spec, nodes);
    return add_pool(std::move(spec), std::move(members));
  }

  const PoolSpec& add_pool(PoolSpec spec, std::vector<std::vector<NodeId>> members) {
    for (const auto& shard : members) {
      for (auto n : shard) {
        if (n.value >= caches_.size()) throw Error(ErrorCode::InsufficientNodes, "member outside cluster");
      }
    }
    const PoolSpec& added = registry_.add(std::move(spec));
    auto& state = pools_[added.path().str()];
    state.members = std::move(members);
    state.shards.resize(added.shard_count());
    pool_order_.push_back(added.path().str());
    return added;
  }

  const PoolRegistry& registry() const noexcept { return registry_; }
  const LinkModel& link() const noexcept { return link_; }
  const CacheConfig& cache_config() const noexcept { return cache_config_; }
  std::size_t node_count() const noexcept { return caches_.size(); }

  const std::vector<NodeId>& members(const ShardId& shard) const {
    return pools_.at(shard.pool).members.at(shard.index);
  }

  bool is_member(const ShardId& shard, NodeId node) const {
    const auto& m = members(shard);
    return std::find(m.begin(), m.end(), node) != m.end();
  }

  // Member that runs tasks triggered by `key`: members[hash64(key) mod r].
  NodeId designated_member(const ShardId& shard, std::string_view key) const {
    const auto& m = members(shard);
    return m[fnv1a64(key) % m.size()];
  }

  PutRecord put(const ObjectKey& key, DataObject object, PutMode mode, NodeId origin, Attribution by = {}) {
    const PoolSpec& pool = registry_.resolve(key.view());
    Placement pl = place(pool, key);
    if (pl.fallback) ++counters_.fallback_placements;
    const auto& shard_members = members(pl.shard);
    const Micros now = engine_.now();

    PutRecord rec;
    rec.key = key.str();
    rec.mode = mode;
    rec.origin = origin;
    rec.designated = designated_member(pl.shard, key.view());
    rec.shard = pl.shard;
    rec.affinity_key = pl.affinity ? pl.affinity->str() : std::string();
    rec.bytes = object.payload_size;
    rec.issued_at = now;
    rec.by = by;

    std::vector<NodeId> targets;
    if (mode == PutMode::Volatile) {
      targets = shard_members;
    } else {
      targets.push_back(rec.designated);
    }
    for (auto member : targets) {
      const bool local = member == origin;
      Micros t = link_.transfer_time(object.payload_size, local);
      rec.max_member_transfer = std::max(rec.max_member_transfer, t);
      if (!local) rec.remote_bytes += object.payload_size;
      record_access(AccessKind::Put, key.str(), origin, member, object.payload_size,
                    local ? AccessSource::Local : AccessSource::Remote, by);
    }
    rec.completes_at = now + rec.max_member_transfer;

    object.key = key.str();
    object.version = ++issued_versions_[key.str()];
    object.created_at = rec.completes_at;
    object.commit_seq = engine_.next_sequence();
    auto ref = std::make_shared<const DataObject>(std::move(object));

    // The writer keeps what it produced.
    if (cache_config_.enabled) caches_[origin.value].insert(ref);

    puts_.push_back(rec);
    engine_.schedule_at(rec.completes_at, "put-complete " + rec.key,
                        [this, ref, mode, pl, node = rec.designated, key]() {
                          complete_put(key, ref, mode, pl, node);
                        });
    return rec;
  }

  // Non-blocking lookup. Returns nullopt when the object is not stored; no
  // counters move in that case.
  std::optional<GetOutcome> try_get(const ObjectKey& key, NodeId requester, const Attribution& by = {}) {
    const PoolSpec& pool = registry_.resolve(key.view());
    if (cache_config_.enabled) {
      if (auto hit = caches_[requester.value].lookup(key.str())) {
        ++counters_.cache_hits;
        record_access(AccessKind::Get, key.str(), requester, requester, hit->payload_size, AccessSource::Cache, by);
        return GetOutcome{hit, 0, AccessSource::Cache, requester, 0};
      }
    }
    Placement pl = place(pool, key);
    auto& shard = pools_.at(pl.shard.pool).shards.at(pl.shard.index);
    auto it = shard.objects.find(key.str());
    if (it == shard.objects.end()) return std::nullopt;
    if (pl.fallback) ++counters_.fallback_placements;
    ++counters_.cache_misses;

    GetOutcome out;
    out.object = it->second;
    if (is_member(pl.shard, requester)) {
      out.source = AccessSource::Local;
      out.served_by = requester;
    } else {
      out.source = AccessSource::Remote;
      out.served_by = members(pl.shard).front();
      out.cost = link_.transfer_time(out.object->payload_size, false);
      out.remote_bytes = out.object->payload_size;
      counters_.remote_bytes += out.remote_bytes;
    }
    record_access(AccessKind::Get, key.str(), requester, out.served_by, out.object->payload_size, out.source, by);
    remember(requester, {out.object}, out.cost);
    return out;
  }

  GetOutcome get(const ObjectKey& key, NodeId requester, const Attribution& by = {}) {
    if (auto out = try_get(key, requester, by)) return *out;
    throw Error(ErrorCode::ObjectMissing, key.str());
  }

  // Runs `waiter` at the instant `key` becomes available (now, if it already is).
  void on_available(const ObjectKey& key, Waiter waiter) {
    const PoolSpec& pool = registry_.resolve(key.view());
    Placement pl = place(pool, key);
    const auto& shard = pools_.at(pl.shard.pool).shards.at(pl.shard.index);
    if (shard.objects.count(key.str())) {
      engine_.schedule_after(0, "waiter " + key.str(), std::move(waiter));
      return;
    }
    waiters_[key.str()].push_back(std::move(waiter));
  }

  // Blocking get: `done` runs once the object has arrived at the requester,
  // i.e. at availability time plus the fetch cost.
  void get_blocking(const ObjectKey& key, NodeId requester, Attribution by,
                    std::function<void(const GetOutcome&)> done) {
    on_available(key, [this, key, requester, by = std::move(by), done = std::move(done)]() {
      GetOutcome out = get(key, requester, by);
      engine_.schedule_after(out.cost, "get-done " + key.str(), [out, done]() { done(out); });
    });
  }

  ListOutcome list_prefix(std::string_view prefix, NodeId requester, const Attribution& by = {}) {
    const PoolSpec& pool = registry_.resolve(prefix);
    const auto& state = pools_.at(pool.path().str());
    std::vector<std::uint32_t> shards;
    std::optional<AffinityKey> label;
    if (pool.pattern()) label = extract_affinity_key(*pool.pattern(), prefix);
    if (label) {
      shards.push_back(static_cast<std::uint32_t>(fnv1a64(label->str()) % pool.shard_count()));
    } else {
      for (std::uint32_t i = 0; i < pool.shard_count(); ++i) shards.push_back(i);
    }

    ListOutcome out;
    const std::string p(prefix);
    for (auto index : shards) {
      ShardId sid{pool.path().str(), index};
      out.consulted.push_back(sid);
      std::uint64_t bytes = 0;
      const auto& objects = state.shards[index].objects;
      for (auto it = objects.lower_bound(p); it != objects.end() && it->first.compare(0, p.size(), p) == 0; ++it) {
        out.objects.push_back(it->second);
        bytes += it->second->payload_size;
      }
      const bool local = is_member(sid, requester);
      if (!local) {
        out.cost = std::max(out.cost, link_.transfer_time(bytes, false));
        out.remote_bytes += bytes;
      }
      record_access(AccessKind::List, p, requester, local ? requester : state.members[index].front(), bytes,
                    local ? AccessSource::Local : AccessSource::Remote, by);
    }
    counters_.remote_bytes += out.remote_bytes;
    std::sort(out.objects.begin(), out.objects.end(),
              [](const ObjectRef& a, const ObjectRef& b) { return a->key < b->key; });
    remember(requester, out.objects, out.cost);
    return out;
  }

  // One line per object per member: pool,shard,node,key,affinity_key,bytes,version
  void dump(std::ostream& os) const {
    for (const auto& path : pool_order_) {
      const auto& state = pools_.at(path);
      for (std::size_t s = 0; s < state.shards.size(); ++s) {
        for (auto node : state.members[s]) {
          for (const auto& [key, obj] : state.shards[s].objects) {
            os << path << ',' << s << ',' << node.value << ',' << key << ',' << state.shards[s].labels.at(key) << ','
               << obj->payload_size << ',' << obj->version << '\n';
          }
        }
      }
    }
  }

  std::size_t pending_waiters() const {
    std::size_t n = 0;
    for (const auto& [k, v] : waiters_) n += v.size();
    return n;
  }

  std::vector<std::string> waiting_keys() const {
    std::vector<std::string> keys;
    for (const auto& [k, v] : waiters_) {
      if (!v.empty()) keys.push_back(k);
    }
    return keys;
  }

  const StoreCounters& counters() const noexcept { return counters_; }
  const std::vector<AccessRecord>& accesses() const noexcept { return accesses_; }
  const std::vector<PutRecord>& puts() const noexcept { return puts_; }
  const NodeCache& cache(NodeId node) const { return caches_.at(node.value); }

 private:
  struct ShardState {
    std::map<std::string, ObjectRef> objects;
    std::map<std::string, std::string> labels;
  };
  struct PoolState {
    std::vector<std::vector<NodeId>> members;
    std::vector<ShardState> shards;
  };

  void complete_put(const ObjectKey& key, const ObjectRef& ref, PutMode mode, const Placement& pl, NodeId node) {
    if (mode == PutMode::Volatile) {
      auto& shard = pools_.at(pl.shard.pool).shards.at(pl.shard.index);
      shard.objects[key.str()] = ref;
      shard.labels[key.str()] = pl.affinity ? pl.affinity->str() : std::string();
      auto it = waiters_.find(key.str());
      if (it != waiters_.end()) {
        auto ready = std::move(it->second);
        waiters_.erase(it);
        for (auto& w : ready) w();
      }
    }
    // Trigger puts store nothing, so waiters stay parked until a volatile put.
    if (on_delivery_) on_delivery_(TriggerDelivery{key, pl.affinity, pl.shard.pool, node, engine_.now(), ref});
  }

  void remember(NodeId node, std::vector<ObjectRef> objects, Micros after) {
    if (!cache_config_.enabled || objects.empty()) return;
    engine_.schedule_after(after, "cache-fill", [this, node, objects = std::move(objects)]() {
      for (const auto& o : objects) caches_[node.value].insert(o);
    });
  }

  void record_access(AccessKind kind, std::string key, NodeId requester, NodeId peer, std::uint64_t bytes,
                     AccessSource source, const Attribution& by) {
    if (kind == AccessKind::Put && source == AccessSource::Remote) counters_.remote_bytes += bytes;
    accesses_.push_back(AccessRecord{engine_.now(), kind, std::move(key), requester, peer, bytes, source, by});
  }

  Engine& engine_;
  LinkModel link_;
  CacheConfig cache_config_;
  PoolRegistry registry_;
  std::map<std::string, PoolState> pools_;
  std::vector<std::string> pool_order_;
  std::vector<NodeCache> caches_;
  std::map<std::string, std::vector<Waiter>> waiters_;
  std::map<std::string, std::uint64_t> issued_versions_;
  std::vector<AccessRecord> accesses_;
  std::vector<PutRecord> puts_;
  StoreCounters counters_;
  DeliveryHook on_delivery_;
};

}  // namespace affinity
