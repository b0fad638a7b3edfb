#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "affinity/compute.hpp"
#include "affinity/error.hpp"
#include "affinity/netsim.hpp"
#include "affinity/store.hpp"

namespace affinity {

struct SimOptions {
  LinkModel link;
  CacheConfig cache;
  std::uint64_t seed = 0;
  bool record_events = false;
};

// A cluster instance: engine, store and trigger runtime wired together.
// Address-stable because the parts refer to each other.
class Simulator {
 public:
  Simulator(const ClusterLayout& layout, const SimOptions& options)
      : layout_(layout),
        store_(engine_, options.link, layout.nodes.size(), options.cache),
        runtime_(engine_, store_, workers_of(layout), options.seed) {
    layout_.validate();
    engine_.set_recording(options.record_events);
    for (const auto& pa : layout_.pools) store_.add_pool(pa.spec, pa.members);
  }

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  Engine& engine() noexcept { return engine_; }
  Store& store() noexcept { return store_; }
  Runtime& runtime() noexcept { return runtime_; }
  const ClusterLayout& layout() const noexcept { return layout_; }

  // Drains the event queue. Tasks still parked on a blocking get at that
  // point can never resume.
  Micros run_until_idle() {
    Micros end = engine_.run_until_idle();
    auto stuck = runtime_.suspended();
    if (stuck > 0) {
      auto keys = store_.waiting_keys();
      std::string detail = std::to_string(stuck) + " task(s) suspended with no pending events";
      if (!keys.empty()) detail += "; first missing key " + keys.front();
      throw Error(ErrorCode::DeadlockDetected, detail);
    }
    return end;
  }

 private:
  static std::vector<std::uint32_t> workers_of(const ClusterLayout& layout) {
    std::vector<std::uint32_t> w;
    for (const auto& n : layout.nodes) w.push_back(n.workers);
    return w;
  }

  ClusterLayout layout_;
  Engine engine_;
  Store store_;
  Runtime runtime_;
};

inline std::unique_ptr<Simulator> build_cluster(const ClusterLayout& layout, const SimOptions& options = {}) {
  return std::make_unique<Simulator>(layout, options);
}

}  // namespace affinity
