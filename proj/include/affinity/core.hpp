#pragma once

#include <algorithm>
#include <compare>
#include <deque>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "affinity/error.hpp"
#include "affinity/hash.hpp"
#include "affinity/regex.hpp"

namespace affinity {

// Hierarchical object key such as "/positions/little3_7_42". Always valid
// once constructed.
class ObjectKey {
 public:
  static ObjectKey parse(std::string_view text);

  const std::string& str() const noexcept { return text_; }
  std::string_view view() const noexcept { return text_; }

  friend auto operator<=>(const ObjectKey&, const ObjectKey&) = default;
  friend bool operator==(const ObjectKey&, const ObjectKey&) = default;
  friend std::ostream& operator<<(std::ostream& os, const ObjectKey& k) { return os << k.text_; }

 private:
  explicit ObjectKey(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

inline void check_key_text(std::string_view text) {
  auto bad = [&](const char* why) {
    throw Error(ErrorCode::MalformedKey, "'" + std::string(text) + "': " + why);
  };
  if (text.empty()) bad("empty key");
  if (text.front() != '/') bad("missing leading '/'");
  if (text.back() == '/') bad("empty segment");
  if (text.find("//") != std::string_view::npos) bad("empty segment");
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') bad("whitespace");
  }
}

inline ObjectKey ObjectKey::parse(std::string_view text) {
  check_key_text(text);
  return ObjectKey(std::string(text));
}

inline ObjectKey validate_key(std::string_view text) { return ObjectKey::parse(text); }

// True when `key` equals `prefix` or continues it with a '/'.
inline bool has_segment_prefix(std::string_view key, std::string_view prefix) noexcept {
  if (key.size() < prefix.size() || key.substr(0, prefix.size()) != prefix) return false;
  return key.size() == prefix.size() || key[prefix.size()] == '/';
}

class PoolPath {
 public:
  explicit PoolPath(std::string_view prefix) : key_(ObjectKey::parse(prefix)) {}

  const std::string& str() const noexcept { return key_.str(); }

  friend auto operator<=>(const PoolPath&, const PoolPath&) = default;
  friend bool operator==(const PoolPath&, const PoolPath&) = default;

 private:
  ObjectKey key_;
};

class AffinityKey {
 public:
  explicit AffinityKey(std::string label) : label_(std::move(label)) {
    if (label_.empty()) throw Error(ErrorCode::MalformedKey, "affinity key must be non-empty");
  }

  const std::string& str() const noexcept { return label_; }

  friend auto operator<=>(const AffinityKey&, const AffinityKey&) = default;
  friend bool operator==(const AffinityKey&, const AffinityKey&) = default;

 private:
  std::string label_;
};

enum class OpKind { PutVolatile, PutTrigger, Get, List };

struct Descriptor {
  ObjectKey key;
  OpKind op_kind;
};

struct NodeId {
  std::uint32_t value = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;
};

struct ShardId {
  std::string pool;
  std::uint32_t index = 0;

  friend auto operator<=>(const ShardId&, const ShardId&) = default;
  friend bool operator==(const ShardId&, const ShardId&) = default;
};

// Object pool definition. The affinity regex, when present, is compiled at
// construction so a PoolSpec that exists is always usable.
class PoolSpec {
 public:
  PoolSpec(std::string_view path, std::uint32_t shard_count, std::uint32_t replication_factor,
           std::optional<std::string> affinity_regex = std::nullopt)
      : path_(path), shard_count_(shard_count), replication_factor_(replication_factor) {
    if (shard_count_ < 1) throw Error(ErrorCode::BadConfig, path_.str() + ": shard_count must be >= 1");
    if (replication_factor_ < 1) {
      throw Error(ErrorCode::BadConfig, path_.str() + ": replication_factor must be >= 1");
    }
    if (affinity_regex) pattern_.emplace(*affinity_regex);
  }

  const PoolPath& path() const noexcept { return path_; }
  std::uint32_t shard_count() const noexcept { return shard_count_; }
  std::uint32_t replication_factor() const noexcept { return replication_factor_; }
  const std::optional<Pattern>& pattern() const noexcept { return pattern_; }
  bool grouped() const noexcept { return pattern_.has_value(); }

  std::optional<std::string> affinity_regex() const {
    if (!pattern_) return std::nullopt;
    return pattern_->source();
  }

 private:
  PoolPath path_;
  std::uint32_t shard_count_;
  std::uint32_t replication_factor_;
  std::optional<Pattern> pattern_;
};

// The regex is matched against the whole key; the leftmost match is the
// affinity key. An empty match counts as no match.
inline std::optional<AffinityKey> extract_affinity_key(const Pattern& pattern, std::string_view key) {
  auto m = pattern.search(key);
  if (!m || m->length == 0) return std::nullopt;
  return AffinityKey(std::string(key.substr(m->offset, m->length)));
}

inline std::optional<AffinityKey> extract_affinity_key(const Pattern& pattern, const ObjectKey& key) {
  return extract_affinity_key(pattern, key.view());
}

inline std::optional<AffinityKey> extract_affinity_key(std::string_view regex, const ObjectKey& key) {
  return extract_affinity_key(Pattern(regex), key.view());
}

struct Placement {
  ShardId shard;
  std::optional<AffinityKey> affinity;
  // The pool is grouped but the key did not match its regex.
  bool fallback = false;

  // What the key hashes on: the affinity label when there is one, otherwise
  // the full key.
  std::string_view hash_basis(std::string_view key) const noexcept {
    return affinity ? std::string_view(affinity->str()) : key;
  }
};

inline Placement place(const PoolSpec& pool, std::string_view key) {
  Placement p;
  p.shard.pool = pool.path().str();
  if (pool.pattern()) {
    p.affinity = extract_affinity_key(*pool.pattern(), key);
    p.fallback = !p.affinity.has_value();
  }
  p.shard.index = static_cast<std::uint32_t>(fnv1a64(p.hash_basis(key)) % pool.shard_count());
  return p;
}

inline Placement place(const PoolSpec& pool, const ObjectKey& key) { return place(pool, key.view()); }

inline ShardId shard_for(const PoolSpec& pool, const ObjectKey& key) { return place(pool, key).shard; }

// Set of pools, looked up by segment-boundary prefix.
class PoolRegistry {
 public:
  const PoolSpec& add(PoolSpec spec) {
    for (const auto& p : pools_) {
      const auto& a = p.path().str();
      const auto& b = spec.path().str();
      if (a == b) throw Error(ErrorCode::DuplicatePool, b);
      if (has_segment_prefix(a, b) || has_segment_prefix(b, a)) {
        throw Error(ErrorCode::DuplicatePool, b + " overlaps registered pool " + a);
      }
    }
    pools_.push_back(std::move(spec));
    return pools_.back();
  }

  const PoolSpec& resolve(std::string_view key) const {
    for (const auto& p : pools_) {
      if (has_segment_prefix(key, p.path().str())) return p;
    }
    throw Error(ErrorCode::NoSuchPool, std::string(key));
  }

  const PoolSpec* find(std::string_view path) const {
    for (const auto& p : pools_) {
      if (p.path().str() == path) return &p;
    }
    return nullptr;
  }

  bool empty() const noexcept { return pools_.empty(); }
  std::size_t size() const noexcept { return pools_.size(); }
  auto begin() const { return pools_.begin(); }
  auto end() const { return pools_.end(); }

 private:
  std::deque<PoolSpec> pools_;
};

inline const PoolSpec& resolve_pool(const ObjectKey& key, const PoolRegistry& registry) {
  if (registry.empty()) throw Error(ErrorCode::NoSuchPool, "registry is empty");
  return registry.resolve(key.view());
}

}  // namespace affinity
