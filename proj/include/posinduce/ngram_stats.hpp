#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "posinduce/error.hpp"

namespace posinduce {

// Which side of the conditioned symbol the context bigram sits on.
//   left:  window (x, u, v) -> context (u, v) predicts x (the preceding word)
//   right: window (u, v, x) -> context (u, v) predicts x (the following word)
enum class Direction { left, right };

inline const char* to_string(Direction d) { return d == Direction::left ? "left" : "right"; }

inline Direction parse_direction(const std::string& s) {
  if (s == "left") return Direction::left;
  if (s == "right") return Direction::right;
  throw PreconditionError("direction must be 'left' or 'right', got '" + s + "'");
}

template <class Symbol>
struct ContextKey {
  Symbol first;
  Symbol second;

  friend auto operator<=>(const ContextKey&, const ContextKey&) = default;
};

template <class Symbol>
struct FollowerDistribution {
  std::map<Symbol, std::uint64_t> counts;
  std::uint64_t total = 0;

  void add(Symbol s, std::uint64_t n = 1) {
    counts[s] += n;
    total += n;
  }
  std::size_t support() const { return counts.size(); }

  friend bool operator==(const FollowerDistribution&, const FollowerDistribution&) = default;
};

template <class Symbol>
struct TrigramTable {
  Direction direction = Direction::left;
  std::map<ContextKey<Symbol>, FollowerDistribution<Symbol>> entries;

  std::uint64_t window_count() const {
    std::uint64_t n = 0;
    for (const auto& [key, dist] : entries) n += dist.total;
    return n;
  }

  friend bool operator==(const TrigramTable&, const TrigramTable&) = default;
};

// Counts every in-sentence length-3 window. No boundary padding, so a
// sentence shorter than three symbols contributes nothing.
template <class Symbol>
TrigramTable<Symbol> build_trigram_table(const std::vector<std::vector<Symbol>>& sequences, Direction direction) {
  TrigramTable<Symbol> table;
  table.direction = direction;
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i + 2 < seq.size(); ++i) {
      if (direction == Direction::left)
        table.entries[{seq[i + 1], seq[i + 2]}].add(seq[i]);
      else
        table.entries[{seq[i], seq[i + 1]}].add(seq[i + 2]);
    }
  }
  return table;
}

template <class Symbol>
std::map<Symbol, double> conditional_distribution(const TrigramTable<Symbol>& table, const ContextKey<Symbol>& key) {
  auto it = table.entries.find(key);
  if (it == table.entries.end()) throw AbsentContextError("context bigram not present in trigram table");
  std::map<Symbol, double> out;
  const double total = static_cast<double>(it->second.total);
  for (const auto& [s, c] : it->second.counts) out.emplace(s, static_cast<double>(c) / total);
  return out;
}

// Shannon entropy in nats with 0 ln 0 = 0.
inline double entropy(std::span<const double> dist) {
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw InvalidDistributionError("negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidDistributionError("probabilities sum to " + std::to_string(sum));
  double h = 0.0;
  for (double p : dist)
    if (p > 0.0) h -= p * std::log(p);
  return h > 0.0 ? h : 0.0;
}

template <class Symbol>
double entropy(const std::map<Symbol, double>& dist) {
  std::vector<double> p;
  p.reserve(dist.size());
  for (const auto& [s, v] : dist) p.push_back(v);
  return entropy(p);
}

// Entropy of the normalised counts. Counts are sorted first so distributions
// with the same multiset of counts get bit-identical values.
template <class Symbol>
double follower_entropy(const FollowerDistribution<Symbol>& dist) {
  std::vector<std::uint64_t> counts;
  counts.reserve(dist.counts.size());
  for (const auto& [s, c] : dist.counts) counts.push_back(c);
  std::sort(counts.begin(), counts.end(), std::greater<>{});
  std::vector<double> p;
  p.reserve(counts.size());
  for (auto c : counts) p.push_back(static_cast<double>(c) / static_cast<double>(dist.total));
  return entropy(p);
}

template <class Symbol>
struct RankedContext {
  ContextKey<Symbol> key;
  double entropy = 0.0;
  std::uint64_t total = 0;
  std::size_t follower_count = 0;
};

// Contexts with at least min_followers distinct followers and min_total
// observations, lowest entropy first. Ties: larger total, then key order.
template <class Symbol>
std::vector<RankedContext<Symbol>> rank_contexts(const TrigramTable<Symbol>& table, std::size_t min_followers,
                                                 std::uint64_t min_total) {
  if (min_followers < 2) throw PreconditionError("min_followers must be at least 2");
  if (min_total < 1) throw PreconditionError("min_total must be at least 1");
  std::vector<RankedContext<Symbol>> ranked;
  for (const auto& [key, dist] : table.entries) {
    if (dist.support() < min_followers || dist.total < min_total) continue;
    ranked.push_back({key, follower_entropy(dist), dist.total, dist.support()});
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.entropy != b.entropy) return a.entropy < b.entropy;
    if (a.total != b.total) return a.total > b.total;
    return a.key < b.key;
  });
  return ranked;
}

}  // namespace posinduce
