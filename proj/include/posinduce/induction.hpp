#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "posinduce/corpus.hpp"
#include "posinduce/error.hpp"
#include "posinduce/hmm.hpp"
#include "posinduce/ids.hpp"
#include "posinduce/ngram_stats.hpp"

namespace posinduce {

struct InductionConfig {
  std::size_t target_clusters = 13;
  Direction direction = Direction::left;
  std::size_t min_followers = 2;
  std::uint64_t min_total = 2;
  std::size_t candidate_contexts_per_iter = 1;
  std::size_t bw_iters = 5;
  double bw_tol = 1e-4;
  double lambda = 0.1;
  std::uint64_t seed = 1;
  // Existing clusters tried as merge targets per candidate; 0 tries all.
  std::size_t max_existing_targets = 0;

  void validate() const {
    if (target_clusters < 1) throw PreconditionError("target_clusters must be at least 1");
    if (min_followers < 2) throw PreconditionError("min_followers must be at least 2");
    if (min_total < 1) throw PreconditionError("min_total must be at least 1");
    if (candidate_contexts_per_iter < 1) throw PreconditionError("candidate_contexts_per_iter must be at least 1");
    if (bw_iters < 1) throw PreconditionError("bw_iters must be at least 1");
    if (!(bw_tol > 0.0)) throw PreconditionError("bw_tol must be positive");
    if (!(lambda >= 0.0)) throw PreconditionError("lambda must be non-negative");
  }
};

// One agglomerative step. `members` lists every word moved; `target` is the
// pre-merge id of the cluster they joined, or empty for a fresh cluster.
// Fallback merges carry no context.
struct MergeRecord {
  std::size_t iteration = 0;
  std::vector<SymbolId> members;
  std::optional<ClusterId> target;
  std::optional<ContextKey<ClusterId>> context;
  double score = 0.0;

  bool is_new_cluster() const { return !target.has_value(); }
  friend bool operator==(const MergeRecord&, const MergeRecord&) = default;
};

// Word -> cluster assignment. Cluster ids are always dense and canonical:
// numbered by the smallest word id they contain.
class ClusterState {
 public:
  ClusterState() = default;

  ClusterId cluster_of(SymbolId w) const { return assignment_.at(w.index()); }
  std::size_t num_clusters() const { return num_clusters_; }
  std::size_t vocab_size() const { return assignment_.size(); }
  const std::vector<ClusterId>& assignment() const { return assignment_; }
  const std::vector<MergeRecord>& history() const { return history_; }

  std::vector<SymbolId> members(ClusterId c) const {
    std::vector<SymbolId> out;
    for (std::size_t w = 0; w < assignment_.size(); ++w)
      if (assignment_[w] == c) out.emplace_back(w);
    return out;
  }

  // Relabels so ids are ordered by smallest member; any labels accepted.
  static ClusterState from_labels(std::span<const std::uint32_t> labels, std::vector<MergeRecord> history = {}) {
    ClusterState s;
    std::map<std::uint32_t, ClusterId> relabel;
    s.assignment_.reserve(labels.size());
    for (auto l : labels) {
      auto [it, inserted] = relabel.try_emplace(l, ClusterId{relabel.size()});
      s.assignment_.push_back(it->second);
    }
    s.num_clusters_ = relabel.size();
    s.history_ = std::move(history);
    return s;
  }

  friend bool operator==(const ClusterState&, const ClusterState&) = default;

 private:
  std::vector<ClusterId> assignment_;
  std::size_t num_clusters_ = 0;
  std::vector<MergeRecord> history_;
};

namespace detail {

inline std::vector<std::uint32_t> labels_of(const ClusterState& state) {
  std::vector<std::uint32_t> labels;
  labels.reserve(state.vocab_size());
  for (auto c : state.assignment()) labels.push_back(c.value);
  return labels;
}

inline std::vector<std::uint32_t> singleton_labels(std::size_t vocab_size) {
  std::vector<std::uint32_t> labels(vocab_size);
  for (std::size_t w = 0; w < vocab_size; ++w) labels[w] = static_cast<std::uint32_t>(w);
  return labels;
}

}  // namespace detail

inline ClusterState initial_state(const Corpus& corpus) {
  if (corpus.empty() || corpus.vocab().empty()) throw EmptyCorpusError("cannot induce clusters from an empty corpus");
  return ClusterState::from_labels(detail::singleton_labels(corpus.vocab().size()));
}

using ClusterSequences = std::vector<std::vector<ClusterId>>;

inline ClusterSequences project(const std::vector<std::vector<SymbolId>>& words, const ClusterState& state) {
  ClusterSequences out;
  out.reserve(words.size());
  for (const auto& seq : words) {
    auto& p = out.emplace_back();
    p.reserve(seq.size());
    for (auto w : seq) {
      if (w.index() >= state.vocab_size()) throw InconsistentStateError("word without a cluster assignment");
      p.push_back(state.cluster_of(w));
    }
  }
  return out;
}

inline ClusterSequences project(const Corpus& corpus, const ClusterState& state) {
  return project(corpus.symbol_sequences(), state);
}

// Partition after moving every word of `members` (and of `target`, if set)
// into one cluster.
inline ClusterState apply_merge(const ClusterState& state, std::span<const ClusterId> members,
                                std::optional<ClusterId> target) {
  if (members.empty()) throw InvalidCandidateError("merge needs at least one member cluster");
  for (auto m : members)
    if (m.index() >= state.num_clusters()) throw InvalidCandidateError("member cluster out of range");
  if (target && target->index() >= state.num_clusters()) throw InvalidCandidateError("target cluster out of range");
  const ClusterId sink = target.value_or(members.front());
  std::vector<std::uint32_t> labels(state.vocab_size());
  for (std::size_t w = 0; w < labels.size(); ++w) {
    const auto c = state.assignment()[w];
    const bool moved = std::find(members.begin(), members.end(), c) != members.end();
    labels[w] = moved ? sink.value : c.value;
  }
  return ClusterState::from_labels(labels, state.history());
}

namespace detail {

inline ClusterState apply_record(const ClusterState& state, const MergeRecord& rec) {
  std::vector<ClusterId> clusters;
  for (auto w : rec.members) {
    if (w.index() >= state.vocab_size()) throw InconsistentStateError("history names a word outside the vocabulary");
    clusters.push_back(state.cluster_of(w));
  }
  std::sort(clusters.begin(), clusters.end());
  clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());
  return apply_merge(state, clusters, rec.target);
}

}  // namespace detail

// Rebuilds the state reached by applying `history` to singleton clusters.
inline ClusterState replay(std::size_t vocab_size, std::span<const MergeRecord> history) {
  auto state = ClusterState::from_labels(detail::singleton_labels(vocab_size));
  for (const auto& rec : history) state = detail::apply_record(state, rec);
  return ClusterState::from_labels(detail::labels_of(state), std::vector<MergeRecord>(history.begin(), history.end()));
}

struct Candidate {
  ContextKey<ClusterId> context;
  // Follower clusters ordered by count (descending), then id.
  std::vector<ClusterId> members;
  std::vector<std::uint64_t> counts;

  std::vector<ClusterId> sorted_members(std::size_t limit) const {
    std::vector<ClusterId> m(members.begin(), members.begin() + std::min(limit, members.size()));
    std::sort(m.begin(), m.end());
    return m;
  }
};

// Lowest-entropy contexts over the cluster-projected corpus, with their
// follower sets as merge candidates.
inline std::vector<Candidate> select_candidates(const ClusterSequences& projected, const InductionConfig& config) {
  const auto table = build_trigram_table(projected, config.direction);
  const auto ranked = rank_contexts(table, std::max<std::size_t>(config.min_followers, 2), config.min_total);
  std::vector<Candidate> out;
  for (const auto& r : ranked) {
    if (out.size() == config.candidate_contexts_per_iter) break;
    const auto& dist = table.entries.at(r.key);
    std::vector<std::pair<ClusterId, std::uint64_t>> followers(dist.counts.begin(), dist.counts.end());
    std::stable_sort(followers.begin(), followers.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Candidate c{r.key, {}, {}};
    for (auto [id, n] : followers) {
      c.members.push_back(id);
      c.counts.push_back(n);
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace detail {

inline std::vector<hmm::Sequence> to_hmm_sequences(const std::vector<std::vector<SymbolId>>& words) {
  std::vector<hmm::Sequence> out;
  out.reserve(words.size());
  for (const auto& s : words) {
    auto& q = out.emplace_back();
    q.reserve(s.size());
    for (auto w : s) q.push_back(w.value);
  }
  return out;
}

inline std::vector<std::uint64_t> cluster_frequencies(const std::vector<hmm::Sequence>& words,
                                                      const ClusterState& state) {
  std::vector<std::uint64_t> freq(state.num_clusters(), 0);
  for (const auto& s : words)
    for (auto w : s) ++freq[state.cluster_of(SymbolId{w}).index()];
  return freq;
}

}  // namespace detail

// Log-likelihood of the word corpus under a second-order HMM whose states are
// the clusters of `state`, computed the direct way: each state may only emit
// the words of its own cluster, everything starts from a seeded
// jittered-uniform initialisation and is fitted with hmm::train. Costs
// O(K^3) per Baum-Welch step; score_partition gives the same number quickly.
inline double score_partition_baum_welch(std::span<const hmm::Sequence> words, const ClusterState& state,
                                         const InductionConfig& config) {
  const std::size_t k = state.num_clusters();
  const std::size_t v = state.vocab_size();
  auto params = hmm::jittered_uniform(k, v, config.seed);
  for (hmm::State c = 0; c < k; ++c) {
    auto row = params.emission_row(c);
    for (std::size_t w = 0; w < v; ++w)
      if (state.assignment()[w].index() != c) row[w] = hmm::kNegInf;
    const double z = hmm::log_sum_exp(row);
    for (double& x : row)
      if (x != hmm::kNegInf) x -= z;
  }
  const auto result = hmm::train(std::move(params), words, {config.bw_iters, config.bw_tol, config.lambda});
  return result.final_log_likelihood();
}

namespace detail {

// Closed form of score_partition_baum_welch. Every token has exactly one
// state able to emit it, so the E-step is deterministic: after the first
// M-step, emissions and transitions are the lambda-smoothed relative
// frequencies of the cluster sequence and never change again. Only
// one-token sentences keep the fit moving, through the share of the
// initial table they spread over the unseen second state; that update is
// per cell and is iterated here exactly as Baum-Welch would. The starting
// log-likelihood (needed for the first convergence test) uses the jittered
// cells directly, each of which is available in O(1).
//
// Built once from the current partition; score() evaluates any relabelling
// of it, so every hypothesis of a step shares the counting work.
class PartitionScorer {
 public:
  PartitionScorer(std::span<const hmm::Sequence> words, const ClusterState& state, const InductionConfig& config)
      : seed_(config.seed),
        lambda_(config.lambda),
        iters_(config.bw_iters),
        tol_(config.bw_tol),
        vocab_size_(state.vocab_size()),
        word_freq_(state.vocab_size(), 0),
        singles_(state.num_clusters(), 0) {
    for (auto c : state.assignment()) word_cluster_.push_back(c.value);
    std::vector<Gram> tri, pairs;
    for (const auto& seq : words) {
      for (auto w : seq) {
        if (w >= vocab_size_) throw InconsistentStateError("word symbol outside the partitioned vocabulary");
        ++word_freq_[w];
      }
      if (seq.empty()) continue;
      ++sentences_;
      if (seq.size() == 1) {
        ++singles_[word_cluster_[seq[0]]];
        continue;
      }
      pairs.push_back({word_cluster_[seq[0]], word_cluster_[seq[1]], 0, 1});
      for (std::size_t t = 2; t < seq.size(); ++t)
        tri.push_back({word_cluster_[seq[t - 2]], word_cluster_[seq[t - 1]], word_cluster_[seq[t]], 1});
    }
    trigrams_ = combine(std::move(tri));
    pairs_ = combine(std::move(pairs));
    for (auto f : word_freq_)
      if (f > 0) word_term_ += xlogy(f, static_cast<double>(f) + lambda_);
  }

  // relabel[c] is the hypothesised id (dense in [0, k)) of current cluster c.
  double score(std::span<const std::uint32_t> relabel, std::size_t k) const {
    const double kd = static_cast<double>(k);
    const double lam = lambda_;

    // Transitions: sum n log((n + lam) / (n_ctx + K lam)); start: n log(f / K).
    std::vector<std::pair<std::uint64_t, std::uint64_t>> tri;
    tri.reserve(trigrams_.size());
    for (const auto& g : trigrams_)
      tri.emplace_back((std::uint64_t{relabel[g.a]} * k + relabel[g.b]) * k + relabel[g.c], g.n);
    sum_duplicates(tri);
    double fitted = 0.0, start = 0.0;
    for (std::size_t lo = 0; lo < tri.size();) {
      const std::uint64_t ctx = tri[lo].first / k;
      std::uint64_t total = 0;
      std::size_t hi = lo;
      for (; hi < tri.size() && tri[hi].first / k == ctx; ++hi) {
        const auto [key, n] = tri[hi];
        total += n;
        fitted += xlogy(n, static_cast<double>(n) + lam);
        start += static_cast<double>(n) *
                 std::log(hmm::detail::jitter_factor(seed_, hmm::detail::kJitterTransition, ctx, key % k, k, kJitter) / kd);
      }
      fitted -= xlogy(total, static_cast<double>(total) + kd * lam);
      lo = hi;
    }

    // Emissions: lambda goes only to member words; start renormalises the
    // jittered row over the members.
    std::vector<std::uint64_t> tokens(k, 0), size(k, 0);
    std::vector<double> mass(k, 0.0);
    fitted += word_term_;
    for (std::size_t w = 0; w < vocab_size_; ++w) {
      const auto c = relabel[word_cluster_[w]];
      const double f = hmm::detail::jitter_factor(seed_, hmm::detail::kJitterEmission, c, w, vocab_size_, kJitter);
      ++size[c];
      mass[c] += f;
      tokens[c] += word_freq_[w];
      if (word_freq_[w] > 0) start += static_cast<double>(word_freq_[w]) * std::log(f);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (tokens[c] == 0) continue;
      fitted -= xlogy(tokens[c], static_cast<double>(tokens[c]) + static_cast<double>(size[c]) * lam);
      start -= static_cast<double>(tokens[c]) * std::log(mass[c]);
    }

    // Initial pairs. Z is the same after every step: each one-token sentence
    // spreads exactly one unit over its row.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
    pairs.reserve(pairs_.size());
    for (const auto& g : pairs_) pairs.emplace_back(std::uint64_t{relabel[g.a]} * k + relabel[g.b], g.n);
    sum_duplicates(pairs);
    std::vector<std::uint64_t> singles(k, 0), row_total(k, 0);
    for (std::size_t c = 0; c < singles_.size(); ++c) singles[relabel[c]] += singles_[c];
    for (const auto& [key, n] : pairs) row_total[key / k] += n;
    const double z = static_cast<double>(sentences_) + kd * kd * lam;

    struct Cell {
      double n, m, x, marginal;  // count, one-token sentences in row, P(i,j), row marginal
      double row_marginal;       // marginal from the first step on
    };
    std::vector<Cell> moving;
    for (const auto& [key, n] : pairs) {
      const std::uint64_t i = key / k;
      const double f = hmm::detail::jitter_factor(seed_, hmm::detail::kJitterInitial, i, key % k, k, kJitter);
      start += static_cast<double>(n) * std::log(f / (kd * kd));
      if (singles[i] == 0) {
        fitted += xlogy(n, (static_cast<double>(n) + lam) / z);
      } else {
        const double m = static_cast<double>(singles[i]);
        moving.push_back({static_cast<double>(n), m, f / (kd * kd), 1.0 / kd,
                          (static_cast<double>(row_total[i]) + kd * lam + m) / z});
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (singles[i] == 0) continue;
      const double m = static_cast<double>(singles[i]);
      start -= m * std::log(kd);
      fitted += m * std::log((static_cast<double>(row_total[i]) + kd * lam + m) / z);
    }

    double previous = start;
    for (std::size_t it = 0; it < iters_; ++it) {
      double current = fitted;
      for (auto& cell : moving) {
        cell.x = (cell.n + lam + cell.m * cell.x / cell.marginal) / z;
        cell.marginal = cell.row_marginal;
        current += cell.n * std::log(cell.x);
      }
      const double delta = current - previous;
      previous = current;
      if (delta < tol_) break;
    }
    return previous;
  }

  // Identity relabelling: the current partition itself.
  double score_current() const {
    std::vector<std::uint32_t> id(singles_.size());
    for (std::size_t c = 0; c < id.size(); ++c) id[c] = static_cast<std::uint32_t>(c);
    return score(id, id.size());
  }

 private:
  static constexpr double kJitter = 0.01;

  struct Gram {
    std::uint32_t a, b, c;
    std::uint64_t n;
  };

  static double xlogy(std::uint64_t n, double y) { return static_cast<double>(n) * std::log(y); }

  static std::vector<Gram> combine(std::vector<Gram> grams) {
    std::sort(grams.begin(), grams.end(),
              [](const Gram& x, const Gram& y) { return std::tie(x.a, x.b, x.c) < std::tie(y.a, y.b, y.c); });
    std::vector<Gram> out;
    for (const auto& g : grams) {
      if (!out.empty() && out.back().a == g.a && out.back().b == g.b && out.back().c == g.c)
        out.back().n += g.n;
      else
        out.push_back(g);
    }
    return out;
  }

  static void sum_duplicates(std::vector<std::pair<std::uint64_t, std::uint64_t>>& v) {
    std::sort(v.begin(), v.end());
    std::size_t out = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (out > 0 && v[out - 1].first == v[i].first)
        v[out - 1].second += v[i].second;
      else
        v[out++] = v[i];
    }
    v.resize(out);
  }

  std::uint64_t seed_;
  double lambda_;
  std::size_t iters_;
  double tol_;
  std::size_t vocab_size_;
  std::vector<std::uint64_t> word_freq_;
  std::vector<std::uint64_t> singles_;
  std::vector<std::uint32_t> word_cluster_;
  std::vector<Gram> trigrams_;
  std::vector<Gram> pairs_;
  std::uint64_t sentences_ = 0;
  double word_term_ = 0.0;
};

// Where each current cluster lands after a merge.
inline std::vector<std::uint32_t> relabelling(const ClusterState& before, const ClusterState& after) {
  std::vector<std::uint32_t> map(before.num_clusters(), 0);
  for (std::size_t w = 0; w < before.vocab_size(); ++w) map[before.assignment()[w].index()] = after.assignment()[w].value;
  return map;
}

}  // namespace detail

// Score of a partition: the corpus log-likelihood reached by fitting the
// cluster HMM as in score_partition_baum_welch.
inline double score_partition(std::span<const hmm::Sequence> words, const ClusterState& state,
                              const InductionConfig& config) {
  return detail::PartitionScorer(words, state, config).score_current();
}

namespace detail {

inline double score_hypothesis(const PartitionScorer& scorer, const ClusterState& state,
                               std::span<const ClusterId> members, std::optional<ClusterId> target) {
  if (members.empty()) throw InvalidCandidateError("candidate member set is empty");
  const auto next = apply_merge(state, members, target);
  return scorer.score(relabelling(state, next), next.num_clusters());
}

}  // namespace detail

// Score of the hypothesis "merge `members` into `target`" (a fresh cluster
// when target is empty).
inline double score_assignment(std::span<const hmm::Sequence> words, const ClusterState& state,
                               std::span<const ClusterId> members, std::optional<ClusterId> target,
                               const InductionConfig& config) {
  if (members.empty()) throw InvalidCandidateError("candidate member set is empty");
  return detail::score_hypothesis(detail::PartitionScorer(words, state, config), state, members, target);
}

namespace detail {

struct Hypothesis {
  double score;
  std::optional<ClusterId> target;
  ContextKey<ClusterId> context;
  std::vector<ClusterId> members;
};

// Score descending; then fresh cluster before existing, lower target id,
// lexicographic context.
inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.target.has_value() != b.target.has_value()) return !a.target.has_value();
  if (a.target && *a.target != *b.target) return *a.target < *b.target;
  return a.context < b.context;
}

inline std::vector<ClusterId> existing_targets(const ClusterState& state, std::span<const ClusterId> excluded,
                                               const std::vector<std::uint64_t>& freq, std::size_t cap) {
  std::vector<ClusterId> out;
  for (std::size_t c = 0; c < state.num_clusters(); ++c) {
    const ClusterId id{c};
    if (std::find(excluded.begin(), excluded.end(), id) == excluded.end()) out.push_back(id);
  }
  if (cap > 0 && out.size() > cap) {
    std::stable_sort(out.begin(), out.end(), [&](ClusterId a, ClusterId b) { return freq[a.index()] > freq[b.index()]; });
    out.resize(cap);
    std::sort(out.begin(), out.end());
  }
  return out;
}

inline ClusterState commit(const ClusterState& state, const Hypothesis& h, std::optional<ContextKey<ClusterId>> context) {
  MergeRecord rec;
  rec.iteration = state.history().size() + 1;
  for (auto c : h.members) {
    auto ws = state.members(c);
    rec.members.insert(rec.members.end(), ws.begin(), ws.end());
  }
  std::sort(rec.members.begin(), rec.members.end());
  rec.target = h.target;
  rec.context = context;
  rec.score = h.score;
  auto next = apply_merge(state, h.members, h.target);
  auto history = state.history();
  history.push_back(std::move(rec));
  return ClusterState::from_labels(detail::labels_of(next), std::move(history));
}

}  // namespace detail

// One candidate-driven merge, or nullopt when no context qualifies. Member
// sets are trimmed (most frequent followers kept) so a merge never takes the
// cluster count below the target.
inline std::optional<ClusterState> step(const ClusterState& state, const Corpus& corpus, const InductionConfig& config) {
  config.validate();
  if (state.num_clusters() <= config.target_clusters)
    throw PreconditionError("state already has " + std::to_string(state.num_clusters()) + " clusters (target " +
                            std::to_string(config.target_clusters) + ")");
  const auto word_ids = corpus.symbol_sequences();
  const auto words = detail::to_hmm_sequences(word_ids);
  const auto candidates = select_candidates(project(word_ids, state), config);
  if (candidates.empty()) return std::nullopt;
  const auto freq = detail::cluster_frequencies(words, state);
  const std::size_t room = state.num_clusters() - config.target_clusters;
  const detail::PartitionScorer scorer(words, state, config);

  std::optional<detail::Hypothesis> best;
  auto consider = [&](detail::Hypothesis h) {
    if (!best || detail::better(h, *best)) best = std::move(h);
  };
  for (const auto& cand : candidates) {
    const auto fresh = cand.sorted_members(room + 1);
    consider({detail::score_hypothesis(scorer, state, fresh, std::nullopt), std::nullopt, cand.context, fresh});
    const auto joining = cand.sorted_members(room);
    for (auto t : detail::existing_targets(state, joining, freq, config.max_existing_targets))
      consider({detail::score_hypothesis(scorer, state, joining, t), t, cand.context, joining});
  }
  return detail::commit(state, *best, best->context);
}

// Moves the least frequent singleton cluster (or, when none is left, the
// least frequent cluster) into whichever existing cluster scores best.
inline ClusterState fallback_step(const ClusterState& state, const Corpus& corpus, const InductionConfig& config) {
  if (state.num_clusters() < 2) throw PreconditionError("nothing left to merge");
  const auto words = detail::to_hmm_sequences(corpus.symbol_sequences());
  const auto freq = detail::cluster_frequencies(words, state);
  std::vector<std::size_t> sizes(state.num_clusters(), 0);
  for (auto c : state.assignment()) ++sizes[c.index()];
  auto pick = [&](bool singletons_only) -> std::optional<ClusterId> {
    std::optional<ClusterId> src;
    for (std::size_t c = 0; c < state.num_clusters(); ++c) {
      if (singletons_only && sizes[c] != 1) continue;
      if (!src || freq[c] < freq[src->index()]) src = ClusterId{c};
    }
    return src;
  };
  const ClusterId source = pick(true).value_or(*pick(false));
  const std::vector<ClusterId> members{source};
  const detail::PartitionScorer scorer(words, state, config);
  std::optional<detail::Hypothesis> best;
  for (auto t : detail::existing_targets(state, members, freq, config.max_existing_targets)) {
    detail::Hypothesis h{detail::score_hypothesis(scorer, state, members, t), t, {}, members};
    if (!best || detail::better(h, *best)) best = std::move(h);
  }
  return detail::commit(state, *best, std::nullopt);
}

using ProgressCallback = std::function<void(const ClusterState&, const MergeRecord&)>;

// Agglomerates until exactly target_clusters remain. When no context
// qualifies, min_total is relaxed to 1, then fallback_step is used.
inline ClusterState induce(const Corpus& corpus, const InductionConfig& config, const ProgressCallback& progress = {}) {
  config.validate();
  auto state = initial_state(corpus);
  if (state.num_clusters() < config.target_clusters)
    throw InfeasibleTargetError("target of " + std::to_string(config.target_clusters) + " clusters exceeds vocabulary of " +
                                std::to_string(state.num_clusters()) + " words");
  InductionConfig relaxed = config;
  relaxed.min_followers = 2;
  relaxed.min_total = 1;
  while (state.num_clusters() > config.target_clusters) {
    auto next = step(state, corpus, config);
    if (!next && (relaxed.min_followers != config.min_followers || relaxed.min_total != config.min_total))
      next = step(state, corpus, relaxed);
    if (!next) next = fallback_step(state, corpus, config);
    state = std::move(*next);
    if (progress) progress(state, state.history().back());
  }
  return state;
}

// ---------------------------------------------------------------------------
// Output files.

// "form<TAB>clusterID", sorted by form (byte order).
inline void write_clusters(std::ostream& out, const Corpus& corpus, const ClusterState& state) {
  std::vector<std::pair<std::string, ClusterId>> rows;
  for (std::size_t w = 0; w < state.vocab_size(); ++w)
    rows.emplace_back(corpus.vocab().str(SymbolId{w}), state.assignment()[w]);
  std::sort(rows.begin(), rows.end());
  for (const auto& [form, c] : rows) out << form << '\t' << c << '\n';
}

// iteration, context first, context second, members (comma separated),
// target ("new" or pre-merge cluster id), score with 6 decimals. Context
// clusters render as their word when singleton, "[id]" otherwise, "-" for
// fallback merges.
inline void write_history(std::ostream& out, const Corpus& corpus, const ClusterState& state) {
  auto before = ClusterState::from_labels(detail::singleton_labels(state.vocab_size()));
  for (const auto& rec : state.history()) {
    auto name = [&](ClusterId c) {
      const auto ws = before.members(c);
      return ws.size() == 1 ? corpus.vocab().str(ws.front()) : "[" + std::to_string(c.value) + "]";
    };
    out << rec.iteration << '\t';
    if (rec.context)
      out << name(rec.context->first) << '\t' << name(rec.context->second);
    else
      out << "-\t-";
    out << '\t';
    for (std::size_t m = 0; m < rec.members.size(); ++m) out << (m ? "," : "") << corpus.vocab().str(rec.members[m]);
    out << '\t' << (rec.target ? std::to_string(rec.target->value) : std::string("new"));
    std::ostringstream score;
    score << std::fixed << std::setprecision(6) << rec.score;
    out << '\t' << score.str() << '\n';
    before = detail::apply_record(before, rec);
  }
}

}  // namespace posinduce
