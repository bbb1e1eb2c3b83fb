#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "posinduce/error.hpp"

// Second-order hidden Markov model over K hidden states and V observed
// symbols. A state at position t depends on the states at t-1 and t-2; the
// pair of states at positions 0 and 1 is drawn from a joint initial table.
// Everything is stored and computed in natural-log space.
namespace posinduce::hmm {

using Symbol = std::uint32_t;
using State = std::uint32_t;
using Sequence = std::vector<Symbol>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

class HmmParams {
 public:
  HmmParams() = default;

  // All cells start at log 0 = -inf; callers fill them in.
  HmmParams(std::size_t num_states, std::size_t num_symbols)
      : k_(num_states),
        v_(num_symbols),
        emission_(num_states * num_symbols, kNegInf),
        transition_(num_states * num_states * num_states, kNegInf),
        initial_(num_states * num_states, kNegInf) {
    if (num_states == 0 || num_symbols == 0) throw PreconditionError("HMM needs at least one state and one symbol");
  }

  std::size_t num_states() const { return k_; }
  std::size_t num_symbols() const { return v_; }

  double& emission(State k, Symbol w) { return emission_[k * v_ + w]; }
  double emission(State k, Symbol w) const { return emission_[k * v_ + w]; }
  // log P(state k at t | states i at t-2, j at t-1)
  double& transition(State i, State j, State k) { return transition_[(i * k_ + j) * k_ + k]; }
  double transition(State i, State j, State k) const { return transition_[(i * k_ + j) * k_ + k]; }
  // log P(states i, j at positions 0, 1)
  double& initial(State i, State j) { return initial_[i * k_ + j]; }
  double initial(State i, State j) const { return initial_[i * k_ + j]; }

  std::span<double> emission_row(State k) { return {emission_.data() + k * v_, v_}; }
  std::span<const double> emission_row(State k) const { return {emission_.data() + k * v_, v_}; }
  std::span<double> transition_slice(State i, State j) { return {transition_.data() + (i * k_ + j) * k_, k_}; }
  std::span<const double> transition_slice(State i, State j) const {
    return {transition_.data() + (i * k_ + j) * k_, k_};
  }
  std::span<double> initial_table() { return initial_; }
  std::span<const double> initial_table() const { return initial_; }

  // log P(first state = i), the initial table summed over the second state.
  double initial_marginal(State i) const { return log_sum_exp(std::span<const double>(initial_.data() + i * k_, k_)); }

  // Throws PreconditionError unless every row, slice and the initial table
  // sums to one within tol in probability space.
  void validate(double tol = 1e-9) const {
    auto check = [tol](std::span<const double> row, const char* what) {
      double s = 0.0;
      for (double x : row) s += std::exp(x);
      if (std::abs(s - 1.0) > tol) throw PreconditionError(std::string(what) + " does not sum to one");
    };
    for (State k = 0; k < k_; ++k) check(emission_row(k), "emission row");
    for (State i = 0; i < k_; ++i)
      for (State j = 0; j < k_; ++j) check(transition_slice(i, j), "transition slice");
    check(initial_, "initial table");
  }

  friend bool operator==(const HmmParams&, const HmmParams&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t v_ = 0;
  std::vector<double> emission_;
  std::vector<double> transition_;
  std::vector<double> initial_;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum JitterTable : std::uint64_t { kJitterInitial = 1, kJitterEmission = 2, kJitterTransition = 3 };

// Multiplicative jitter of one cell, computed from its coordinates alone.
// Cells col and len-1-col of a row get opposite offsets (the middle cell of
// an odd-length row gets none), so each row's jittered mass is exactly len
// and any single cell's probability is known without visiting the row.
inline double jitter_factor(std::uint64_t seed, std::uint64_t table, std::uint64_t row, std::size_t col,
                            std::size_t len, double jitter) {
  const std::size_t mirror = len - 1 - col;
  if (col == mirror) return 1.0;
  std::uint64_t h = splitmix64(seed ^ splitmix64(table));
  h = splitmix64(h ^ row);
  h = splitmix64(h ^ std::min(col, mirror));
  const double e = jitter * (2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0);
  return col < mirror ? 1.0 + e : 1.0 - e;
}

// Normalises non-negative weights in place and stores their logs.
inline void normalize_to_log(std::span<double> row) {
  double s = 0.0;
  for (double x : row) s += x;
  for (double& x : row) x = x > 0.0 ? std::log(x / s) : kNegInf;
}

}  // namespace detail

// Uniform distributions with every cell scaled by a factor in
// [1 - jitter, 1 + jitter] before normalisation (see detail::jitter_factor).
// The initial table is one distribution over K*K pairs whose rows i each
// carry mass K before normalisation.
inline HmmParams jittered_uniform(std::size_t num_states, std::size_t num_symbols, std::uint64_t seed,
                                  double jitter = 0.01) {
  const std::size_t k = num_states;
  HmmParams p(k, num_symbols);
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j) p.initial(i, j) = detail::jitter_factor(seed, detail::kJitterInitial, i, j, k, jitter);
  detail::normalize_to_log(p.initial_table());
  for (State c = 0; c < k; ++c) {
    auto row = p.emission_row(c);
    for (Symbol w = 0; w < num_symbols; ++w)
      row[w] = detail::jitter_factor(seed, detail::kJitterEmission, c, w, num_symbols, jitter);
    detail::normalize_to_log(row);
  }
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j) {
      auto row = p.transition_slice(i, j);
      for (State x = 0; x < k; ++x)
        row[x] = detail::jitter_factor(seed, detail::kJitterTransition, i * k + j, x, k, jitter);
      detail::normalize_to_log(row);
    }
  return p;
}

// First-order view of the second-order model: composite state (i, j) means
// "previous state i, current state j". Only (i, j) -> (j, k) moves are
// possible; every other composite transition is a structural zero.
class SecondOrderLattice {
 public:
  explicit SecondOrderLattice(const HmmParams& params) : params_(&params), k_(params.num_states()) {}

  std::size_t num_composite() const { return k_ * k_; }
  std::size_t composite(State prev, State cur) const { return prev * k_ + cur; }
  State previous(std::size_t c) const { return static_cast<State>(c / k_); }
  State current(std::size_t c) const { return static_cast<State>(c % k_); }

  double transition(std::size_t from, std::size_t to) const {
    if (current(from) != previous(to)) return kNegInf;
    return params_->transition(previous(from), current(from), current(to));
  }
  // Emission of the composite state is the emission of its current state.
  double emission(std::size_t c, Symbol w) const { return params_->emission(current(c), w); }
  // Covers positions 0 and 1 together.
  double initial(std::size_t c) const { return params_->initial(previous(c), current(c)); }

  const HmmParams& params() const { return *params_; }

 private:
  const HmmParams* params_;
  std::size_t k_;
};

inline SecondOrderLattice encode_second_order(const HmmParams& params) { return SecondOrderLattice(params); }

struct Posteriors {
  std::size_t num_states = 0;
  // [t][k] = P(state k at t | sequence)
  std::vector<std::vector<double>> state_marginals;
  // [t][i*K + j] = P(i at t-1, j at t | sequence); empty at t = 0
  std::vector<std::vector<double>> bigram_marginals;
  // [t][(i*K + j)*K + k] = P(i at t-2, j at t-1, k at t | sequence); empty for t < 2
  std::vector<std::vector<double>> transition_marginals;
  double log_likelihood = kNegInf;
};

namespace detail {

// Forward/backward tables restricted to states that can emit the observed
// symbol. Position t >= 1 holds one cell per (active[t-1], active[t]) pair.
struct SparseLattice {
  std::vector<std::vector<State>> active;
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> beta;
  double log_likelihood = kNegInf;

  std::size_t cell(std::size_t t, std::size_t prev_idx, std::size_t cur_idx) const {
    return prev_idx * active[t].size() + cur_idx;
  }
};

inline std::vector<std::vector<State>> active_states(const HmmParams& params, std::span<const Symbol> seq) {
  if (seq.empty()) throw PreconditionError("sequence must contain at least one symbol");
  std::vector<std::vector<State>> active(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t] >= params.num_symbols())
      throw InvalidSymbolError("symbol " + std::to_string(seq[t]) + " outside vocabulary of size " +
                               std::to_string(params.num_symbols()));
    for (State k = 0; k < params.num_states(); ++k)
      if (params.emission(k, seq[t]) != kNegInf) active[t].push_back(k);
  }
  return active;
}

inline void forward(const HmmParams& params, std::span<const Symbol> seq, SparseLattice& lat) {
  const SecondOrderLattice view(params);
  const std::size_t n = seq.size();
  lat.alpha.assign(n, {});
  for (const auto& a : lat.active)
    if (a.empty()) {
      lat.log_likelihood = kNegInf;
      return;
    }
  if (n == 1) {
    std::vector<double> terms;
    for (State i : lat.active[0]) terms.push_back(params.emission(i, seq[0]) + params.initial_marginal(i));
    lat.log_likelihood = log_sum_exp(terms);
    return;
  }
  {
    const auto& a0 = lat.active[0];
    const auto& a1 = lat.active[1];
    auto& alpha = lat.alpha[1];
    alpha.resize(a0.size() * a1.size());
    for (std::size_t ii = 0; ii < a0.size(); ++ii)
      for (std::size_t jj = 0; jj < a1.size(); ++jj) {
        const auto c = view.composite(a0[ii], a1[jj]);
        alpha[lat.cell(1, ii, jj)] = view.initial(c) + params.emission(a0[ii], seq[0]) + view.emission(c, seq[1]);
      }
  }
  std::vector<double> terms;
  for (std::size_t t = 2; t < n; ++t) {
    const auto& ap = lat.active[t - 2];
    const auto& aj = lat.active[t - 1];
    const auto& ak = lat.active[t];
    const auto& prev = lat.alpha[t - 1];
    auto& alpha = lat.alpha[t];
    alpha.resize(aj.size() * ak.size());
    for (std::size_t jj = 0; jj < aj.size(); ++jj)
      for (std::size_t kk = 0; kk < ak.size(); ++kk) {
        const auto to = view.composite(aj[jj], ak[kk]);
        terms.clear();
        for (std::size_t ii = 0; ii < ap.size(); ++ii)
          terms.push_back(prev[lat.cell(t - 1, ii, jj)] + view.transition(view.composite(ap[ii], aj[jj]), to));
        alpha[lat.cell(t, jj, kk)] = log_sum_exp(terms) + view.emission(to, seq[t]);
      }
  }
  lat.log_likelihood = log_sum_exp(lat.alpha[n - 1]);
}

inline void backward(const HmmParams& params, std::span<const Symbol> seq, SparseLattice& lat) {
  const SecondOrderLattice view(params);
  const std::size_t n = seq.size();
  lat.beta.assign(n, {});
  if (n == 1) return;
  lat.beta[n - 1].assign(lat.alpha[n - 1].size(), 0.0);
  std::vector<double> terms;
  for (std::size_t t = n - 1; t-- > 1;) {
    const auto& ai = lat.active[t - 1];
    const auto& aj = lat.active[t];
    const auto& ak = lat.active[t + 1];
    const auto& next = lat.beta[t + 1];
    auto& beta = lat.beta[t];
    beta.resize(ai.size() * aj.size());
    for (std::size_t ii = 0; ii < ai.size(); ++ii)
      for (std::size_t jj = 0; jj < aj.size(); ++jj) {
        const auto from = view.composite(ai[ii], aj[jj]);
        terms.clear();
        for (std::size_t kk = 0; kk < ak.size(); ++kk) {
          const auto to = view.composite(aj[jj], ak[kk]);
          terms.push_back(view.transition(from, to) + view.emission(to, seq[t + 1]) + next[lat.cell(t + 1, jj, kk)]);
        }
        beta[lat.cell(t, ii, jj)] = log_sum_exp(terms);
      }
  }
}

inline SparseLattice run_forward_backward(const HmmParams& params, std::span<const Symbol> seq) {
  SparseLattice lat;
  lat.active = active_states(params, seq);
  forward(params, seq, lat);
  if (lat.log_likelihood == kNegInf) throw ImpossibleSequenceError("sequence has zero probability under the model");
  backward(params, seq, lat);
  return lat;
}

// Visits every non-zero posterior. Callbacks receive probabilities:
//   on_state(t, k, p), on_bigram(t, i, j, p) for t >= 1,
//   on_transition(t, i, j, k, p) for t >= 2.
template <class OnState, class OnBigram, class OnTransition>
void visit_posteriors(const HmmParams& params, std::span<const Symbol> seq, const SparseLattice& lat,
                      OnState&& on_state, OnBigram&& on_bigram, OnTransition&& on_transition) {
  const std::size_t n = seq.size();
  const double ll = lat.log_likelihood;
  if (n == 1) {
    for (State i : lat.active[0])
      on_state(0, i, std::exp(params.emission(i, seq[0]) + params.initial_marginal(i) - ll));
    return;
  }
  std::vector<std::vector<double>> gamma(n);
  for (std::size_t t = 0; t < n; ++t) gamma[t].assign(lat.active[t].size(), 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    const auto& ai = lat.active[t - 1];
    const auto& aj = lat.active[t];
    for (std::size_t ii = 0; ii < ai.size(); ++ii)
      for (std::size_t jj = 0; jj < aj.size(); ++jj) {
        const auto c = lat.cell(t, ii, jj);
        const double p = std::exp(lat.alpha[t][c] + lat.beta[t][c] - ll);
        on_bigram(t, ai[ii], aj[jj], p);
        gamma[t][jj] += p;
        if (t == 1) gamma[0][ii] += p;
      }
  }
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t kk = 0; kk < lat.active[t].size(); ++kk) on_state(t, lat.active[t][kk], gamma[t][kk]);
  for (std::size_t t = 2; t < n; ++t) {
    const auto& ai = lat.active[t - 2];
    const auto& aj = lat.active[t - 1];
    const auto& ak = lat.active[t];
    for (std::size_t ii = 0; ii < ai.size(); ++ii)
      for (std::size_t jj = 0; jj < aj.size(); ++jj) {
        const double a = lat.alpha[t - 1][lat.cell(t - 1, ii, jj)];
        for (std::size_t kk = 0; kk < ak.size(); ++kk) {
          const double lp = a + params.transition(ai[ii], aj[jj], ak[kk]) + params.emission(ak[kk], seq[t]) +
                            lat.beta[t][lat.cell(t, jj, kk)] - ll;
          on_transition(t, ai[ii], aj[jj], ak[kk], std::exp(lp));
        }
      }
  }
}

}  // namespace detail

// Total log-likelihood only (forward pass). Throws ImpossibleSequenceError
// when every path has zero probability.
inline double log_likelihood(const HmmParams& params, std::span<const Symbol> seq) {
  detail::SparseLattice lat;
  lat.active = detail::active_states(params, seq);
  detail::forward(params, seq, lat);
  if (lat.log_likelihood == kNegInf) throw ImpossibleSequenceError("sequence has zero probability under the model");
  return lat.log_likelihood;
}

// Exact posterior marginals, materialised densely. Intended for inspection
// and testing; Baum-Welch accumulates without building these tables.
inline Posteriors forward_backward(const HmmParams& params, std::span<const Symbol> seq) {
  const auto lat = detail::run_forward_backward(params, seq);
  const std::size_t k = params.num_states();
  const std::size_t n = seq.size();
  Posteriors post;
  post.num_states = k;
  post.log_likelihood = lat.log_likelihood;
  post.state_marginals.assign(n, std::vector<double>(k, 0.0));
  post.bigram_marginals.assign(n, {});
  post.transition_marginals.assign(n, {});
  for (std::size_t t = 1; t < n; ++t) post.bigram_marginals[t].assign(k * k, 0.0);
  for (std::size_t t = 2; t < n; ++t) post.transition_marginals[t].assign(k * k * k, 0.0);
  detail::visit_posteriors(
      params, seq, lat, [&](std::size_t t, State s, double p) { post.state_marginals[t][s] = p; },
      [&](std::size_t t, State i, State j, double p) { post.bigram_marginals[t][i * k + j] = p; },
      [&](std::size_t t, State i, State j, State s, double p) {
        post.transition_marginals[t][(i * k + j) * k + s] = p;
      });
  return post;
}

struct StepResult {
  HmmParams params;
  // Log-likelihood of the input parameters.
  double log_likelihood = 0.0;
  // Zero-probability sequences left out of the expectations (only when lambda > 0).
  std::size_t skipped_sequences = 0;
};

namespace detail {

struct ExpectedCounts {
  std::vector<double> emission, transition, initial;

  explicit ExpectedCounts(const HmmParams& p)
      : emission(p.num_states() * p.num_symbols(), 0.0),
        transition(p.num_states() * p.num_states() * p.num_states(), 0.0),
        initial(p.num_states() * p.num_states(), 0.0) {}
};

inline void accumulate(const HmmParams& params, std::span<const Symbol> seq, const SparseLattice& lat,
                       ExpectedCounts& counts) {
  const std::size_t k = params.num_states();
  const std::size_t v = params.num_symbols();
  visit_posteriors(
      params, seq, lat, [&](std::size_t t, State s, double p) { counts.emission[s * v + seq[t]] += p; },
      [&](std::size_t t, State i, State j, double p) {
        if (t == 1) counts.initial[i * k + j] += p;
      },
      [&](std::size_t, State i, State j, State s, double p) { counts.transition[(i * k + j) * k + s] += p; });
  if (seq.size() == 1) {
    // The unobserved second state follows the current conditional P(j | i).
    for (State i : lat.active[0]) {
      const double gamma = std::exp(params.emission(i, seq[0]) + params.initial_marginal(i) - lat.log_likelihood);
      const double marg = params.initial_marginal(i);
      for (State j = 0; j < k; ++j) counts.initial[i * k + j] += gamma * std::exp(params.initial(i, j) - marg);
    }
  }
}

// Re-normalises one row of expected counts. Lambda is added to every cell
// that is not a structural zero (-inf) of the old row; a row that received
// no mass at all keeps its old values.
inline void reestimate_row(std::span<const double> counts, std::span<const double> old_row, std::span<double> out,
                           double lambda) {
  double total = 0.0;
  for (std::size_t x = 0; x < counts.size(); ++x)
    if (old_row[x] != kNegInf) total += counts[x] + lambda;
  if (!(total > 0.0)) {
    std::copy(old_row.begin(), old_row.end(), out.begin());
    return;
  }
  for (std::size_t x = 0; x < counts.size(); ++x) {
    const double c = old_row[x] == kNegInf ? 0.0 : counts[x] + lambda;
    out[x] = c > 0.0 ? std::log(c / total) : kNegInf;
  }
}

}  // namespace detail

// One EM iteration. With lambda = 0 a zero-probability sequence is an error;
// with lambda > 0 it is skipped and counted in the result.
inline StepResult baum_welch_step(const HmmParams& params, std::span<const Sequence> corpus, double lambda) {
  if (corpus.empty()) throw EmptyCorpusError("Baum-Welch needs at least one sequence");
  if (!(lambda >= 0.0)) throw PreconditionError("smoothing lambda must be non-negative");
  const std::size_t k = params.num_states();
  const std::size_t v = params.num_symbols();
  detail::ExpectedCounts counts(params);
  StepResult result;
  result.log_likelihood = 0.0;
  for (const auto& seq : corpus) {
    detail::SparseLattice lat;
    try {
      lat = detail::run_forward_backward(params, seq);
    } catch (const ImpossibleSequenceError&) {
      if (lambda == 0.0) throw;
      ++result.skipped_sequences;
      continue;
    }
    result.log_likelihood += lat.log_likelihood;
    detail::accumulate(params, seq, lat, counts);
  }
  HmmParams next(k, v);
  for (State s = 0; s < k; ++s)
    detail::reestimate_row(std::span<const double>(counts.emission.data() + s * v, v), params.emission_row(s),
                           next.emission_row(s), lambda);
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j)
      detail::reestimate_row(std::span<const double>(counts.transition.data() + (i * k + j) * k, k),
                             params.transition_slice(i, j), next.transition_slice(i, j), lambda);
  detail::reestimate_row(counts.initial, params.initial_table(), next.initial_table(), lambda);
  result.params = std::move(next);
  return result;
}

// Sum of per-sequence log-likelihoods. When skip_impossible is set,
// zero-probability sequences are left out instead of raising.
inline double corpus_log_likelihood(const HmmParams& params, std::span<const Sequence> corpus,
                                    bool skip_impossible = false) {
  double total = 0.0;
  for (const auto& seq : corpus) {
    try {
      total += log_likelihood(params, seq);
    } catch (const ImpossibleSequenceError&) {
      if (!skip_impossible) throw;
    }
  }
  return total;
}

struct TrainOptions {
  std::size_t max_iters = 5;
  double tol = 1e-4;
  double lambda = 0.1;
};

struct TrainResult {
  HmmParams params;
  // trace[0] is the log-likelihood of the starting parameters, trace[i] that
  // of the parameters after i steps.
  std::vector<double> trace;
  std::size_t iterations = 0;

  double final_log_likelihood() const { return trace.back(); }
};

// Runs Baum-Welch until an iteration improves the log-likelihood by less than
// tol, or max_iters steps have been taken.
inline TrainResult train(HmmParams params, std::span<const Sequence> corpus, const TrainOptions& options) {
  if (options.max_iters < 1) throw PreconditionError("max_iters must be at least 1");
  if (!(options.tol > 0.0)) throw PreconditionError("tol must be positive");
  TrainResult result;
  const bool skip = options.lambda > 0.0;
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    auto step = baum_welch_step(params, corpus, options.lambda);
    if (result.trace.empty()) result.trace.push_back(step.log_likelihood);
    params = std::move(step.params);
    result.trace.push_back(corpus_log_likelihood(params, corpus, skip));
    ++result.iterations;
    const double delta = result.trace.back() - result.trace[result.trace.size() - 2];
    if (delta < options.tol) break;
  }
  result.params = std::move(params);
  return result;
}

struct ViterbiResult {
  std::vector<State> states;
  double log_probability = kNegInf;
};

// Most probable state path. Among equally probable paths the one reached
// through lower composite-state indices (i*K + j) wins.
inline ViterbiResult viterbi(const HmmParams& params, std::span<const Symbol> seq) {
  const auto active = detail::active_states(params, seq);
  const std::size_t n = seq.size();
  for (const auto& a : active)
    if (a.empty()) throw ImpossibleSequenceError("no state can emit the observed symbol");
  ViterbiResult result;
  if (n == 1) {
    double best = kNegInf;
    State arg = 0;
    for (State i : active[0]) {
      const double s = params.emission(i, seq[0]) + params.initial_marginal(i);
      if (s > best) {
        best = s;
        arg = i;
      }
    }
    if (best == kNegInf) throw ImpossibleSequenceError("no finite-probability path");
    result.states = {arg};
    result.log_probability = best;
    return result;
  }
  auto cells = [&](std::size_t t) { return active[t - 1].size() * active[t].size(); };
  std::vector<std::vector<double>> delta(n);
  std::vector<std::vector<std::size_t>> back(n);
  delta[1].resize(cells(1));
  for (std::size_t ii = 0; ii < active[0].size(); ++ii)
    for (std::size_t jj = 0; jj < active[1].size(); ++jj) {
      const State i = active[0][ii], j = active[1][jj];
      delta[1][ii * active[1].size() + jj] =
          params.initial(i, j) + params.emission(i, seq[0]) + params.emission(j, seq[1]);
    }
  for (std::size_t t = 2; t < n; ++t) {
    const auto& ai = active[t - 2];
    const auto& aj = active[t - 1];
    const auto& ak = active[t];
    delta[t].assign(cells(t), kNegInf);
    back[t].assign(cells(t), 0);
    for (std::size_t jj = 0; jj < aj.size(); ++jj)
      for (std::size_t kk = 0; kk < ak.size(); ++kk) {
        double best = kNegInf;
        std::size_t arg = 0;
        for (std::size_t ii = 0; ii < ai.size(); ++ii) {
          const double s = delta[t - 1][ii * aj.size() + jj] + params.transition(ai[ii], aj[jj], ak[kk]);
          if (s > best) {
            best = s;
            arg = ii;
          }
        }
        delta[t][jj * ak.size() + kk] = best + params.emission(ak[kk], seq[t]);
        back[t][jj * ak.size() + kk] = arg;
      }
  }
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t c = 0; c < delta[n - 1].size(); ++c)
    if (delta[n - 1][c] > best) {
      best = delta[n - 1][c];
      arg = c;
    }
  if (best == kNegInf) throw ImpossibleSequenceError("no finite-probability path");
  std::vector<std::size_t> idx(n);
  idx[n - 2] = arg / active[n - 1].size();
  idx[n - 1] = arg % active[n - 1].size();
  for (std::size_t t = n - 1; t >= 2; --t) idx[t - 2] = back[t][idx[t - 1] * active[t].size() + idx[t]];
  result.states.resize(n);
  for (std::size_t t = 0; t < n; ++t) result.states[t] = active[t][idx[t]];
  result.log_probability = best;
  return result;
}

struct TaggedSymbol {
  Symbol symbol;
  State state;
};

// Relative-frequency estimate with additive lambda on every cell. Rows with
// no observations (possible only when lambda = 0) fall back to uniform. A
// one-token sentence spreads its initial-pair count uniformly over the
// unobserved second state.
inline HmmParams supervised_estimate(std::span<const std::vector<TaggedSymbol>> data, std::size_t num_states,
                                     std::size_t num_symbols, double lambda) {
  if (data.empty()) throw EmptyCorpusError("supervised estimation needs at least one sequence");
  if (!(lambda >= 0.0)) throw PreconditionError("smoothing lambda must be non-negative");
  const std::size_t k = num_states;
  const std::size_t v = num_symbols;
  std::vector<double> em(k * v, 0.0), tr(k * k * k, 0.0), init(k * k, 0.0);
  for (const auto& seq : data) {
    if (seq.empty()) throw PreconditionError("empty tagged sequence");
    for (const auto& ts : seq) {
      if (ts.state >= k) throw PreconditionError("state index out of range");
      if (ts.symbol >= v) throw InvalidSymbolError("symbol index out of range");
      em[ts.state * v + ts.symbol] += 1.0;
    }
    if (seq.size() == 1) {
      for (State j = 0; j < k; ++j) init[seq[0].state * k + j] += 1.0 / static_cast<double>(k);
    } else {
      init[seq[0].state * k + seq[1].state] += 1.0;
    }
    for (std::size_t t = 2; t < seq.size(); ++t) tr[(seq[t - 2].state * k + seq[t - 1].state) * k + seq[t].state] += 1.0;
  }
  HmmParams p(k, v);
  auto fill = [lambda](std::span<const double> counts, std::span<double> out) {
    double total = 0.0;
    for (double c : counts) total += c + lambda;
    if (!(total > 0.0)) {
      for (double& x : out) x = -std::log(static_cast<double>(out.size()));
      return;
    }
    for (std::size_t x = 0; x < counts.size(); ++x) {
      const double c = counts[x] + lambda;
      out[x] = c > 0.0 ? std::log(c / total) : kNegInf;
    }
  };
  for (State s = 0; s < k; ++s) fill(std::span<const double>(em.data() + s * v, v), p.emission_row(s));
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j)
      fill(std::span<const double>(tr.data() + (i * k + j) * k, k), p.transition_slice(i, j));
  fill(init, p.initial_table());
  return p;
}

// ---------------------------------------------------------------------------
// Text serialization:
//   pos-inducer-hmm 1
//   K <states>
//   V <symbols>
//   initial <K*K values>
//   emission <k> <V values>               (k = 0..K-1)
//   transition <i> <j> <K values>         (i, j = 0..K-1, row-major)
// Values are natural logs written with 17 significant digits, "-inf" for
// zero, which reloads bit-identically.

inline constexpr std::string_view kModelHeader = "pos-inducer-hmm 1";

namespace detail {

inline void write_value(std::ostream& out, double x) {
  if (x == kNegInf) {
    out << "-inf";
    return;
  }
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  out.write(buf, end - buf);
}

inline void write_row(std::ostream& out, std::span<const double> row) {
  for (double x : row) {
    out << ' ';
    write_value(out, x);
  }
  out << '\n';
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next(const std::string& expected_key) {
    std::string line;
    if (!std::getline(in_, line)) throw ModelFormatError("truncated model: expected '" + expected_key + "'");
    ++line_no_;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != expected_key)
      throw ModelFormatError("model line " + std::to_string(line_no_) + ": expected '" + expected_key + "', found '" +
                             key + "'");
    return ss;
  }

  std::size_t line_no() const { return line_no_; }
  std::istream& stream() { return in_; }
  void count_line() { ++line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline double parse_value(const std::string& tok, std::size_t line_no) {
  if (tok == "-inf") return kNegInf;
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(x))
    throw ModelFormatError("model line " + std::to_string(line_no) + ": bad value '" + tok + "'");
  return x;
}

inline void read_row(std::istringstream& ss, std::span<double> out, std::size_t line_no) {
  std::string tok;
  for (double& x : out) {
    if (!(ss >> tok)) throw ModelFormatError("model line " + std::to_string(line_no) + ": too few values");
    x = parse_value(tok, line_no);
  }
  if (ss >> tok) throw ModelFormatError("model line " + std::to_string(line_no) + ": too many values");
}

inline std::size_t read_index(std::istringstream& ss, std::size_t expected, std::size_t line_no) {
  std::size_t idx = 0;
  if (!(ss >> idx) || idx != expected)
    throw ModelFormatError("model line " + std::to_string(line_no) + ": rows out of order");
  return idx;
}

}  // namespace detail

inline void write_model(std::ostream& out, const HmmParams& p) {
  const std::size_t k = p.num_states();
  out << kModelHeader << '\n' << "K " << k << '\n' << "V " << p.num_symbols() << '\n';
  out << "initial";
  detail::write_row(out, p.initial_table());
  for (State s = 0; s < k; ++s) {
    out << "emission " << s;
    detail::write_row(out, p.emission_row(s));
  }
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j) {
      out << "transition " << i << ' ' << j;
      detail::write_row(out, p.transition_slice(i, j));
    }
}

inline HmmParams read_model(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != kModelHeader)
    throw ModelFormatError("unsupported model version: expected header '" + std::string(kModelHeader) + "'");
  detail::LineReader reader(in);
  reader.count_line();
  std::size_t k = 0, v = 0;
  if (!(reader.next("K") >> k) || k == 0) throw ModelFormatError("bad state count");
  if (!(reader.next("V") >> v) || v == 0) throw ModelFormatError("bad symbol count");
  HmmParams p(k, v);
  {
    auto ss = reader.next("initial");
    detail::read_row(ss, p.initial_table(), reader.line_no());
  }
  for (State s = 0; s < k; ++s) {
    auto ss = reader.next("emission");
    detail::read_index(ss, s, reader.line_no());
    detail::read_row(ss, p.emission_row(s), reader.line_no());
  }
  for (State i = 0; i < k; ++i)
    for (State j = 0; j < k; ++j) {
      auto ss = reader.next("transition");
      detail::read_index(ss, i, reader.line_no());
      detail::read_index(ss, j, reader.line_no());
      detail::read_row(ss, p.transition_slice(i, j), reader.line_no());
    }
  return p;
}

}  // namespace posinduce::hmm
