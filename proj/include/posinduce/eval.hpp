#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "posinduce/corpus.hpp"
#include "posinduce/error.hpp"
#include "posinduce/hmm.hpp"
#include "posinduce/ids.hpp"
#include "posinduce/induction.hpp"

namespace posinduce {

// Rows are clusters, columns gold tags.
struct ConfusionMatrix {
  std::size_t num_clusters = 0;
  std::size_t num_tags = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t c, std::size_t t) const { return counts[c * num_tags + t]; }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto x : counts) n += x;
    return n;
  }
};

struct TagScore {
  std::uint64_t gold = 0;       // tokens with this gold tag
  std::uint64_t predicted = 0;  // tokens whose cluster maps to this tag
  std::uint64_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double one_to_one_accuracy = 0.0;
  // Majority tag per cluster; empty for clusters with no tokens.
  std::vector<std::optional<TagId>> mapping;
  std::vector<TagScore> per_tag;
  std::size_t token_count = 0;
  ConfusionMatrix confusion;
};

namespace detail {

// Maximum-weight perfect matching on a square matrix (Hungarian method,
// potentials form). Returns the column assigned to each row.
inline std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
  const std::size_t n = weight.size();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; minimise the negated weights.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline std::uint64_t one_to_one_correct(const ConfusionMatrix& m) {
  const std::size_t n = std::max(m.num_clusters, m.num_tags);
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < m.num_clusters; ++c)
    for (std::size_t t = 0; t < m.num_tags; ++t) w[c][t] = static_cast<double>(m.at(c, t));
  const auto match = max_weight_assignment(w);
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < m.num_clusters; ++c)
    if (match[c] < m.num_tags) correct += m.at(c, match[c]);
  return correct;
}

}  // namespace detail

// Many-to-one accuracy: each cluster takes its majority gold tag (ties go to
// the lower TagId). The optional sizes widen the confusion grid beyond the
// ids actually observed.
inline EvalReport many_to_one(std::span<const ClusterId> predicted, std::span<const TagId> gold,
                              std::size_t num_clusters = 0, std::size_t num_tags = 0) {
  if (predicted.size() != gold.size())
    throw AlignmentError("predicted has " + std::to_string(predicted.size()) + " tokens, gold has " +
                         std::to_string(gold.size()));
  if (predicted.empty()) throw AlignmentError("nothing to evaluate");
  for (auto c : predicted) num_clusters = std::max(num_clusters, c.index() + 1);
  for (auto t : gold) num_tags = std::max(num_tags, t.index() + 1);

  EvalReport r;
  r.token_count = predicted.size();
  r.confusion = {num_clusters, num_tags, std::vector<std::uint64_t>(num_clusters * num_tags, 0)};
  for (std::size_t i = 0; i < predicted.size(); ++i) ++r.confusion.counts[predicted[i].index() * num_tags + gold[i].index()];

  r.mapping.assign(num_clusters, std::nullopt);
  r.per_tag.assign(num_tags, {});
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < num_clusters; ++c) {
    std::uint64_t best = 0, size = 0;
    std::size_t arg = 0;
    for (std::size_t t = 0; t < num_tags; ++t) {
      const auto n = r.confusion.at(c, t);
      size += n;
      if (n > best) {
        best = n;
        arg = t;
      }
    }
    if (size == 0) continue;
    r.mapping[c] = TagId{arg};
    correct += best;
    r.per_tag[arg].predicted += size;
    r.per_tag[arg].correct += best;
  }
  for (std::size_t t = 0; t < num_tags; ++t) {
    auto& s = r.per_tag[t];
    for (std::size_t c = 0; c < num_clusters; ++c) s.gold += r.confusion.at(c, t);
    s.precision = s.predicted ? static_cast<double>(s.correct) / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.gold ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 0.0;
  }
  const double total = static_cast<double>(r.token_count);
  r.accuracy = static_cast<double>(correct) / total;
  r.one_to_one_accuracy = static_cast<double>(detail::one_to_one_correct(r.confusion)) / total;
  return r;
}

// ---------------------------------------------------------------------------
// Second-order HMM tagger over induced clusters. Word symbols are the
// training vocabulary plus one trailing UNK symbol for unseen forms.

struct Tagger {
  hmm::HmmParams params;
  Interner<SymbolId> vocab;

  hmm::Symbol unk() const { return static_cast<hmm::Symbol>(vocab.size()); }
  hmm::Symbol symbol(const std::string& form) const {
    const auto id = vocab.find(form);
    return id ? id->value : unk();
  }
};

inline Tagger train_tagger(const Corpus& corpus, const ClusterState& state, double lambda) {
  if (state.vocab_size() != corpus.vocab().size())
    throw InconsistentStateError("cluster state does not cover the training vocabulary");
  std::vector<std::vector<hmm::TaggedSymbol>> data;
  data.reserve(corpus.sentences().size());
  for (const auto& s : corpus.sentences()) {
    std::vector<hmm::TaggedSymbol> seq;
    seq.reserve(s.size());
    for (const auto& t : s.tokens) seq.push_back({t.form.value, state.cluster_of(t.form).value});
    data.push_back(std::move(seq));
  }
  return {hmm::supervised_estimate(data, state.num_clusters(), corpus.vocab().size() + 1, lambda), corpus.vocab()};
}

// Viterbi decode of every sentence, one ClusterId per token.
inline std::vector<std::vector<ClusterId>> tag_corpus(const Tagger& tagger, const Corpus& corpus) {
  std::vector<std::vector<ClusterId>> out;
  out.reserve(corpus.sentences().size());
  std::vector<hmm::Symbol> seq;
  for (const auto& s : corpus.sentences()) {
    seq.clear();
    for (const auto& t : s.tokens) seq.push_back(tagger.symbol(corpus.vocab().str(t.form)));
    const auto path = hmm::viterbi(tagger.params, seq);
    std::vector<ClusterId> tags;
    tags.reserve(path.states.size());
    for (auto k : path.states) tags.push_back(ClusterId{k});
    out.push_back(std::move(tags));
  }
  return out;
}

template <class T>
std::vector<T> flatten(const std::vector<std::vector<T>>& nested) {
  std::vector<T> flat;
  for (const auto& v : nested) flat.insert(flat.end(), v.begin(), v.end());
  return flat;
}

// The tagger file is the HMM text followed by "vocab <n>" and one form per
// line in symbol order.
inline void write_tagger(std::ostream& out, const Tagger& tagger) {
  hmm::write_model(out, tagger.params);
  out << "vocab " << tagger.vocab.size() << '\n';
  for (const auto& form : tagger.vocab.strings()) out << form << '\n';
}

inline Tagger read_tagger(std::istream& in) {
  auto params = hmm::read_model(in);
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line) || line.rfind("vocab ", 0) != 0) throw ModelFormatError("missing vocabulary block");
  try {
    n = std::stoull(line.substr(6));
  } catch (const std::exception&) {
    throw ModelFormatError("bad vocabulary size");
  }
  if (n + 1 != params.num_symbols())
    throw ModelFormatError("vocabulary size " + std::to_string(n) + " does not match V = " +
                           std::to_string(params.num_symbols()));
  Interner<SymbolId> vocab;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ModelFormatError("truncated vocabulary block");
    if (vocab.intern(line).index() != i) throw ModelFormatError("duplicate vocabulary form '" + line + "'");
  }
  return {std::move(params), std::move(vocab)};
}

// ---------------------------------------------------------------------------
// Induce on train, score in-domain, train a tagger on the induced labels,
// tag test, score out-of-domain. Each accuracy fits its own cluster-to-tag
// mapping on the corpus it scores.

struct PipelineResult {
  ClusterState state;
  Tagger tagger;
  Interner<TagId> tags;  // coarse inventory shared by both reports
  EvalReport in_domain;
  EvalReport out_of_domain;
  std::vector<std::vector<ClusterId>> test_labels;
};

inline PipelineResult pipeline_eval(const Corpus& train, const Corpus& test, const TagMap& tagmap,
                                    const InductionConfig& config, const ProgressCallback& progress = {}) {
  if (!train.has_gold()) throw GoldRequiredError("gold tags required on the training corpus");
  if (!test.has_gold()) throw GoldRequiredError("gold tags required on the test corpus");
  const auto train_gold = collapse_tags(train, tagmap);
  const auto test_gold = collapse_tags(test, tagmap);
  const std::size_t num_tags = tagmap.coarse_tags().size();

  auto state = induce(train, config, progress);
  std::vector<ClusterId> train_pred;
  for (const auto& s : train.sentences())
    for (const auto& t : s.tokens) train_pred.push_back(state.cluster_of(t.form));
  auto in_domain = many_to_one(train_pred, train_gold.gold_tags(), state.num_clusters(), num_tags);

  auto tagger = train_tagger(train, state, config.lambda);
  auto labels = tag_corpus(tagger, test);
  auto out_of_domain = many_to_one(flatten(labels), test_gold.gold_tags(), state.num_clusters(), num_tags);
  return {std::move(state),          std::move(tagger), tagmap.coarse_tags(), std::move(in_domain),
          std::move(out_of_domain), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Reports.

namespace detail {

inline std::string fixed6(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << x;
  return s.str();
}

}  // namespace detail

inline void write_report_text(std::ostream& out, const std::string& title, const EvalReport& r,
                              const Interner<TagId>& tags) {
  out << title << '\n';
  out << "  tokens:               " << r.token_count << '\n';
  out << "  many-to-one accuracy: " << detail::fixed6(r.accuracy) << '\n';
  out << "  one-to-one accuracy:  " << detail::fixed6(r.one_to_one_accuracy) << '\n';
  out << "  cluster -> tag:";
  for (std::size_t c = 0; c < r.mapping.size(); ++c)
    out << ' ' << c << "->" << (r.mapping[c] ? tags.str(*r.mapping[c]) : std::string("-"));
  out << '\n';
  out << "  tag\tprecision\trecall\tgold\n";
  for (std::size_t t = 0; t < r.per_tag.size(); ++t) {
    const auto& s = r.per_tag[t];
    out << "  " << tags.str(TagId{t}) << '\t' << detail::fixed6(s.precision) << '\t' << detail::fixed6(s.recall)
        << '\t' << s.gold << '\n';
  }
}

// "metric<TAB>value" lines under a "# <name>" header, then the confusion
// grid (clusters as rows, tags as columns).
inline void write_report_tsv(std::ostream& out, const std::string& name, const EvalReport& r,
                             const Interner<TagId>& tags) {
  out << "# " << name << '\n';
  out << "accuracy\t" << detail::fixed6(r.accuracy) << '\n';
  out << "one_to_one_accuracy\t" << detail::fixed6(r.one_to_one_accuracy) << '\n';
  out << "token_count\t" << r.token_count << '\n';
  out << "clusters\t" << r.confusion.num_clusters << '\n';
  for (std::size_t c = 0; c < r.mapping.size(); ++c)
    out << "mapping." << c << '\t' << (r.mapping[c] ? tags.str(*r.mapping[c]) : std::string("-")) << '\n';
  for (std::size_t t = 0; t < r.per_tag.size(); ++t) {
    out << "precision." << tags.str(TagId{t}) << '\t' << detail::fixed6(r.per_tag[t].precision) << '\n';
    out << "recall." << tags.str(TagId{t}) << '\t' << detail::fixed6(r.per_tag[t].recall) << '\n';
  }
  out << "# " << name << " confusion\n";
  out << "cluster";
  for (std::size_t t = 0; t < r.confusion.num_tags; ++t) out << '\t' << tags.str(TagId{t});
  out << '\n';
  for (std::size_t c = 0; c < r.confusion.num_clusters; ++c) {
    out << c;
    for (std::size_t t = 0; t < r.confusion.num_tags; ++t) out << '\t' << r.confusion.at(c, t);
    out << '\n';
  }
}

}  // namespace posinduce
