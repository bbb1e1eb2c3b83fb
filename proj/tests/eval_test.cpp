#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "posinduce/eval.hpp"
#include "support/template_grammar.hpp"

namespace posinduce {
namespace {

std::vector<ClusterId> clusters(std::initializer_list<int> xs) {
  std::vector<ClusterId> out;
  for (int x : xs) out.emplace_back(x);
  return out;
}
std::vector<TagId> tags(std::initializer_list<int> xs) {
  std::vector<TagId> out;
  for (int x : xs) out.emplace_back(x);
  return out;
}

Corpus tagged(const std::string& text) {
  std::istringstream in(text);
  return load_tagged(in);
}
Corpus plain(const std::string& text) {
  std::istringstream in(text);
  return load_plain(in);
}

InductionConfig four_clusters() {
  InductionConfig cfg;
  cfg.target_clusters = 4;
  return cfg;
}

TEST(ManyToOne, PurePartition) {
  const auto r = many_to_one(clusters({2, 0, 1, 2, 0}), tags({0, 1, 2, 0, 1}));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.one_to_one_accuracy, 1.0);
  EXPECT_EQ(r.mapping[2], TagId{0});
  EXPECT_EQ(r.token_count, 5u);
  EXPECT_EQ(r.confusion.total(), 5u);
}

TEST(ManyToOne, SingleClusterMajority) {
  const auto r = many_to_one(clusters({0, 0, 0}), tags({0, 0, 1}));
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 3.0);
  EXPECT_EQ(r.mapping[0], TagId{0});
}

TEST(ManyToOne, TieGoesToLowerTag) {
  const auto r = many_to_one(clusters({0, 0}), tags({1, 0}));
  EXPECT_EQ(r.mapping[0], TagId{0});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
}

TEST(ManyToOne, ManyClustersShareATag) {
  const auto r = many_to_one(clusters({0, 1, 2}), tags({0, 0, 1}));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.one_to_one_accuracy, 2.0 / 3.0);
  EXPECT_EQ(r.mapping[0], r.mapping[1]);
}

TEST(ManyToOne, PrecisionRecall) {
  // Cluster 0 -> tag 0 (2 of 3 correct), cluster 1 -> tag 1 (1 of 1).
  const auto r = many_to_one(clusters({0, 0, 0, 1}), tags({0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(r.per_tag[0].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_tag[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(r.per_tag[1].precision, 1.0);
  EXPECT_DOUBLE_EQ(r.per_tag[1].recall, 0.5);
}

TEST(ManyToOne, Errors) {
  EXPECT_THROW(many_to_one(clusters({0, 1}), tags({0})), AlignmentError);
  EXPECT_THROW(many_to_one(clusters({}), tags({})), AlignmentError);
}

TEST(ManyToOne, EmptyClusterUnmapped) {
  const auto r = many_to_one(clusters({0, 2}), tags({0, 0}), 4, 3);
  EXPECT_EQ(r.confusion.num_clusters, 4u);
  EXPECT_EQ(r.confusion.num_tags, 3u);
  EXPECT_FALSE(r.mapping[1].has_value());
  EXPECT_FALSE(r.mapping[3].has_value());
}

std::uint64_t brute_one_to_one(const ConfusionMatrix& m) {
  const std::size_t n = std::max(m.num_clusters, m.num_tags);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t best = 0;
  do {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < m.num_clusters; ++c)
      if (perm[c] < m.num_tags) s += m.at(c, perm[c]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

TEST(OneToOne, MatchesExhaustiveAssignment) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int nc = 1 + static_cast<int>(rng() % 6), nt = 1 + static_cast<int>(rng() % 6);
    const std::size_t n = 1 + rng() % 60;
    std::vector<ClusterId> p;
    std::vector<TagId> g;
    for (std::size_t i = 0; i < n; ++i) {
      p.emplace_back(static_cast<int>(rng() % nc));
      g.emplace_back(static_cast<int>(rng() % nt));
    }
    const auto r = many_to_one(p, g, nc, nt);
    EXPECT_DOUBLE_EQ(r.one_to_one_accuracy, static_cast<double>(brute_one_to_one(r.confusion)) / n) << trial;
    EXPECT_LE(r.one_to_one_accuracy, r.accuracy);
  }
}

TEST(ManyToOneProperties, BoundedAndInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int nc = 1 + static_cast<int>(rng() % 8), nt = 1 + static_cast<int>(rng() % 5);
    const std::size_t n = 1 + rng() % 80;
    std::vector<ClusterId> p;
    std::vector<TagId> g;
    for (std::size_t i = 0; i < n; ++i) {
      p.emplace_back(static_cast<int>(rng() % nc));
      g.emplace_back(static_cast<int>(rng() % nt));
    }
    const auto r = many_to_one(p, g);
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);

    std::vector<int> relabel(nc);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<ClusterId> q;
    for (auto c : p) q.emplace_back(relabel[c.index()]);
    EXPECT_EQ(many_to_one(q, g).accuracy, r.accuracy);

    auto p2 = p, q2 = p;
    auto g2 = g;
    p2.insert(p2.end(), p.begin(), p.end());
    g2.insert(g2.end(), g.begin(), g.end());
    EXPECT_EQ(many_to_one(p2, g2).accuracy, r.accuracy);

    std::uint64_t majority = 0;
    for (std::size_t c = 0; c < r.confusion.num_clusters; ++c) {
      std::uint64_t m = 0;
      for (std::size_t t = 0; t < r.confusion.num_tags; ++t) m = std::max(m, r.confusion.at(c, t));
      majority += m;
    }
    EXPECT_EQ(r.accuracy, static_cast<double>(majority) / n);
  }
}

TEST(Tagger, RecoversTrainingLabelsOnDisjointVocabulary) {
  const auto train = synthetic::tagged_corpus(100, 3);
  const auto state = induce(train, four_clusters());
  const auto tagger = train_tagger(train, state, 0.1);
  const auto labels = tag_corpus(tagger, train);
  for (std::size_t s = 0; s < train.sentences().size(); ++s)
    for (std::size_t t = 0; t < labels[s].size(); ++t)
      EXPECT_EQ(labels[s][t], state.cluster_of(train.sentences()[s].tokens[t].form));
}

TEST(Tagger, AllUnknownSentenceStillDecodes) {
  const auto train = synthetic::tagged_corpus(50, 3);
  const auto tagger = train_tagger(train, induce(train, four_clusters()), 0.1);
  const auto test = plain("zzz yyy xxx\nqqq\n");
  const auto labels = tag_corpus(tagger, test);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].size(), 3u);
  EXPECT_EQ(labels[1].size(), 1u);
  std::vector<hmm::Symbol> unk(3, tagger.unk());
  EXPECT_TRUE(std::isfinite(hmm::viterbi(tagger.params, unk).log_probability));
}

TEST(Tagger, HeldOutSyntheticAccuracyIsOne) {
  const auto train = synthetic::tagged_corpus(200, 1);
  const auto test = synthetic::tagged_corpus(100, 2);
  const auto tagger = train_tagger(train, induce(train, four_clusters()), 0.1);
  const auto r = many_to_one(flatten(tag_corpus(tagger, test)), test.gold_tags());
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Tagger, ModelRoundTrip) {
  const auto train = synthetic::tagged_corpus(50, 4);
  const auto tagger = train_tagger(train, induce(train, four_clusters()), 0.1);
  std::stringstream buf;
  write_tagger(buf, tagger);
  const auto back = read_tagger(buf);
  EXPECT_EQ(back.params, tagger.params);
  EXPECT_EQ(back.vocab, tagger.vocab);
  const auto test = synthetic::tagged_corpus(20, 9);
  EXPECT_EQ(tag_corpus(back, test), tag_corpus(tagger, test));
}

TEST(Tagger, ModelFileErrors) {
  const auto train = synthetic::tagged_corpus(10, 4);
  const auto tagger = train_tagger(train, induce(train, four_clusters()), 0.1);
  std::ostringstream buf;
  write_tagger(buf, tagger);
  const auto text = buf.str();
  {
    std::istringstream in(text.substr(0, text.find("vocab")));
    EXPECT_THROW(read_tagger(in), ModelFormatError);
  }
  {
    std::istringstream in("pos-inducer-hmm 9\n" + text.substr(text.find('\n') + 1));
    try {
      read_tagger(in);
      FAIL();
    } catch (const ModelFormatError& e) {
      EXPECT_NE(std::string(e.what()).find("unsupported model version"), std::string::npos);
    }
  }
}

TEST(Pipeline, DegenerateSplitIsPerfect) {
  const auto c = synthetic::tagged_corpus(150, 8);
  const auto r = pipeline_eval(c, c, TagMap::identity(c.tags()), four_clusters());
  EXPECT_EQ(r.in_domain.accuracy, 1.0);
  EXPECT_EQ(r.out_of_domain.accuracy, 1.0);
  EXPECT_EQ(r.state.num_clusters(), 4u);
}

TEST(Pipeline, CollapsesThroughTagMap) {
  const auto c = synthetic::tagged_corpus(150, 8);
  TagMap m;
  m.add("DET", "FUNC");
  m.add("ADJ", "MOD");
  m.add("NOUN", "NOUN");
  m.add("VERB", "VERB");
  const auto r = pipeline_eval(c, c, m, four_clusters());
  EXPECT_EQ(r.tags.size(), 4u);
  EXPECT_EQ(r.tags.str(TagId{0}), "FUNC");
  EXPECT_EQ(r.out_of_domain.accuracy, 1.0);
}

TEST(Pipeline, Errors) {
  const auto c = synthetic::tagged_corpus(20, 8);
  const auto untagged = plain("det1 adj2 noun3 verb4\n");
  EXPECT_THROW(pipeline_eval(untagged, c, TagMap::identity(c.tags()), four_clusters()), GoldRequiredError);
  const auto odd = tagged("det1\tDET\nfoo\tPRON\n");
  EXPECT_THROW(pipeline_eval(c, odd, TagMap::identity(c.tags()), four_clusters()), UnmappedTagError);
}

TEST(Report, TextAndTsvBlocks) {
  const auto c = synthetic::tagged_corpus(100, 8);
  const auto r = pipeline_eval(c, c, TagMap::identity(c.tags()), four_clusters());
  std::ostringstream text, tsv;
  write_report_text(text, "In-domain", r.in_domain, r.tags);
  write_report_tsv(tsv, "in_domain", r.in_domain, r.tags);
  EXPECT_NE(text.str().find("many-to-one accuracy: 1.000000"), std::string::npos);
  EXPECT_NE(tsv.str().find("accuracy\t1.000000\n"), std::string::npos);
  EXPECT_NE(tsv.str().find("cluster\tDET\tADJ\tNOUN\tVERB\n"), std::string::npos);
  EXPECT_NE(tsv.str().find("token_count\t400\n"), std::string::npos);
}

}  // namespace
}  // namespace posinduce
