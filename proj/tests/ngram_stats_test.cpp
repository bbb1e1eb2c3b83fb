#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "posinduce/corpus.hpp"
#include "posinduce/ngram_stats.hpp"

namespace posinduce {
namespace {

Corpus black_dog() {
  std::istringstream in("I fed a black dog\nI saw the black dog\n");
  return load_plain(in);
}

SymbolId sym(const Corpus& c, const std::string& s) { return *c.vocab().find(s); }

TEST(TrigramTable, BlackDogLeft) {
  const auto c = black_dog();
  const auto table = build_trigram_table(c.symbol_sequences(), Direction::left);
  const ContextKey<SymbolId> key{sym(c, "black"), sym(c, "dog")};
  const auto& dist = table.entries.at(key);
  EXPECT_EQ(dist.total, 2u);
  EXPECT_EQ(dist.counts.at(sym(c, "a")), 1u);
  EXPECT_EQ(dist.counts.at(sym(c, "the")), 1u);
  EXPECT_EQ(table.window_count(), 6u);
}

TEST(TrigramTable, BlackDogRight) {
  const auto c = black_dog();
  const auto table = build_trigram_table(c.symbol_sequences(), Direction::right);
  const auto& dist = table.entries.at({sym(c, "I"), sym(c, "fed")});
  EXPECT_EQ(dist.counts.size(), 1u);
  EXPECT_EQ(dist.counts.at(sym(c, "a")), 1u);
  EXPECT_EQ(table.entries.size(), 6u);
  for (const auto& [k, d] : table.entries) EXPECT_EQ(d.support(), 1u);
}

TEST(TrigramTable, ShortSentenceEmpty) {
  std::istringstream in("a b\n");
  const auto c = load_plain(in);
  EXPECT_TRUE(build_trigram_table(c.symbol_sequences(), Direction::left).entries.empty());
}

TEST(TrigramTable, OrderedKey) {
  const std::vector<std::vector<int>> seqs{{1, 2, 3}};
  const auto t = build_trigram_table(seqs, Direction::right);
  EXPECT_TRUE(t.entries.count({1, 2}));
  EXPECT_FALSE(t.entries.count({2, 1}));
}

TEST(ConditionalDistribution, Examples) {
  const auto c = black_dog();
  const auto table = build_trigram_table(c.symbol_sequences(), Direction::left);
  const auto d = conditional_distribution(table, {sym(c, "black"), sym(c, "dog")});
  EXPECT_DOUBLE_EQ(d.at(sym(c, "a")), 0.5);
  EXPECT_DOUBLE_EQ(d.at(sym(c, "the")), 0.5);

  const auto single = conditional_distribution(table, {sym(c, "fed"), sym(c, "a")});
  EXPECT_EQ(single.size(), 1u);
  EXPECT_DOUBLE_EQ(single.begin()->second, 1.0);

  TrigramTable<int> t;
  t.entries[{0, 0}].add(1, 3);
  t.entries[{0, 0}].add(2, 1);
  const auto q = conditional_distribution(t, {0, 0});
  EXPECT_DOUBLE_EQ(q.at(1), 0.75);
  EXPECT_DOUBLE_EQ(q.at(2), 0.25);
  EXPECT_THROW(conditional_distribution(t, {5, 5}), AbsentContextError);
}

TEST(Entropy, Examples) {
  EXPECT_EQ(entropy(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-12);
  // -(0.75 ln 0.75 + 0.25 ln 0.25) evaluated by hand
  EXPECT_NEAR(entropy(std::vector<double>{0.75, 0.25}), 0.562335, 1e-6);
  EXPECT_EQ(entropy(std::vector<double>{0.0, 1.0, 0.0}), 0.0);
}

TEST(Entropy, InvalidDistribution) {
  EXPECT_THROW(entropy(std::vector<double>{0.5, 0.4}), InvalidDistributionError);
  EXPECT_THROW(entropy(std::vector<double>{1.5, -0.5}), InvalidDistributionError);
}

TEST(EntropyProperty, UniformAndBounds) {
  for (std::size_t k = 1; k <= 64; ++k) {
    std::vector<double> u(k, 1.0 / static_cast<double>(k));
    EXPECT_NEAR(entropy(u), std::log(static_cast<double>(k)), 1e-12) << k;
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 12;
    std::vector<double> p(k);
    double s = 0;
    for (auto& x : p) s += (x = unif(rng));
    for (auto& x : p) x /= s;
    const double h = entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
  }
}

TEST(RankContexts, BlackDogLeft) {
  const auto c = black_dog();
  const auto table = build_trigram_table(c.symbol_sequences(), Direction::left);
  const auto ranked = rank_contexts(table, 2, 2);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_EQ(ranked[0].key.first, sym(c, "black"));
  EXPECT_EQ(ranked[0].key.second, sym(c, "dog"));
  EXPECT_EQ(ranked[0].follower_count, 2u);
}

TEST(RankContexts, EmptyTable) { EXPECT_TRUE(rank_contexts(TrigramTable<int>{}, 2, 1).empty()); }

TEST(RankContexts, LowerEntropyFirst) {
  TrigramTable<int> t;
  t.entries[{0, 0}].add(1, 1);
  t.entries[{0, 0}].add(2, 1);  // ln 2 = 0.693
  t.entries[{1, 1}].add(1, 3);
  t.entries[{1, 1}].add(2, 1);  // 0.562
  const auto ranked = rank_contexts(t, 2, 1);
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].key, (ContextKey<int>{1, 1}));
}

TEST(RankContexts, TieBreaks) {
  TrigramTable<int> t;
  t.entries[{5, 5}].add(1, 1);
  t.entries[{5, 5}].add(2, 1);
  t.entries[{3, 3}].add(1, 2);
  t.entries[{3, 3}].add(2, 2);
  t.entries[{4, 4}].add(2, 2);
  t.entries[{4, 4}].add(1, 2);
  const auto ranked = rank_contexts(t, 2, 1);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].key, (ContextKey<int>{3, 3}));  // equal entropy, larger total
  EXPECT_EQ(ranked[1].key, (ContextKey<int>{4, 4}));
  EXPECT_EQ(ranked[2].key, (ContextKey<int>{5, 5}));
  EXPECT_EQ(ranked[0].entropy, ranked[1].entropy);
}

TEST(RankContexts, Thresholds) {
  TrigramTable<int> t;
  t.entries[{0, 0}].add(1, 1);
  t.entries[{0, 0}].add(2, 1);
  EXPECT_TRUE(rank_contexts(t, 3, 1).empty());
  EXPECT_TRUE(rank_contexts(t, 2, 3).empty());
  EXPECT_THROW(rank_contexts(t, 1, 1), PreconditionError);
}

std::vector<std::vector<int>> random_sequences(std::mt19937_64& rng) {
  std::vector<std::vector<int>> seqs(1 + rng() % 10);
  for (auto& s : seqs) {
    s.resize(rng() % 9);
    for (auto& x : s) x = static_cast<int>(rng() % 6);
  }
  return seqs;
}

TEST(TrigramProperty, WindowCountAndDeterminism) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seqs = random_sequences(rng);
    std::uint64_t windows = 0;
    for (const auto& s : seqs) windows += s.size() >= 3 ? s.size() - 2 : 0;
    for (auto dir : {Direction::left, Direction::right}) {
      const auto a = build_trigram_table(seqs, dir);
      EXPECT_EQ(a.window_count(), windows);
      EXPECT_EQ(a, build_trigram_table(seqs, dir));
    }
  }
}

// The argmin context does not depend on the log base used for entropy.
TEST(RankProperty, ArgminBaseInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seqs = random_sequences(rng);
    const auto t = build_trigram_table(seqs, Direction::left);
    const auto ranked = rank_contexts(t, 2, 1);
    if (ranked.empty()) continue;
    double best = 1e300;
    for (const auto& [key, dist] : t.entries) {
      if (dist.support() < 2) continue;
      double h2 = 0;
      for (auto [s, c] : dist.counts) {
        const double p = static_cast<double>(c) / static_cast<double>(dist.total);
        h2 -= p * std::log2(p);
      }
      best = std::min(best, h2);
    }
    EXPECT_NEAR(ranked.front().entropy / std::log(2.0), best, 1e-12);
  }
}

}  // namespace
}  // namespace posinduce
