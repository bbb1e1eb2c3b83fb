#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "posinduce/error.hpp"
#include "posinduce/ids.hpp"

namespace posinduce {

// Bidirectional string <-> dense id table. Ids are handed out in
// first-insertion order and never change.
template <class IdT>
class Interner {
 public:
  IdT intern(std::string_view s) {
    auto it = index_.find(std::string(s));
    if (it != index_.end()) return it->second;
    IdT id{strings_.size()};
    strings_.emplace_back(s);
    index_.emplace(strings_.back(), id);
    return id;
  }

  std::optional<IdT> find(std::string_view s) const {
    auto it = index_.find(std::string(s));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& str(IdT id) const { return strings_.at(id.index()); }
  std::size_t size() const { return strings_.size(); }
  bool empty() const { return strings_.empty(); }
  const std::vector<std::string>& strings() const { return strings_; }

  friend bool operator==(const Interner& a, const Interner& b) { return a.strings_ == b.strings_; }

 private:
  std::vector<std::string> strings_;
  std::unordered_map<std::string, IdT> index_;
};

struct Token {
  SymbolId form;
  std::optional<TagId> gold_tag;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// Immutable after loading. Either every token carries a gold tag or none do.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Sentence> sentences, Interner<SymbolId> vocab, Interner<TagId> tags)
      : sentences_(std::move(sentences)), vocab_(std::move(vocab)), tags_(std::move(tags)) {
    check_invariants();
  }

  const std::vector<Sentence>& sentences() const { return sentences_; }
  const Interner<SymbolId>& vocab() const { return vocab_; }
  const Interner<TagId>& tags() const { return tags_; }

  bool empty() const { return sentences_.empty(); }
  bool has_gold() const { return !sentences_.empty() && sentences_.front().tokens.front().gold_tag.has_value(); }

  // Word ids per sentence, the form consumed by the statistics and HMM code.
  std::vector<std::vector<SymbolId>> symbol_sequences() const {
    std::vector<std::vector<SymbolId>> out;
    out.reserve(sentences_.size());
    for (const auto& s : sentences_) {
      auto& seq = out.emplace_back();
      seq.reserve(s.size());
      for (const auto& t : s.tokens) seq.push_back(t.form);
    }
    return out;
  }

  // Gold tags flattened over the whole corpus, sentence by sentence.
  std::vector<TagId> gold_tags() const {
    if (!has_gold()) throw GoldRequiredError("corpus carries no gold tags");
    std::vector<TagId> out;
    for (const auto& s : sentences_)
      for (const auto& t : s.tokens) out.push_back(*t.gold_tag);
    return out;
  }

 private:
  void check_invariants() const {
    const bool gold = has_gold();
    for (const auto& s : sentences_) {
      if (s.tokens.empty()) throw PreconditionError("corpus contains an empty sentence");
      for (const auto& t : s.tokens) {
        if (t.form.index() >= vocab_.size()) throw PreconditionError("token form outside vocabulary");
        if (t.gold_tag.has_value() != gold) throw PreconditionError("corpus mixes tagged and untagged tokens");
        if (gold && t.gold_tag->index() >= tags_.size()) throw PreconditionError("gold tag outside tag inventory");
      }
    }
  }

  std::vector<Sentence> sentences_;
  Interner<SymbolId> vocab_;
  Interner<TagId> tags_;
};

inline std::size_t token_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& s : corpus.sentences()) n += s.size();
  return n;
}

struct LoadOptions {
  // ASCII-only case folding of word forms. Tags are never folded.
  bool lowercase = false;
};

namespace detail {

// Byte offset of the first malformed sequence, or npos.
inline std::size_t find_invalid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = p[i];
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    // overlong encodings, surrogates, beyond U+10FFFF
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      return i;
    i += len;
  }
  return std::string_view::npos;
}

inline void check_utf8(std::string_view line, std::size_t line_no) {
  const auto bad = find_invalid_utf8(line);
  if (bad != std::string_view::npos)
    throw DecodeError(line_no, "malformed byte sequence at column " + std::to_string(bad + 1));
}

inline std::string fold_case(std::string_view s, bool lowercase) {
  std::string out(s);
  if (lowercase)
    for (char& c : out)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// One sentence per line, tokens separated by a single space. Empty lines are
// skipped. Vocabulary ids follow first occurrence.
inline Corpus load_plain(std::istream& in, const LoadOptions& options = {}) {
  Interner<SymbolId> vocab;
  std::vector<Sentence> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::check_utf8(line, line_no);
    if (line.empty()) continue;
    Sentence sentence;
    for (auto field : detail::split(line, ' ')) {
      if (field.empty()) throw FormatError(line_no, "empty token (tokens must be separated by exactly one space)");
      sentence.tokens.push_back(Token{vocab.intern(detail::fold_case(field, options.lowercase)), std::nullopt});
    }
    sentences.push_back(std::move(sentence));
  }
  return Corpus(std::move(sentences), std::move(vocab), {});
}

// "form<TAB>tag" per line; a blank line closes a sentence; '#' lines are
// comments. A trailing sentence without a closing blank line is accepted.
inline Corpus load_tagged(std::istream& in, const LoadOptions& options = {}) {
  Interner<SymbolId> vocab;
  Interner<TagId> tags;
  std::vector<Sentence> sentences;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) sentences.push_back(std::move(current));
    current = Sentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    detail::check_utf8(line, line_no);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 2)
      throw FormatError(line_no, "expected 'form<TAB>tag', found " + std::to_string(fields.size()) + " field(s)");
    if (fields[0].empty()) throw FormatError(line_no, "empty form");
    if (fields[1].empty()) throw FormatError(line_no, "empty tag");
    current.tokens.push_back(Token{vocab.intern(detail::fold_case(fields[0], options.lowercase)), tags.intern(fields[1])});
  }
  flush();
  return Corpus(std::move(sentences), std::move(vocab), std::move(tags));
}

inline Corpus load_plain_file(const std::string& path, const LoadOptions& options = {}) {
  auto in = detail::open_input(path);
  return load_plain(in, options);
}

inline Corpus load_tagged_file(const std::string& path, const LoadOptions& options = {}) {
  auto in = detail::open_input(path);
  return load_tagged(in, options);
}

inline void write_plain(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus.sentences()) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << corpus.vocab().str(s.tokens[i].form);
    }
    out << '\n';
  }
}

inline void write_tagged(std::ostream& out, const Corpus& corpus) {
  if (!corpus.has_gold() && !corpus.empty()) throw GoldRequiredError("cannot write tagged format without gold tags");
  for (const auto& s : corpus.sentences()) {
    for (const auto& t : s.tokens) out << corpus.vocab().str(t.form) << '\t' << corpus.tags().str(*t.gold_tag) << '\n';
    out << '\n';
  }
}

// Fine-to-coarse tag projection. Coarse tags implicitly map to themselves, so
// applying a map twice is the same as applying it once.
class TagMap {
 public:
  TagMap() = default;

  void add(const std::string& fine, const std::string& coarse) {
    if (auto it = fine_to_coarse_.find(fine); it != fine_to_coarse_.end() && it->second != coarse)
      throw PreconditionError("fine tag '" + fine + "' mapped to both '" + it->second + "' and '" + coarse + "'");
    if (auto it = fine_to_coarse_.find(coarse); it != fine_to_coarse_.end() && it->second != coarse)
      throw PreconditionError("coarse tag '" + coarse + "' is itself remapped to '" + it->second + "'");
    if (coarse_.find(fine) && fine != coarse)
      throw PreconditionError("coarse tag '" + fine + "' is itself remapped to '" + coarse + "'");
    fine_to_coarse_[fine] = coarse;
    coarse_.intern(coarse);
  }

  std::optional<std::string> map(const std::string& tag) const {
    if (auto it = fine_to_coarse_.find(tag); it != fine_to_coarse_.end()) return it->second;
    if (coarse_.find(tag)) return tag;
    return std::nullopt;
  }

  // Coarse inventory in order of first declaration.
  const Interner<TagId>& coarse_tags() const { return coarse_; }
  std::size_t size() const { return fine_to_coarse_.size(); }

  static TagMap identity(const Interner<TagId>& tags) {
    TagMap m;
    for (const auto& t : tags.strings()) m.add(t, t);
    return m;
  }

 private:
  std::unordered_map<std::string, std::string> fine_to_coarse_;
  Interner<TagId> coarse_;
};

inline TagMap load_tag_map(std::istream& in) {
  TagMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::check_utf8(line, line_no);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw FormatError(line_no, "expected 'fine<TAB>coarse'");
    try {
      map.add(std::string(fields[0]), std::string(fields[1]));
    } catch (const PreconditionError& e) {
      throw FormatError(line_no, e.what());
    }
  }
  return map;
}

inline TagMap load_tag_map_file(const std::string& path) {
  auto in = detail::open_input(path);
  return load_tag_map(in);
}

// The result's tag inventory is the map's coarse set, in declaration order,
// so corpora collapsed with the same map share tag ids.
inline Corpus collapse_tags(const Corpus& corpus, const TagMap& map) {
  if (!corpus.has_gold()) throw GoldRequiredError("collapse_tags needs a gold-tagged corpus");
  Interner<TagId> coarse = map.coarse_tags();
  std::vector<TagId> translate(corpus.tags().size());
  for (std::size_t i = 0; i < corpus.tags().size(); ++i) {
    const auto& fine = corpus.tags().str(TagId{i});
    const auto target = map.map(fine);
    if (!target) throw UnmappedTagError(fine);
    translate[i] = *coarse.find(*target);
  }
  std::vector<Sentence> sentences = corpus.sentences();
  for (auto& s : sentences)
    for (auto& t : s.tokens) t.gold_tag = translate[t.gold_tag->index()];
  return Corpus(std::move(sentences), corpus.vocab(), std::move(coarse));
}

}  // namespace posinduce
