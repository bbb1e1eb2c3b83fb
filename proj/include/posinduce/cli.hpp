#pragma once

// Command-line front end. run() never exits the process: it returns
// 0 on success, 1 on a data or model error, 2 on a usage error.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "posinduce/corpus.hpp"
#include "posinduce/error.hpp"
#include "posinduce/eval.hpp"
#include "posinduce/induction.hpp"
#include "posinduce/ngram_stats.hpp"

namespace posinduce::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  InductionConfig induction;
  std::string direction = "left";
  std::string input;
  std::string train;
  std::string test;
  std::string tagmap;
  std::string model;
  std::string out;
  bool lowercase = false;
  bool tagged = false;
  int verbosity = 0;
};

namespace detail {

inline void add_induction_flags(CLI::App& cmd, RunConfig& rc) {
  auto& c = rc.induction;
  cmd.add_option("--clusters", c.target_clusters, "target number of clusters")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--min-total", c.min_total, "minimum observations of a candidate context")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--bw-iters", c.bw_iters, "Baum-Welch iterations per hypothesis")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--bw-tol", c.bw_tol, "Baum-Welch log-likelihood tolerance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--lambda", c.lambda, "additive smoothing")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--seed", c.seed, "root random seed")->capture_default_str();
  cmd.add_option("--contexts-per-iter", c.candidate_contexts_per_iter, "candidate contexts scored per iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--max-existing-targets", c.max_existing_targets,
                 "existing clusters tried as merge targets (0 = all)")
      ->capture_default_str();
}

inline void add_context_flags(CLI::App& cmd, RunConfig& rc) {
  cmd.add_option("--direction", rc.direction, "side of the context bigram")
      ->capture_default_str()
      ->check(CLI::IsMember({"left", "right"}));
  cmd.add_option("--min-followers", rc.induction.min_followers, "minimum distinct followers of a context")
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string& v) {
            std::size_t n = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
            if (ec != std::errc{} || ptr != v.data() + v.size()) return std::string("expected an integer");
            return n >= 2 ? std::string() : std::string("must be at least 2");
          },
          ">=2"));
}

// Returns the verbosity flag; its count is read after parsing because an int
// bound to several subcommands is reset by the ones not invoked.
inline CLI::Option* add_common_flags(CLI::App& cmd, RunConfig& rc) {
  cmd.add_flag("--lowercase", rc.lowercase, "fold ASCII letters to lower case on input");
  return cmd.add_flag("-v,--verbose", "progress on stderr");
}

inline Corpus load_input(const std::string& path, bool tagged, bool lowercase) {
  const LoadOptions opts{lowercase};
  return tagged ? load_tagged_file(path, opts) : load_plain_file(path, opts);
}

// A gold-tagged file has TABs on its token lines. Checked up front so an
// untagged file gets a clear message rather than a format error.
inline void require_tagged(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (line.find('\t') == std::string::npos)
      throw GoldRequiredError("gold tags required: '" + path + "' is not in form<TAB>tag format");
    return;
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

inline std::string shortest(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline void write_resolved(const std::filesystem::path& dir, const std::string& command, const RunConfig& rc) {
  auto out = open_output(dir / "config.resolved");
  const auto& c = rc.induction;
  out << "command = " << command << '\n';
  if (!rc.input.empty()) out << "input = " << rc.input << '\n';
  if (!rc.train.empty()) out << "train = " << rc.train << '\n';
  if (!rc.test.empty()) out << "test = " << rc.test << '\n';
  if (!rc.tagmap.empty()) out << "tagmap = " << rc.tagmap << '\n';
  out << "input_format = " << (rc.tagged || command == "eval" ? "tagged" : "plain") << '\n';
  out << "lowercase = " << (rc.lowercase ? "true" : "false") << '\n';
  out << "clusters = " << c.target_clusters << '\n';
  out << "direction = " << to_string(c.direction) << '\n';
  out << "min_followers = " << c.min_followers << '\n';
  out << "min_total = " << c.min_total << '\n';
  out << "contexts_per_iter = " << c.candidate_contexts_per_iter << '\n';
  out << "max_existing_targets = " << c.max_existing_targets << '\n';
  out << "bw_iters = " << c.bw_iters << '\n';
  out << "bw_tol = " << shortest(c.bw_tol) << '\n';
  out << "lambda = " << shortest(c.lambda) << '\n';
  out << "seed = " << c.seed << '\n';
}

inline ProgressCallback progress_logger(const RunConfig& rc, std::ostream& err) {
  if (rc.verbosity == 0) return {};
  return [&err](const ClusterState& s, const MergeRecord& r) {
    err << "iteration " << r.iteration << ": " << s.num_clusters() << " clusters, " << r.members.size()
        << " words merged" << (r.context ? "" : " (fallback)") << ", score " << std::fixed << std::setprecision(6)
        << r.score << '\n';
  };
}

inline int cmd_stats(const RunConfig& rc, std::ostream& out) {
  const auto corpus = load_input(rc.input, rc.tagged, rc.lowercase);
  const auto table = build_trigram_table(corpus.symbol_sequences(), rc.induction.direction);
  const auto ranked = rank_contexts(table, rc.induction.min_followers, rc.induction.min_total);
  for (const auto& r : ranked)
    out << corpus.vocab().str(r.key.first) << '\t' << corpus.vocab().str(r.key.second) << '\t' << std::fixed
        << std::setprecision(6) << r.entropy << '\t' << r.total << '\t' << r.follower_count << '\n';
  return kExitOk;
}

inline int cmd_induce(const RunConfig& rc, std::ostream& err) {
  const auto corpus = load_input(rc.input, rc.tagged, rc.lowercase);
  const auto dir = prepare_out_dir(rc.out);
  write_resolved(dir, "induce", rc);
  const auto state = induce(corpus, rc.induction, progress_logger(rc, err));
  {
    auto f = open_output(dir / "clusters.tsv");
    write_clusters(f, corpus, state);
  }
  {
    auto f = open_output(dir / "history.tsv");
    write_history(f, corpus, state);
  }
  auto f = open_output(dir / "model.hmm");
  write_tagger(f, train_tagger(corpus, state, rc.induction.lambda));
  if (rc.verbosity) err << "wrote " << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_eval(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  require_tagged(rc.train);
  require_tagged(rc.test);
  const LoadOptions opts{rc.lowercase};
  const auto train = load_tagged_file(rc.train, opts);
  const auto test = load_tagged_file(rc.test, opts);
  TagMap map;
  if (!rc.tagmap.empty()) {
    map = load_tag_map_file(rc.tagmap);
  } else {
    for (const auto& t : train.tags().strings()) map.add(t, t);
    for (const auto& t : test.tags().strings()) map.add(t, t);
  }
  const auto dir = prepare_out_dir(rc.out);
  write_resolved(dir, "eval", rc);
  const auto r = pipeline_eval(train, test, map, rc.induction, progress_logger(rc, err));
  {
    auto f = open_output(dir / "clusters.tsv");
    write_clusters(f, train, r.state);
  }
  {
    auto f = open_output(dir / "history.tsv");
    write_history(f, train, r.state);
  }
  {
    auto f = open_output(dir / "model.hmm");
    write_tagger(f, r.tagger);
  }
  std::ostringstream text;
  write_report_text(text, "In-domain (induced clusters on " + rc.train + ")", r.in_domain, r.tags);
  text << '\n';
  write_report_text(text, "Out-of-domain (HMM tagger on " + rc.test + ")", r.out_of_domain, r.tags);
  {
    auto f = open_output(dir / "report.txt");
    f << text.str();
  }
  {
    auto f = open_output(dir / "report.tsv");
    write_report_tsv(f, "in_domain", r.in_domain, r.tags);
    write_report_tsv(f, "out_of_domain", r.out_of_domain, r.tags);
  }
  out << text.str();
  return kExitOk;
}

inline int cmd_tag(const RunConfig& rc, std::ostream& out) {
  std::ifstream model_in(rc.model);
  if (!model_in) throw Error("cannot open '" + rc.model + "'");
  const auto tagger = read_tagger(model_in);
  const auto corpus = load_input(rc.input, rc.tagged, rc.lowercase);
  const auto labels = tag_corpus(tagger, corpus);
  std::ofstream file;
  if (!rc.out.empty()) file = open_output(rc.out);
  std::ostream& sink = rc.out.empty() ? out : file;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const auto& tokens = corpus.sentences()[s].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) sink << corpus.vocab().str(tokens[t].form) << '\t' << labels[s][t] << '\n';
    sink << '\n';
  }
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Unsupervised part-of-speech induction by entropy-guided agglomerative clustering"};
  app.name("posinduce");
  app.require_subcommand(1);
  std::vector<CLI::Option*> verbose;

  auto* stats = app.add_subcommand("stats", "rank trigram contexts by follower entropy");
  stats->add_option("--input", rc.input, "corpus file")->required();
  stats->add_flag("--tagged", rc.tagged, "input is form<TAB>tag");
  stats->add_option("--min-total", rc.induction.min_total, "minimum observations of a context")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  detail::add_context_flags(*stats, rc);
  verbose.push_back(detail::add_common_flags(*stats, rc));

  auto* induce_cmd = app.add_subcommand("induce", "cluster a corpus into --clusters classes");
  induce_cmd->add_option("--input", rc.input, "corpus file")->required();
  induce_cmd->add_flag("--tagged", rc.tagged, "input is form<TAB>tag (tags ignored)");
  induce_cmd->add_option("--out", rc.out, "output directory")->required();
  detail::add_context_flags(*induce_cmd, rc);
  detail::add_induction_flags(*induce_cmd, rc);
  verbose.push_back(detail::add_common_flags(*induce_cmd, rc));

  auto* eval_cmd = app.add_subcommand("eval", "induce on --train, tag --test, score both against gold");
  eval_cmd->add_option("--train", rc.train, "gold-tagged training corpus")->required();
  eval_cmd->add_option("--test", rc.test, "gold-tagged test corpus")->required();
  eval_cmd->add_option("--tagmap", rc.tagmap, "fine<TAB>coarse tag map (default: identity)");
  eval_cmd->add_option("--out", rc.out, "output directory")->required();
  detail::add_context_flags(*eval_cmd, rc);
  detail::add_induction_flags(*eval_cmd, rc);
  verbose.push_back(detail::add_common_flags(*eval_cmd, rc));

  auto* tag_cmd = app.add_subcommand("tag", "tag a corpus with a trained model");
  tag_cmd->add_option("--model", rc.model, "model.hmm from induce or eval")->required();
  tag_cmd->add_option("--input", rc.input, "corpus file")->required();
  tag_cmd->add_flag("--tagged", rc.tagged, "input is form<TAB>tag (tags ignored)");
  tag_cmd->add_option("--out", rc.out, "output file (default: stdout)");
  verbose.push_back(detail::add_common_flags(*tag_cmd, rc));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    if (const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front())
      err << "run '" << sub->get_display_name(true) << " --help' for options\n";
    return kExitUsage;
  }

  for (auto* v : verbose) rc.verbosity += static_cast<int>(v->count());
  try {
    rc.induction.direction = parse_direction(rc.direction);
    rc.induction.validate();
    if (stats->parsed()) return detail::cmd_stats(rc, out);
    if (induce_cmd->parsed()) return detail::cmd_induce(rc, err);
    if (eval_cmd->parsed()) return detail::cmd_eval(rc, out, err);
    return detail::cmd_tag(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace posinduce::cli
