#include "mlbias/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "mlbias/alignment.hpp"
#include "mlbias/bias_metrics.hpp"
#include "mlbias/bli.hpp"
#include "mlbias/classifier.hpp"
#include "mlbias/corpus.hpp"
#include "mlbias/debias.hpp"
#include "mlbias/embedding_store.hpp"
#include "mlbias/error.hpp"
#include "mlbias/report.hpp"
#include "mlbias/text.hpp"

namespace mlbias::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// Option values after parsing, defaults included.
json resolved_config(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "h") continue;
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      j[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

struct SpaceArgs {
  std::size_t max_vocab = kDefaultMaxVocab;
  std::size_t dim = 0;  // 0: no check
};

void add_space_flags(CLI::App* app, SpaceArgs& a) {
  app->add_option("--max-vocab", a.max_vocab, "Read at most this many vectors per file")->capture_default_str();
  app->add_option("--dim", a.dim, "Expected vector dimension (0 = any)")->capture_default_str();
}

EmbeddingSpace load_space(const fs::path& path, const std::string& language, const SpaceArgs& a,
                          RunManifest& manifest, Io& io) {
  LoadOptions o;
  o.limit = a.max_vocab;
  if (a.dim != 0) o.expected_dim = a.dim;
  o.language = language;
  auto loaded = load_vectors(path, o);
  manifest.add_input(path);
  io.err << "loaded " << loaded.space.size() << " x " << loaded.space.dim() << " vectors from " << path.string();
  if (loaded.duplicates > 0) io.err << " (" << loaded.duplicates << " duplicate words ignored)";
  io.err << "\n";
  return normalize(loaded.space);
}

json bias_report_json(const BiasReport& r) {
  json j;
  j["language"] = r.language;
  j["inbias"] = r.inbias;
  j["n_evaluated"] = r.n_evaluated;
  j["n_skipped"] = r.n_skipped;
  j["skipped"] = r.skipped;
  j["missing_seeds"] = r.missing_seeds;
  j["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
  auto& rows = j["per_pair"] = json::array();
  for (const auto& p : r.per_pair) {
    rows.push_back({{"masculine", p.masculine},
                    {"feminine", p.feminine},
                    {"tag", p.tag},
                    {"dis_m", p.dis_m},
                    {"dis_f", p.dis_f},
                    {"bias", p.bias}});
  }
  return j;
}

void write_pair_csv(const BiasReport& r, const fs::path& path) {
  CsvWriter csv({"masculine", "feminine", "tag", "dis_m", "dis_f", "bias"});
  for (const auto& p : r.per_pair) csv.row({p.masculine, p.feminine, p.tag, fmt4(p.dis_m), fmt4(p.dis_f), fmt4(p.bias)});
  csv.save(path);
}

SignificanceMethod parse_test(const std::string& s) {
  if (s == "bootstrap") return SignificanceMethod::kBootstrap;
  if (s == "permutation") return SignificanceMethod::kPermutation;
  throw UsageError("unknown significance test '" + s + "'");
}

// ---------------------------------------------------------------- inbias

struct InbiasArgs {
  std::string vectors;
  std::string lang;
  std::string pairs;
  std::string seeds;
  std::string baseline;
  std::string grid;
  std::string tag;
  std::string out;
  std::string test = "bootstrap";
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  bool projection = false;
  int seed_pair = -1;
  std::size_t delta_top = 15;
  SpaceArgs space;
};

void setup_inbias(CLI::App& root, InbiasArgs& a) {
  auto* c = root.add_subcommand("inbias", "Intrinsic bias of occupation pairs against gender seeds");
  c->add_option("--vectors", a.vectors, "Embedding file (fastText text format)");
  c->add_option("--lang", a.lang, "Language tag of the space");
  c->add_option("--pairs", a.pairs, "Occupation pair TSV (masculine, feminine[, tag])");
  c->add_option("--seeds", a.seeds, "Seed pair TSV (male, female)");
  c->add_option("--baseline", a.baseline, "Second space to test the difference against");
  c->add_option("--grid", a.grid, "TSV of source, target, vectors, pairs, seeds for a source x target matrix");
  c->add_option("--tag", a.tag, "Only evaluate pairs with this tag (e.g. strong, weak)");
  c->add_option("--test", a.test, "Significance test: bootstrap | permutation")->capture_default_str();
  c->add_option("--replicates", a.replicates, "Significance test replicates")->capture_default_str();
  c->add_option("--seed", a.seed, "Significance test seed")->capture_default_str();
  c->add_flag("--projection", a.projection, "Also write gender-direction coordinates of the occupation words");
  c->add_option("--seed-pair", a.seed_pair, "Build the projection direction from this seed pair only (-1: all)")
      ->capture_default_str();
  c->add_option("--delta-top", a.delta_top, "Most/least changed pairs listed against --baseline")->capture_default_str();
  c->add_option("--out", a.out, "Output prefix")->required();
  add_space_flags(c, a.space);
}

OccupationPairSet load_pairs_for(const std::string& pairs, const std::string& seeds, const std::string& lang,
                                 const std::string& tag, RunManifest& manifest) {
  if (pairs.empty() || seeds.empty()) throw UsageError("--pairs and --seeds are required");
  auto set = load_pair_set(pairs, seeds, lang);
  manifest.add_input(pairs);
  manifest.add_input(seeds);
  if (!tag.empty()) {
    set = set.filtered(tag);
    if (set.occ_pairs.empty()) throw DataError("no occupation pair carries tag '" + tag + "'");
  }
  return set;
}

void run_inbias_grid(const InbiasArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"inbias", resolved_config(app)};
  manifest.seeds["significance"] = a.seed;
  manifest.add_input(a.grid);
  const fs::path base = fs::path(a.grid).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  struct Cell {
    std::string source, target;
    BiasReport report;
    std::optional<double> p;
  };
  std::vector<Cell> cells;
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  for (const auto& row : text::read_table(a.grid)) {
    if (row.fields.size() != 5) {
      throw DataError(a.grid + ":" + std::to_string(row.line) + ": expected source, target, vectors, pairs, seeds");
    }
    const auto& f = row.fields;
    const auto set = load_pairs_for(resolve(f[3]).string(), resolve(f[4]).string(), f[0], a.tag, manifest);
    const std::string lang = f[0] == f[1] ? f[0] : f[0] + "-" + f[1];
    const auto space = load_space(resolve(f[2]), lang, a.space, manifest, io);
    cells.push_back({f[0], f[1], inbias(space, set), std::nullopt});
    if (std::find(sources.begin(), sources.end(), f[0]) == sources.end()) sources.push_back(f[0]);
    if (std::find(targets.begin(), targets.end(), f[1]) == targets.end()) targets.push_back(f[1]);
  }
  if (cells.empty()) throw DataError(a.grid + ": no grid cells");
  const auto method = parse_test(a.test);
  for (auto& c : cells) {
    if (c.source == c.target) continue;
    auto diag = std::find_if(cells.begin(), cells.end(),
                             [&](const Cell& d) { return d.source == c.source && d.target == d.source; });
    if (diag == cells.end()) continue;
    const auto [x, y] = paired_biases(c.report, diag->report);
    if (x.size() >= 2) c.p = significance_test(x, y, a.replicates, a.seed, method);
    c.report.p_value = c.p;
  }

  json report;
  report["sources"] = sources;
  report["targets"] = targets;
  auto& jc = report["cells"] = json::array();
  std::vector<std::string> header{"source"};
  header.insert(header.end(), targets.begin(), targets.end());
  CsvWriter matrix(header);
  for (const auto& s : sources) {
    std::vector<std::string> line{s};
    for (const auto& t : targets) {
      auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.source == s && c.target == t; });
      if (it == cells.end()) {
        line.push_back("-");
        continue;
      }
      const bool star = it->p && *it->p < 0.05;
      line.push_back(fmt4(it->report.inbias) + (star ? "*" : ""));
      auto cell = bias_report_json(it->report);
      cell["source"] = s;
      cell["target"] = t;
      cell["significant"] = star;
      jc.push_back(std::move(cell));
    }
    matrix.row(line);
  }
  matrix.save(a.out + ".matrix.csv");
  write_report(a.out + ".json", std::move(report), manifest, a.out);
  io.out << matrix.str();
}

void run_inbias(const InbiasArgs& a, const CLI::App& app, Io& io) {
  if (!a.grid.empty()) return run_inbias_grid(a, app, io);
  if (a.vectors.empty()) throw UsageError("inbias: --vectors or --grid is required");
  RunManifest manifest{"inbias", resolved_config(app)};
  const auto set = load_pairs_for(a.pairs, a.seeds, a.lang, a.tag, manifest);
  const auto space = load_space(a.vectors, a.lang, a.space, manifest, io);
  auto report = inbias(space, set);
  json extra;
  if (!a.baseline.empty()) {
    manifest.seeds["significance"] = a.seed;
    const auto base = load_space(a.baseline, a.lang, a.space, manifest, io);
    const auto base_report = inbias(base, set);
    const auto [x, y] = paired_biases(report, base_report);
    if (x.size() >= 2) report.p_value = significance_test(x, y, a.replicates, a.seed, parse_test(a.test));
    extra["baseline_inbias"] = base_report.inbias;

    const auto delta = pair_bias_delta(base, space, set);
    CsvWriter csv({"rank_group", "masculine", "feminine", "tag", "bias_baseline", "bias", "delta"});
    const std::size_t k = std::min(a.delta_top, delta.ranked.size());
    for (std::size_t i = 0; i < k; ++i) {
      const auto& d = delta.ranked[i];
      csv.row({"most", d.pair.masculine, d.pair.feminine, d.pair.tag, fmt4(d.bias_a), fmt4(d.bias_b), fmt4(d.delta)});
    }
    for (std::size_t i = 0; i < k; ++i) {
      const auto& d = delta.ranked[delta.ranked.size() - 1 - i];
      csv.row({"least", d.pair.masculine, d.pair.feminine, d.pair.tag, fmt4(d.bias_a), fmt4(d.bias_b), fmt4(d.delta)});
    }
    csv.save(a.out + ".delta.csv");
  }
  if (a.projection) {
    std::vector<std::string> words;
    std::vector<std::string> kinds;
    for (const auto& p : set.occ_pairs) {
      words.push_back(p.masculine);
      kinds.push_back("M");
      if (p.feminine != p.masculine) {
        words.push_back(p.feminine);
        kinds.push_back("F");
      }
    }
    std::optional<std::size_t> single;
    if (a.seed_pair >= 0) single = static_cast<std::size_t>(a.seed_pair);
    const auto proj = gender_projection(space, words, set.seed_pairs, single);
    CsvWriter csv({"word", "kind", "coordinate"});
    std::size_t wi = 0;
    for (const auto& pt : proj.points) {
      while (wi < words.size() && words[wi] != pt.word) ++wi;
      csv.row({pt.word, wi < kinds.size() ? kinds[wi] : "", fmt4(pt.coordinate)});
    }
    csv.row({"Avg-M", "seed", fmt4(proj.avg_male)});
    csv.row({"Avg-F", "seed", fmt4(proj.avg_female)});
    csv.save(a.out + ".projection.csv");
  }
  write_pair_csv(report, a.out + ".csv");
  auto j = bias_report_json(report);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_report(a.out + ".json", std::move(j), manifest, a.out);
  io.out << "inbias " << fmt4(report.inbias) << " over " << report.n_evaluated << " pairs (" << report.n_skipped
         << " skipped)";
  if (report.p_value) io.out << ", p=" << fmt4(*report.p_value);
  io.out << "\n";
}

// ---------------------------------------------------------------- align

struct AlignArgs {
  std::string src, tgt, dict, out, aligned_out;
  std::string src_lang, tgt_lang;
  std::string method = "rcsls";
  RcslsConfig rcsls;
  SpaceArgs space;
};

void setup_align(CLI::App& root, AlignArgs& a) {
  auto* c = root.add_subcommand("align", "Learn a linear map from a source space into a target space");
  c->add_option("--src", a.src, "Source vectors")->required();
  c->add_option("--tgt", a.tgt, "Target vectors")->required();
  c->add_option("--dict", a.dict, "Training dictionary (source target per line)")->required();
  c->add_option("--src-lang", a.src_lang, "Source language tag");
  c->add_option("--tgt-lang", a.tgt_lang, "Target language tag");
  c->add_option("--method", a.method, "rcsls | procrustes")->capture_default_str();
  c->add_option("--out", a.out, "Alignment map JSON")->required();
  c->add_option("--aligned-out", a.aligned_out, "Also write the mapped source vectors here");
  c->add_option("--batch-size", a.rcsls.batch_size, "RCSLS minibatch size")->capture_default_str();
  c->add_option("--max-sup", a.rcsls.max_sup, "RCSLS supervision pairs kept")->capture_default_str();
  c->add_option("--max-neg", a.rcsls.max_neg, "RCSLS neighborhood candidate pool")->capture_default_str();
  c->add_option("--knn", a.rcsls.knn, "RCSLS neighborhood size")->capture_default_str();
  c->add_option("--epochs", a.rcsls.epochs, "RCSLS epochs")->capture_default_str();
  c->add_option("--lr", a.rcsls.lr, "RCSLS initial learning rate")->capture_default_str();
  c->add_flag("--orthogonal", a.rcsls.orthogonal, "Project W onto orthogonal matrices after every epoch");
  c->add_flag("--spectral", a.rcsls.spectral, "Clip the singular values of W to at most 1 after every step");
  c->add_option("--seed", a.rcsls.seed, "Minibatch order seed")->capture_default_str();
  add_space_flags(c, a.space);
}

void run_align(const AlignArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"align", resolved_config(app)};
  manifest.seeds["batch_order"] = a.rcsls.seed;
  const auto src = load_space(a.src, a.src_lang, a.space, manifest, io);
  const auto tgt = load_space(a.tgt, a.tgt_lang, a.space, manifest, io);
  const auto dict = read_dictionary(a.dict, a.src_lang, a.tgt_lang);
  manifest.add_input(a.dict);
  const auto method = parse_align_method(a.method);
  AlignmentMap map;
  if (method == AlignMethod::kProcrustes) {
    map = procrustes(src, tgt, dict);
  } else {
    map = rcsls_train(src, tgt, dict, a.rcsls, [&](std::size_t epoch, double obj, double lr) {
      io.err << "epoch " << epoch << " objective " << obj << " lr " << lr << "\n";
    });
  }
  const auto resolved = resolve_pairs(src, tgt, dict);
  auto j = map.to_json();
  j["dropped_pairs"] = resolved.dropped;
  write_report(a.out, std::move(j), manifest, a.out);
  if (!a.aligned_out.empty()) save_vectors(apply_alignment(map, src), a.aligned_out);
  io.out << to_string(map.method) << " map " << map.dim() << "x" << map.dim() << " from " << map.dictionary_size
         << " pairs (" << resolved.dropped << " dropped)\n";
}

// ---------------------------------------------------------------- debias

struct DebiasArgs {
  std::string vectors, config, out, lang;
  SpaceArgs space;
};

void setup_debias(CLI::App& root, DebiasArgs& a) {
  auto* c = root.add_subcommand("debias", "Hard-debias a space (neutralize and equalize)");
  c->add_option("--vectors", a.vectors, "Input vectors")->required();
  c->add_option("--config", a.config, "Debias config bundle")->required();
  c->add_option("--out", a.out, "Output vectors")->required();
  c->add_option("--lang", a.lang, "Language tag of the input space");
  add_space_flags(c, a.space);
}

void run_debias(const DebiasArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"debias", resolved_config(app)};
  const auto space = load_space(a.vectors, a.lang, a.space, manifest, io);
  const auto config = read_debias_config(a.config);
  manifest.add_input(a.config);
  DebiasWarnings warnings;
  const auto subspace = gender_subspace(space, config.definitional_pairs, config.n_components);
  const auto out = hard_debias(space, config, &warnings);
  save_vectors(out, a.out);
  std::size_t n_excluded = 0;
  for (const auto& w : space.words()) n_excluded += config.exclusions.count(w) != 0 ? 1 : 0;
  json j;
  j["language"] = out.language();
  j["n_words"] = out.size();
  j["n_excluded"] = n_excluded;
  j["n_components"] = config.n_components;
  j["direction"] = std::vector<double>(subspace.basis.col(0).data(), subspace.basis.col(0).data() + subspace.basis.rows());
  j["parallel_words"] = warnings.parallel_words;
  j["skipped_pairs"] = warnings.skipped_pairs;
  j["clamped_pairs"] = warnings.clamped_pairs;
  write_report(a.out + ".report.json", std::move(j), manifest, a.out);
  io.out << "debiased " << out.size() << " words (" << n_excluded << " excluded)\n";
}

// ---------------------------------------------------------------- bli

struct BliArgs {
  std::string src, tgt, dict, out;
  std::string retrieval = "csls";
  std::size_t n = 10;
  std::size_t pool = kDefaultMaxVocab;
  std::size_t source_pool = kDefaultMaxVocab;
  SpaceArgs space;
};

void setup_bli(CLI::App& root, BliArgs& a) {
  auto* c = root.add_subcommand("bli", "Bilingual lexicon induction precision@1");
  c->add_option("--src", a.src, "Aligned source vectors")->required();
  c->add_option("--tgt", a.tgt, "Target vectors")->required();
  c->add_option("--dict", a.dict, "Test dictionary")->required();
  c->add_option("--retrieval", a.retrieval, "nn | csls")->capture_default_str();
  c->add_option("--n", a.n, "CSLS neighborhood size")->capture_default_str();
  c->add_option("--pool", a.pool, "Target candidate pool (first rows)")->capture_default_str();
  c->add_option("--source-pool", a.source_pool, "Mapped source rows used for target hubness terms")
      ->capture_default_str();
  c->add_option("--out", a.out, "Output prefix")->required();
  add_space_flags(c, a.space);
}

void run_bli(const BliArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"bli", resolved_config(app)};
  const auto src = load_space(a.src, "", a.space, manifest, io);
  const auto tgt = load_space(a.tgt, "", a.space, manifest, io);
  const auto dict = read_dictionary(a.dict);
  manifest.add_input(a.dict);
  BliOptions o;
  if (a.retrieval == "csls") {
    o.retrieval = Retrieval::csls(a.n);
  } else if (a.retrieval == "nn") {
    o.retrieval = Retrieval::cosine();
  } else {
    throw UsageError("unknown retrieval '" + a.retrieval + "'");
  }
  o.candidate_pool = a.pool;
  o.source_pool = a.source_pool;
  const auto result = evaluate_bli(src, tgt, dict, o);
  CsvWriter csv({"source", "gold", "predicted", "hit"});
  for (const auto& q : result.queries) {
    std::string gold;
    for (const auto& g : q.gold) gold += (gold.empty() ? "" : "|") + g;
    csv.row({q.source, gold, q.predicted, q.hit ? "1" : "0"});
  }
  csv.save(a.out + ".csv");
  write_report(a.out + ".json", result.to_json(), manifest, a.out);
  io.out << "P@1 " << fmt2(result.precision_at_1) << " (strict " << fmt2(result.precision_at_1_strict) << ") over "
         << result.n_evaluated << " sources, " << result.n_skipped_oov << " skipped\n";
}

// ---------------------------------------------------------------- corpus

struct CorpusArgs {
  std::string input, out, lang = "en";
  std::string lexicon, names, templates, pronouns, scrub_lexicon;
  bool line_paragraphs = false;
  std::uint64_t seed = 0;
  std::vector<double> ratios{0.6, 0.2, 0.2};
  std::size_t min_count = 0;
};

PronounLexicon pronouns_for(const CorpusArgs& a, RunManifest& m) {
  if (a.pronouns.empty()) return default_pronouns(a.lang);
  m.add_input(a.pronouns);
  return read_pronoun_lexicon(a.pronouns);
}

void write_stats_csv(const std::vector<BioRecord>& records, std::size_t min_count, const std::string& path) {
  CsvWriter csv({"occupation", "n_female", "n_male", "total"});
  for (const auto& c : gender_stats(records, min_count)) {
    csv.row({c.occupation, std::to_string(c.n_female), std::to_string(c.n_male), std::to_string(c.total())});
  }
  csv.save(path);
}

struct CorpusCommands {
  CorpusArgs extract, label, scrub, balance, split, stats, top_stats;
  CLI::App* group = nullptr;
};

void setup_corpus(CLI::App& root, CorpusCommands& cc) {
  cc.group = root.add_subcommand("corpus", "Build biography datasets");
  cc.group->require_subcommand(1);
  auto common = [](CLI::App* c, CorpusArgs& a, bool with_seed) {
    c->add_option("--input", a.input, "Input file")->required();
    c->add_option("--out", a.out, "Output path")->required();
    c->add_option("--lang", a.lang, "Language")->capture_default_str();
    if (with_seed) c->add_option("--seed", a.seed, "Random seed")->capture_default_str();
  };
  auto* e = cc.group->add_subcommand("extract", "Extract 'NAME is an OCCUPATION' bios from text");
  common(e, cc.extract, false);
  e->add_option("--lexicon", cc.extract.lexicon, "Occupation lexicon TSV")->required();
  e->add_option("--names", cc.extract.names, "Given-name list");
  e->add_option("--templates", cc.extract.templates, "Copula/article template file");
  e->add_flag("--line-paragraphs", cc.extract.line_paragraphs, "Treat every line as a paragraph");

  auto* l = cc.group->add_subcommand("label", "Assign binary gender from pronouns");
  common(l, cc.label, false);
  l->add_option("--pronouns", cc.label.pronouns, "Pronoun TSV (pronoun, M|F)");

  auto* s = cc.group->add_subcommand("scrub", "Remove names, gendered pronouns and prefixes");
  common(s, cc.scrub, false);
  s->add_option("--pronouns", cc.scrub.pronouns, "Pronoun TSV (pronoun, M|F)");
  s->add_option("--scrub-lexicon", cc.scrub.scrub_lexicon, "Scrub TSV (token, pronoun|prefix)");

  auto* b = cc.group->add_subcommand("balance", "Upsample the minority gender of each occupation");
  common(b, cc.balance, true);

  auto* p = cc.group->add_subcommand("split", "Stratified train/val/test split");
  common(p, cc.split, true);
  p->add_option("--ratios", cc.split.ratios, "train val test fractions")->expected(3)->capture_default_str();

  auto* t = cc.group->add_subcommand("stats", "Per-occupation gender counts as CSV");
  common(t, cc.stats, false);
  t->add_option("--min-count", cc.stats.min_count, "Minimum records per occupation")->capture_default_str();

  auto* top = root.add_subcommand("stats", "Per-occupation gender counts as CSV (same as corpus stats)");
  common(top, cc.top_stats, false);
  top->add_option("--min-count", cc.top_stats.min_count, "Minimum records per occupation")->capture_default_str();
}

void run_corpus(const std::string& sub, const CorpusArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"corpus " + sub, resolved_config(app)};
  manifest.add_input(a.input);
  json report;
  if (sub == "extract") {
    auto lexicon = read_occupation_lexicon(a.lexicon, a.lang);
    manifest.add_input(a.lexicon);
    NameRecognizer names;
    if (!a.names.empty()) {
      names = read_name_list(a.names);
      manifest.add_input(a.names);
    }
    BioTemplate templ = a.templates.empty() ? default_template(a.lang) : read_template(a.templates);
    if (!a.templates.empty()) manifest.add_input(a.templates);
    const auto r = extract_bios(text::read_file(a.input), lexicon, names, templ, {a.lang, a.line_paragraphs});
    write_jsonl(r.records, a.out);
    report = {{"n_paragraphs", r.n_paragraphs},
              {"n_records", r.records.size()},
              {"n_malformed", r.n_malformed},
              {"n_unmatched", r.n_unmatched}};
  } else if (sub == "label") {
    const auto pronouns = pronouns_for(a, manifest);
    LabelLedger ledger;
    const auto out = label_records(read_jsonl(a.input), pronouns, &ledger);
    write_jsonl(out, a.out);
    report = {{"n_in", ledger.n_in}, {"n_labeled", ledger.n_labeled}, {"n_undetermined", ledger.n_undetermined}};
  } else if (sub == "scrub") {
    ScrubLexicon lex;
    if (!a.scrub_lexicon.empty()) {
      lex = read_scrub_lexicon(a.scrub_lexicon);
      manifest.add_input(a.scrub_lexicon);
    } else {
      lex = ScrubLexicon::from_pronouns(pronouns_for(a, manifest), default_prefixes(a.lang));
    }
    std::vector<BioRecord> out;
    std::size_t emptied = 0;
    for (const auto& r : read_jsonl(a.input)) {
      bool e = false;
      out.push_back(scrub(r, lex, &e));
      emptied += e ? 1 : 0;
    }
    if (emptied > 0) io.err << "warning: " << emptied << " records have no tokens left after scrubbing\n";
    write_jsonl(out, a.out);
    report = {{"n_records", out.size()}, {"n_emptied", emptied}};
  } else if (sub == "balance") {
    manifest.seeds["balance"] = a.seed;
    const auto in = read_jsonl(a.input);
    const auto r = balance_upsample(in, a.seed);
    write_jsonl(r.records, a.out);
    report = {{"n_in", in.size()}, {"n_out", r.records.size()}, {"excluded_occupations", r.excluded_occupations}};
  } else if (sub == "split") {
    manifest.seeds["split"] = a.seed;
    if (a.ratios.size() != 3) throw UsageError("--ratios takes three values");
    const auto r = split_dataset(read_jsonl(a.input), {a.ratios[0], a.ratios[1], a.ratios[2]}, a.seed);
    write_jsonl(r.train, a.out + ".train.jsonl");
    write_jsonl(r.val, a.out + ".val.jsonl");
    write_jsonl(r.test, a.out + ".test.jsonl");
    for (const auto& s : r.small_strata) io.err << "warning: stratum " << s << " has fewer than 3 records\n";
    report = {{"n_train", r.train.size()}, {"n_val", r.val.size()}, {"n_test", r.test.size()},
              {"small_strata", r.small_strata}};
  } else {
    const auto records = read_jsonl(a.input);
    write_stats_csv(records, a.min_count, a.out);
    json rows = json::array();
    for (const auto& c : gender_stats(records, a.min_count)) {
      rows.push_back({{"occupation", c.occupation}, {"n_female", c.n_female}, {"n_male", c.n_male}});
    }
    report = {{"occupations", rows}};
  }
  write_report(a.out + ".report.json", report, manifest, a.out);
  io.out << "corpus " << sub << ": " << report.dump() << "\n";
}

// ---------------------------------------------------------------- classifier

struct TrainArgs {
  std::string space_path, corpus, out, lang;
  TrainConfig train;
  SpaceArgs space;
};

void add_train_flags(CLI::App* c, TrainConfig& t) {
  c->add_option("--epochs", t.epochs, "SGD epochs")->capture_default_str();
  c->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
  c->add_option("--l2", t.l2, "L2 penalty")->capture_default_str();
  c->add_option("--batch-size", t.batch_size, "Minibatch size (0 = full batch)")->capture_default_str();
  c->add_option("--seed", t.seed, "Shuffle seed")->capture_default_str();
}

void setup_train(CLI::App& root, TrainArgs& a) {
  auto* c = root.add_subcommand("train", "Train the occupation classifier on frozen embeddings");
  c->add_option("--space", a.space_path, "Embedding file")->required();
  c->add_option("--corpus", a.corpus, "Training records (JSON Lines)")->required();
  c->add_option("--out", a.out, "Model JSON")->required();
  c->add_option("--lang", a.lang, "Language tag of the space");
  add_train_flags(c, a.train);
  add_space_flags(c, a.space);
}

void run_train(const TrainArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"train", resolved_config(app)};
  manifest.seeds["shuffle"] = a.train.seed;
  const auto space = load_space(a.space_path, a.lang, a.space, manifest, io);
  manifest.add_input(a.corpus);
  const auto r = train(read_jsonl(a.corpus), space, a.train);
  save_model(r.model, a.out);
  json j{{"n_used", r.n_used}, {"n_zero_vector", r.n_zero_vector}, {"loss_trace", r.loss_trace},
         {"fingerprint", r.model.fingerprint}};
  write_report(a.out + ".report.json", j, manifest, a.out);
  io.out << "trained " << r.model.n_classes() << " classes on " << r.n_used << " records, final loss "
         << (r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << "\n";
}

struct TransferArgs {
  std::string model, src_space, tgt_space, corpus, out;
  double finetune_frac = 0.2;
  TrainConfig train;
  SpaceArgs space;
};

void setup_transfer(CLI::App& root, TransferArgs& a) {
  auto* c = root.add_subcommand("transfer", "Fine-tune a source model on a fraction of target-language data");
  c->add_option("--model", a.model, "Source model JSON")->required();
  c->add_option("--src-space", a.src_space, "Space the source model was trained on")->required();
  c->add_option("--space", a.tgt_space, "Target-language space")->required();
  c->add_option("--corpus", a.corpus, "Target training records")->required();
  c->add_option("--finetune-frac", a.finetune_frac, "Fraction of target records used")->capture_default_str();
  c->add_option("--out", a.out, "Model JSON")->required();
  add_train_flags(c, a.train);
  add_space_flags(c, a.space);
}

void run_transfer(const TransferArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"transfer", resolved_config(app)};
  manifest.seeds["finetune"] = a.train.seed;
  const auto model = load_model(a.model);
  manifest.add_input(a.model);
  const auto src = load_space(a.src_space, "", a.space, manifest, io);
  const auto tgt = load_space(a.tgt_space, "", a.space, manifest, io);
  manifest.add_input(a.corpus);
  const auto r = transfer(model, src, tgt, read_jsonl(a.corpus), {a.finetune_frac, a.train});
  save_model(r.model, a.out);
  write_report(a.out + ".report.json", json{{"n_finetune", r.n_finetune}, {"loss_trace", r.loss_trace}}, manifest,
               a.out);
  io.out << "fine-tuned on " << r.n_finetune << " target records\n";
}

struct EvalArgs {
  std::string model, space_path, corpus, out;
  SpaceArgs space;
};

void setup_eval(CLI::App& root, EvalArgs& a) {
  auto* c = root.add_subcommand("eval-gap", "Per-gender accuracy and |Diff| of a model on a test set");
  c->add_option("--model", a.model, "Model JSON")->required();
  c->add_option("--space", a.space_path, "Embedding file used to featurize")->required();
  c->add_option("--corpus", a.corpus, "Test records")->required();
  c->add_option("--out", a.out, "Output prefix")->required();
  add_space_flags(c, a.space);
}

void run_eval(const EvalArgs& a, const CLI::App& app, Io& io) {
  RunManifest manifest{"eval-gap", resolved_config(app)};
  const auto model = load_model(a.model);
  manifest.add_input(a.model);
  const auto space = load_space(a.space_path, "", a.space, manifest, io);
  manifest.add_input(a.corpus);
  const auto report = evaluate_gap(model, read_jsonl(a.corpus), space);
  CsvWriter csv({"occupation", "n_male", "n_female", "acc_male", "acc_female", "abs_diff"});
  for (const auto& r : report.rows) {
    csv.row({r.occupation, std::to_string(r.n_male), std::to_string(r.n_female), fmt2(r.acc_male), fmt2(r.acc_female),
             fmt2(std::abs(r.acc_male - r.acc_female))});
  }
  csv.save(a.out + ".csv");
  CsvWriter summary({"Avg", "Female", "Male", "|Diff|"});
  summary.row({fmt2(report.avg_accuracy), fmt2(report.female_accuracy), fmt2(report.male_accuracy), fmt2(report.diff)});
  summary.save(a.out + ".summary.csv");
  write_report(a.out + ".json", report.to_json(), manifest, a.out);
  io.out << summary.str();
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
  std::string recipe, out_dir;
  std::vector<std::string> sets;
};

void setup_pipeline(CLI::App& root, PipelineArgs& a) {
  auto* c = root.add_subcommand("pipeline", "Run a recipe of commands with cached intermediates");
  c->add_option("--recipe", a.recipe, "Recipe file")->required();
  c->add_option("--out-dir", a.out_dir, "Directory for step outputs")->required();
  c->add_option("--set", a.sets, "Variable override NAME=VALUE (repeatable)");
}

void run_pipeline_cmd(const PipelineArgs& a, Io& io) {
  PipelineOptions o;
  o.out_dir = a.out_dir;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects NAME=VALUE, got '" + s + "'");
    o.overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  const auto outcomes = run_pipeline(parse_recipe(text::read_file(a.recipe)), o, io.out, io.err);
  std::size_t hits = 0;
  for (const auto& s : outcomes) hits += s.cache_hit ? 1 : 0;
  io.out << "pipeline: " << outcomes.size() << " steps, " << hits << " cached\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  CLI::App app{"Gender-bias analysis for multilingual word embeddings", "mlbias"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  InbiasArgs inbias_args;
  AlignArgs align_args;
  DebiasArgs debias_args;
  BliArgs bli_args;
  CorpusCommands corpus_args;
  TrainArgs train_args;
  TransferArgs transfer_args;
  EvalArgs eval_args;
  PipelineArgs pipeline_args;
  setup_inbias(app, inbias_args);
  setup_align(app, align_args);
  setup_debias(app, debias_args);
  setup_bli(app, bli_args);
  setup_corpus(app, corpus_args);
  setup_train(app, train_args);
  setup_transfer(app, transfer_args);
  setup_eval(app, eval_args);
  setup_pipeline(app, pipeline_args);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "inbias") {
      run_inbias(inbias_args, *sub, io);
    } else if (name == "align") {
      run_align(align_args, *sub, io);
    } else if (name == "debias") {
      run_debias(debias_args, *sub, io);
    } else if (name == "bli") {
      run_bli(bli_args, *sub, io);
    } else if (name == "corpus") {
      const auto* leaf = sub->get_subcommands().front();
      const std::string op = leaf->get_name();
      const CorpusArgs& a = op == "extract"   ? corpus_args.extract
                            : op == "label"   ? corpus_args.label
                            : op == "scrub"   ? corpus_args.scrub
                            : op == "balance" ? corpus_args.balance
                            : op == "split"   ? corpus_args.split
                                              : corpus_args.stats;
      run_corpus(op, a, *leaf, io);
    } else if (name == "stats") {
      run_corpus("stats", corpus_args.top_stats, *sub, io);
    } else if (name == "train") {
      run_train(train_args, *sub, io);
    } else if (name == "transfer") {
      run_transfer(transfer_args, *sub, io);
    } else if (name == "eval-gap") {
      run_eval(eval_args, *sub, io);
    } else if (name == "pipeline") {
      run_pipeline_cmd(pipeline_args, io);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}

}  // namespace mlbias::cli
