#include "mlbias/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mlbias/error.hpp"
#include "mlbias/rng.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

namespace {

std::vector<std::string> lower_word_tokens(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& t : text::tokenize(s)) {
    if (!t.punctuation) out.push_back(text::to_lower(t.text));
  }
  return out;
}

bool is_sentence_end(const text::Token& t) {
  return t.punctuation && (t.text == "." || t.text == "!" || t.text == "?");
}

// Paragraphs separated by blank lines (or one per line).
std::vector<std::string> paragraphs(const std::string& text, bool per_line) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  std::string current;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (per_line) {
      if (!text::trim(line).empty()) out.push_back(line);
      continue;
    }
    if (text::trim(line).empty()) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      if (!current.empty()) current.push_back(' ');
      current += line;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> kWords = {
      "The", "This", "That", "These", "Those", "He",  "She", "It",  "They", "We",  "I",   "In",
      "On",  "At",   "A",    "An",    "As",    "But", "And", "Our", "His",  "Her", "Its", "El",
      "La",  "Los",  "Las",  "Un",    "Una",   "Le",  "Les", "Une", "Der",  "Die", "Das", "Ein",
      "Eine", "Er",  "Sie",  "Il",    "Elle",  "Ella", "Él", "Today", "Now", "Here", "There"};
  return kWords;
}

}  // namespace

std::string to_string(Gender g) { return g == Gender::kMale ? "M" : "F"; }

Gender parse_gender(const std::string& s) {
  if (s == "M" || s == "m") return Gender::kMale;
  if (s == "F" || s == "f") return Gender::kFemale;
  throw DataError("unknown gender label '" + s + "'");
}

nlohmann::json to_json(const BioRecord& r) {
  nlohmann::json j;
  j["lang"] = r.language;
  j["tokens"] = r.tokens;
  j["occupation"] = r.occupation;
  j["gender"] = r.gender ? nlohmann::json(to_string(*r.gender)) : nlohmann::json(nullptr);
  auto spans = nlohmann::json::array();
  for (const auto& [b, e] : r.name_spans) spans.push_back({b, e});
  j["name_spans"] = std::move(spans);
  j["scrubbed"] = r.scrubbed;
  return j;
}

BioRecord record_from_json(const nlohmann::json& j) {
  BioRecord r;
  try {
    r.language = j.at("lang").get<std::string>();
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    r.occupation = j.at("occupation").get<std::string>();
    if (j.contains("gender") && !j["gender"].is_null()) r.gender = parse_gender(j["gender"].get<std::string>());
    if (j.contains("name_spans")) {
      for (const auto& s : j["name_spans"]) {
        const auto b = s.at(0).get<std::size_t>();
        const auto e = s.at(1).get<std::size_t>();
        if (b > e || e > r.tokens.size()) throw DataError("record: name span out of range");
        r.name_spans.emplace_back(b, e);
      }
    }
    r.scrubbed = j.value("scrubbed", false);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("record: ") + e.what());
  }
  return r;
}

std::vector<BioRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<BioRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<BioRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

void write_jsonl(const std::vector<BioRecord>& records, const std::filesystem::path& path) {
  text::write_file(path, to_jsonl(records));
}

void OccupationLexicon::add(const std::string& id, const std::string& form, std::optional<Gender> gender) {
  if (id.empty() || form.empty()) throw DataError("occupation lexicon: empty id or form");
  auto tokens = lower_word_tokens(form);
  if (tokens.empty()) throw DataError("occupation lexicon: form '" + form + "' has no word tokens");
  if (auto it = by_form_.find(tokens); it != by_form_.end()) {
    if (it->second != id) {
      throw DataError("occupation lexicon: form '" + form + "' maps to both '" + it->second + "' and '" + id + "'");
    }
    return;
  }
  by_form_.emplace(tokens, id);
  max_tokens_ = std::max(max_tokens_, tokens.size());
  entries_[id].push_back({form, std::move(tokens), gender});
}

std::optional<std::pair<std::string, std::size_t>> OccupationLexicon::match(const std::vector<std::string>& lower_tokens,
                                                                            std::size_t pos) const {
  const std::size_t longest = std::min(max_tokens_, lower_tokens.size() - std::min(pos, lower_tokens.size()));
  for (std::size_t len = longest; len >= 1; --len) {
    const std::vector<std::string> key(lower_tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                                       lower_tokens.begin() + static_cast<std::ptrdiff_t>(pos + len));
    if (auto it = by_form_.find(key); it != by_form_.end()) return std::make_pair(it->second, len);
  }
  return std::nullopt;
}

OccupationLexicon read_occupation_lexicon(const std::filesystem::path& path, std::string language) {
  OccupationLexicon lex(std::move(language));
  for (const auto& row : text::read_table(path)) {
    const auto& f = row.fields;
    if (f.size() < 2 || f.size() > 3) {
      throw DataError(path.string() + ":" + std::to_string(row.line) +
                      ": expected canonical_id<TAB>surface_form[<TAB>gender]");
    }
    std::optional<Gender> g;
    if (f.size() == 3 && !f[2].empty()) g = parse_gender(f[2]);
    lex.add(f[0], f[1], g);
  }
  if (lex.entries().empty()) throw DataError(path.string() + ": occupation lexicon is empty");
  return lex;
}

BioTemplate default_template(const std::string& language) {
  if (language == "en") return {{"is", "was"}, {"a", "an"}, false};
  if (language == "es") return {{"es", "era", "fue"}, {"un", "una"}, true};
  if (language == "fr") return {{"est", "était", "fut"}, {"un", "une"}, true};
  if (language == "de") return {{"ist", "war"}, {"ein", "eine"}, true};
  throw UsageError("no built-in bio template for language '" + language + "'; pass a template file");
}

BioTemplate read_template(const std::filesystem::path& path) {
  BioTemplate t;
  for (const auto& row : text::read_table(path)) {
    const auto& f = row.fields;
    const std::string loc = path.string() + ":" + std::to_string(row.line);
    if (f.size() != 2) throw DataError(loc + ": expected key<TAB>value");
    if (f[0] == "copula") {
      t.copulas.insert(text::to_lower(f[1]));
    } else if (f[0] == "article") {
      t.articles.insert(text::to_lower(f[1]));
    } else if (f[0] == "article_optional") {
      t.article_optional = f[1] == "true" || f[1] == "1";
    } else {
      throw DataError(loc + ": unknown key '" + f[0] + "'");
    }
  }
  if (t.copulas.empty()) throw DataError(path.string() + ": template defines no copula");
  return t;
}

NameRecognizer read_name_list(const std::filesystem::path& path) {
  NameRecognizer r;
  for (const auto& row : text::read_table(path)) r.given_names.insert(text::to_lower(row.fields[0]));
  r.stopwords = default_stopwords();
  return r;
}

ExtractionResult extract_bios(const std::string& input, const OccupationLexicon& lexicon, const NameRecognizer& names,
                              const BioTemplate& templ, const ExtractOptions& options) {
  ExtractionResult result;
  const std::string language = options.language.empty() ? lexicon.language() : options.language;
  const auto& stop = names.stopwords.empty() ? default_stopwords() : names.stopwords;
  for (const auto& para : paragraphs(input, options.line_paragraphs)) {
    ++result.n_paragraphs;
    if (!text::is_valid_utf8(para)) {
      ++result.n_malformed;
      continue;
    }
    const auto tokens = text::tokenize(para);
    std::vector<std::string> lower(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) lower[i] = text::to_lower(tokens[i].text);

    std::optional<BioRecord> found;
    std::size_t sentence_start = 0;
    for (std::size_t c = 0; c < tokens.size() && !found; ++c) {
      if (is_sentence_end(tokens[c])) {
        sentence_start = c + 1;
        continue;
      }
      if (tokens[c].punctuation || templ.copulas.count(lower[c]) == 0 || c == sentence_start) continue;
      // Capitalized run ending right before the copula.
      std::size_t begin = c;
      while (begin > sentence_start && !tokens[begin - 1].punctuation && text::is_capitalized(tokens[begin - 1].text)) {
        --begin;
      }
      if (begin == c) continue;
      if (c - begin > names.max_name_tokens) begin = c - names.max_name_tokens;
      while (begin < c && stop.count(tokens[begin].text) != 0) ++begin;
      if (begin == c) continue;
      const bool known = names.given_names.count(lower[begin]) != 0;
      if (!known && !(names.capitalized_bigrams && c - begin >= 2)) continue;

      std::size_t pos = c + 1;
      if (pos < tokens.size() && templ.articles.count(lower[pos]) != 0) {
        ++pos;
      } else if (!templ.article_optional) {
        continue;
      }
      for (std::size_t p = pos; p < tokens.size() && !is_sentence_end(tokens[p]); ++p) {
        if (tokens[p].punctuation) continue;
        if (auto m = lexicon.match(lower, p)) {
          BioRecord r;
          r.language = language;
          r.tokens = lower;
          r.occupation = m->first;
          r.name_spans.emplace_back(begin, c);
          // Later mentions of the same name tokens.
          for (std::size_t k = c; k < tokens.size(); ++k) {
            for (std::size_t n = begin; n < c; ++n) {
              if (tokens[k].text == tokens[n].text) {
                r.name_spans.emplace_back(k, k + 1);
                break;
              }
            }
          }
          found = std::move(r);
          break;
        }
      }
    }
    if (found) {
      result.records.push_back(std::move(*found));
    } else {
      ++result.n_unmatched;
    }
  }
  return result;
}

PronounLexicon default_pronouns(const std::string& language) {
  PronounLexicon p;
  auto add = [&](std::initializer_list<const char*> words, Gender g) {
    for (const char* w : words) p.pronouns.emplace(w, g);
  };
  if (language == "en") {
    add({"he", "him", "his", "himself"}, Gender::kMale);
    add({"she", "her", "hers", "herself"}, Gender::kFemale);
  } else if (language == "es") {
    add({"él"}, Gender::kMale);
    add({"ella"}, Gender::kFemale);
  } else if (language == "fr") {
    add({"il"}, Gender::kMale);
    add({"elle"}, Gender::kFemale);
  } else if (language == "de") {
    add({"er", "ihm", "ihn"}, Gender::kMale);
    add({"sie"}, Gender::kFemale);
  } else {
    throw UsageError("no built-in pronoun list for language '" + language + "'; pass a pronoun file");
  }
  return p;
}

PronounLexicon read_pronoun_lexicon(const std::filesystem::path& path) {
  PronounLexicon p;
  for (const auto& row : text::read_table(path)) {
    if (row.fields.size() != 2) throw DataError(path.string() + ":" + std::to_string(row.line) + ": expected pronoun<TAB>M|F");
    p.pronouns[text::to_lower(row.fields[0])] = parse_gender(row.fields[1]);
  }
  if (p.pronouns.empty()) throw DataError(path.string() + ": pronoun list is empty");
  return p;
}

std::optional<Gender> infer_gender(const BioRecord& record, const PronounLexicon& pronouns) {
  const std::size_t start = record.name_spans.empty() ? 0 : record.name_spans.front().second;
  std::size_t male = 0;
  std::size_t female = 0;
  for (std::size_t i = start; i < record.tokens.size(); ++i) {
    auto it = pronouns.pronouns.find(text::to_lower(record.tokens[i]));
    if (it == pronouns.pronouns.end()) continue;
    (it->second == Gender::kMale ? male : female) += 1;
  }
  if (male == female) return std::nullopt;
  return male > female ? Gender::kMale : Gender::kFemale;
}

ScrubLexicon ScrubLexicon::from_pronouns(const PronounLexicon& p, std::set<std::string> prefixes) {
  ScrubLexicon s;
  for (const auto& [w, g] : p.pronouns) s.pronouns.insert(w);
  for (const auto& w : prefixes) s.prefixes.insert(text::to_lower(w));
  return s;
}

bool ScrubLexicon::contains(const std::string& token) const {
  const std::string t = text::to_lower(token);
  return pronouns.count(t) != 0 || prefixes.count(t) != 0;
}

std::set<std::string> default_prefixes(const std::string& language) {
  if (language == "en") return {"mr", "mrs", "ms", "miss"};
  if (language == "es") return {"sr", "sra", "srta", "señor", "señora", "señorita", "don", "doña"};
  if (language == "fr") return {"m", "mme", "mlle", "monsieur", "madame", "mademoiselle"};
  if (language == "de") return {"herr", "frau", "hr", "fr"};
  return {};
}

ScrubLexicon read_scrub_lexicon(const std::filesystem::path& path) {
  ScrubLexicon s;
  for (const auto& row : text::read_table(path)) {
    const auto& f = row.fields;
    const std::string loc = path.string() + ":" + std::to_string(row.line);
    if (f.size() != 2) throw DataError(loc + ": expected token<TAB>pronoun|prefix");
    if (f[1] == "pronoun") {
      s.pronouns.insert(text::to_lower(f[0]));
    } else if (f[1] == "prefix") {
      std::string w = text::to_lower(f[0]);
      if (!w.empty() && w.back() == '.') w.pop_back();
      s.prefixes.insert(w);
    } else {
      throw DataError(loc + ": kind must be 'pronoun' or 'prefix'");
    }
  }
  return s;
}

BioRecord scrub(const BioRecord& record, const ScrubLexicon& lexicon, bool* emptied) {
  if (!record.gender) throw DataError("scrub: record has no gender label");
  std::vector<bool> drop(record.tokens.size(), false);
  for (const auto& [b, e] : record.name_spans) {
    for (std::size_t i = b; i < e && i < drop.size(); ++i) drop[i] = true;
  }
  for (std::size_t i = 0; i < record.tokens.size(); ++i) {
    const std::string t = text::to_lower(record.tokens[i]);
    if (lexicon.pronouns.count(t) != 0) drop[i] = true;
    if (lexicon.prefixes.count(t) != 0) {
      drop[i] = true;
      if (i + 1 < record.tokens.size() && record.tokens[i + 1] == ".") drop[i + 1] = true;
    }
  }
  BioRecord out = record;
  out.tokens.clear();
  for (std::size_t i = 0; i < record.tokens.size(); ++i) {
    if (!drop[i]) out.tokens.push_back(record.tokens[i]);
  }
  out.name_spans.clear();
  out.scrubbed = true;
  if (emptied != nullptr) *emptied = out.tokens.empty();
  return out;
}

std::vector<BioRecord> label_records(const std::vector<BioRecord>& records, const PronounLexicon& pronouns,
                                     LabelLedger* ledger) {
  std::vector<BioRecord> out;
  LabelLedger local;
  for (const auto& r : records) {
    ++local.n_in;
    if (r.tokens.empty()) {
      ++local.n_undetermined;
      continue;
    }
    if (auto g = infer_gender(r, pronouns)) {
      BioRecord labeled = r;
      labeled.gender = g;
      out.push_back(std::move(labeled));
      ++local.n_labeled;
    } else {
      ++local.n_undetermined;
    }
  }
  if (ledger != nullptr) *ledger = local;
  return out;
}

BalanceResult balance_upsample(const std::vector<BioRecord>& dataset, std::uint64_t seed) {
  std::map<std::string, std::array<std::vector<std::size_t>, 2>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    if (!r.gender) throw DataError("balance: record without gender label");
    groups[r.occupation][*r.gender == Gender::kMale ? 0 : 1].push_back(i);
  }
  BalanceResult result;
  std::set<std::string> excluded;
  for (const auto& [occ, g] : groups) {
    if (g[0].empty() || g[1].empty()) {
      excluded.insert(occ);
      result.excluded_occupations.push_back(occ);
    }
  }
  for (const auto& r : dataset) {
    if (excluded.count(r.occupation) == 0) result.records.push_back(r);
  }
  std::uint64_t stream = 0;
  for (const auto& [occ, g] : groups) {
    ++stream;
    if (excluded.count(occ) != 0) continue;
    const auto& minority = g[0].size() < g[1].size() ? g[0] : g[1];
    const std::size_t need = std::max(g[0].size(), g[1].size()) - minority.size();
    auto rng = make_rng(seed, stream);
    for (std::size_t k = 0; k < need; ++k) result.records.push_back(dataset[minority[uniform_index(rng, minority.size())]]);
  }
  return result;
}

SplitResult split_dataset(const std::vector<BioRecord>& dataset, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw UsageError("split: ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw UsageError("split: ratios must sum to 1");
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    const int g = r.gender ? (*r.gender == Gender::kMale ? 0 : 1) : 2;
    strata[{r.occupation, g}].push_back(i);
  }
  std::vector<int> assign(dataset.size(), 0);
  SplitResult result;
  std::uint64_t stream = 0;
  for (auto& [key, members] : strata) {
    ++stream;
    const std::size_t n = members.size();
    if (n < 3) {
      const char* g = key.second == 0 ? "M" : key.second == 1 ? "F" : "?";
      result.small_strata.push_back(key.first + "/" + g);
      continue;
    }
    auto rng = make_rng(seed, stream);
    shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[2]));
    while (n_val + n_test >= n && ratios[0] > 0.0) {
      (n_test >= n_val ? n_test : n_val) -= 1;
    }
    n_val = std::min(n_val, n);
    n_test = std::min(n_test, n - n_val);
    for (std::size_t k = 0; k < n_val; ++k) assign[members[k]] = 1;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) assign[members[k]] = 2;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (assign[i] == 0 ? result.train : assign[i] == 1 ? result.val : result.test).push_back(dataset[i]);
  }
  return result;
}

std::vector<OccupationCount> gender_stats(const std::vector<BioRecord>& dataset, std::size_t min_count) {
  std::map<std::string, OccupationCount> counts;
  for (const auto& r : dataset) {
    auto& c = counts[r.occupation];
    c.occupation = r.occupation;
    if (!r.gender) continue;
    (*r.gender == Gender::kMale ? c.n_male : c.n_female) += 1;
  }
  std::vector<OccupationCount> out;
  for (auto& [occ, c] : counts) {
    if (c.total() >= min_count) out.push_back(c);
  }
  return out;
}

}  // namespace mlbias
