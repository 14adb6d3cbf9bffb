#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mlbias {

enum class Gender { kMale, kFemale };
std::string to_string(Gender g);
Gender parse_gender(const std::string& s);

using Span = std::pair<std::size_t, std::size_t>;  // [begin, end) token range

struct BioRecord {
  std::string language;
  std::vector<std::string> tokens;
  std::string occupation;
  std::optional<Gender> gender;
  std::vector<Span> name_spans;
  bool scrubbed = false;

  bool operator==(const BioRecord&) const = default;
};

nlohmann::json to_json(const BioRecord& r);
BioRecord record_from_json(const nlohmann::json& j);
// One record per line.
std::vector<BioRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::vector<BioRecord>& records, const std::filesystem::path& path);
std::string to_jsonl(const std::vector<BioRecord>& records);

struct SurfaceForm {
  std::string form;
  std::vector<std::string> tokens;  // lowercased
  std::optional<Gender> gender;
};

// Canonical occupation ids with their surface forms. Gendered variants of
// one occupation share the canonical id.
class OccupationLexicon {
 public:
  explicit OccupationLexicon(std::string language = {}) : language_(std::move(language)) {}

  // Throws DataError if the form already maps to a different id.
  void add(const std::string& id, const std::string& form, std::optional<Gender> gender = std::nullopt);

  const std::string& language() const { return language_; }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const std::map<std::string, std::vector<SurfaceForm>>& entries() const { return entries_; }
  std::size_t max_form_tokens() const { return max_tokens_; }

  // Canonical id of the longest form starting at tokens[pos], with its length.
  std::optional<std::pair<std::string, std::size_t>> match(const std::vector<std::string>& lower_tokens,
                                                           std::size_t pos) const;

 private:
  std::string language_;
  std::map<std::string, std::vector<SurfaceForm>> entries_;
  std::map<std::vector<std::string>, std::string> by_form_;
  std::size_t max_tokens_ = 0;
};

// "canonical_id<TAB>surface_form[<TAB>M|F]"
OccupationLexicon read_occupation_lexicon(const std::filesystem::path& path, std::string language = {});

// Copula/article vocabulary for the "NAME is an OCCUPATION" pattern.
struct BioTemplate {
  std::set<std::string> copulas;
  std::set<std::string> articles;
  bool article_optional = false;
};
BioTemplate default_template(const std::string& language);
// Lines "copula<TAB>word", "article<TAB>word", "article_optional<TAB>true|false".
BioTemplate read_template(const std::filesystem::path& path);

struct NameRecognizer {
  std::set<std::string> given_names;
  // Accept runs of two or more capitalized tokens even without a known name.
  bool capitalized_bigrams = true;
  std::size_t max_name_tokens = 4;
  // Capitalized words that never start a name (sentence-initial function words).
  std::set<std::string> stopwords;
};
// One given name per line.
NameRecognizer read_name_list(const std::filesystem::path& path);

struct ExtractOptions {
  std::string language;
  bool line_paragraphs = false;  // each line is its own paragraph
};

struct ExtractionResult {
  std::vector<BioRecord> records;
  std::size_t n_paragraphs = 0;
  std::size_t n_malformed = 0;
  std::size_t n_unmatched = 0;
};

ExtractionResult extract_bios(const std::string& text, const OccupationLexicon& lexicon, const NameRecognizer& names,
                              const BioTemplate& templ, const ExtractOptions& options = {});

// Gendered third-person pronouns, lowercased.
struct PronounLexicon {
  std::map<std::string, Gender> pronouns;
};
PronounLexicon default_pronouns(const std::string& language);
// "pronoun<TAB>M|F"
PronounLexicon read_pronoun_lexicon(const std::filesystem::path& path);

// Majority vote over gendered pronouns after the first name span; ties and
// no evidence give nullopt.
std::optional<Gender> infer_gender(const BioRecord& record, const PronounLexicon& pronouns);

struct ScrubLexicon {
  std::set<std::string> pronouns;
  std::set<std::string> prefixes;  // honorifics; a following "." is removed too

  static ScrubLexicon from_pronouns(const PronounLexicon& p, std::set<std::string> prefixes);
  bool contains(const std::string& token) const;
};
std::set<std::string> default_prefixes(const std::string& language);
// "token<TAB>pronoun|prefix"
ScrubLexicon read_scrub_lexicon(const std::filesystem::path& path);

// Drops name-span tokens and scrub-lexicon tokens. Requires a gender label.
// `emptied` is set when no token survives.
BioRecord scrub(const BioRecord& record, const ScrubLexicon& lexicon, bool* emptied = nullptr);

struct LabelLedger {
  std::size_t n_in = 0;
  std::size_t n_labeled = 0;
  std::size_t n_undetermined = 0;
};
std::vector<BioRecord> label_records(const std::vector<BioRecord>& records, const PronounLexicon& pronouns,
                                     LabelLedger* ledger = nullptr);

struct BalanceResult {
  std::vector<BioRecord> records;
  std::vector<std::string> excluded_occupations;  // missing one gender
};

// Upsamples the minority gender of every occupation with replacement until
// both genders have equal counts. Original records keep their order; the
// duplicates are appended.
BalanceResult balance_upsample(const std::vector<BioRecord>& dataset, std::uint64_t seed);

struct SplitResult {
  std::vector<BioRecord> train;
  std::vector<BioRecord> val;
  std::vector<BioRecord> test;
  std::vector<std::string> small_strata;  // "occupation/gender" sent wholly to train
};

// Stratified by (occupation, gender); each split keeps dataset order.
SplitResult split_dataset(const std::vector<BioRecord>& dataset, std::array<double, 3> ratios, std::uint64_t seed);

struct OccupationCount {
  std::string occupation;
  std::size_t n_female = 0;
  std::size_t n_male = 0;
  std::size_t total() const { return n_female + n_male; }
};
// Per-occupation gender counts for occupations with at least min_count records.
std::vector<OccupationCount> gender_stats(const std::vector<BioRecord>& dataset, std::size_t min_count = 0);

}  // namespace mlbias
