#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "multee/errors.hpp"

namespace multee {

inline constexpr int kPaddingId = 0;
inline constexpr int kOovId = 1;

inline constexpr std::string_view kAnswerBegin = "@@@answer";
inline constexpr std::string_view kAnswerEnd = "answer@@@";
inline constexpr std::string_view kSentenceSeparator = "@@sep@@";

/// Lowercased tokens and their vocabulary ids, always the same length.
struct TokenSeq {
  std::vector<std::string> tokens;
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSeq&) const = default;
};

/// Token <-> id mapping. Ids 0 and 1 are reserved for padding and
/// out-of-vocabulary tokens.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Adds `token` if absent and returns its id.
  int add(std::string_view token);
  /// Id of `token`, or kOovId when unknown.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the ordered token list; stored in checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Lowercase, split on whitespace and punctuation; the answer markers
/// survive as single tokens. Throws EmptyText on blank input.
std::vector<std::string> split_tokens(std::string_view text);

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);

/// Re-indexes an already split token list.
TokenSeq to_token_seq(std::vector<std::string> tokens, const Vocabulary& vocab);

/// Rewrites a question and a candidate answer as a declarative statement.
std::string make_hypothesis(std::string_view question, std::string_view answer);

/// Wraps the first occurrence of `answer` in `hypothesis` with the answer
/// markers. Throws SpanNotFound when absent. An already marked hypothesis
/// is returned unchanged.
std::string mark_answer_span(std::string_view hypothesis, std::string_view answer);

/// make_hypothesis + mark_answer_span, appending a marked answer when the
/// span cannot be found.
std::string marked_hypothesis(std::string_view question, std::string_view answer);

enum class EntailmentLabel : int { entailment = 0, contradiction = 1, neutral = 2 };
inline constexpr int kNumEntailmentLabels = 3;

std::string_view to_string(EntailmentLabel label);
EntailmentLabel parse_entailment_label(std::string_view text);

enum class TaskType { single_correct, multi_label };

std::string_view to_string(TaskType task);
TaskType parse_task_type(std::string_view text);

struct NLIExample {
  std::string premise_text;
  std::string hypothesis_text;
  TokenSeq premise;
  TokenSeq hypothesis;
  EntailmentLabel label = EntailmentLabel::neutral;
};

struct QAExample {
  std::string question;
  std::vector<std::string> choices;
  std::vector<std::string> hypothesis_texts;
  std::vector<std::string> premise_texts;
  std::vector<TokenSeq> hypotheses;  // one per choice
  std::vector<TokenSeq> premises;
  std::vector<int> gold;
  std::optional<std::vector<int>> relevance_labels;
  bool contiguous = false;
  TaskType task_type = TaskType::single_correct;

  std::size_t num_choices() const { return choices.size(); }
  std::size_t num_premises() const { return premise_texts.size(); }
  bool is_gold(int choice) const;
};

/// Throws ValidationError describing the first violated invariant.
void validate(const QAExample& example);

/// Tokenizes the text fields of `example` against `vocab`.
void index_example(QAExample& example, const Vocabulary& vocab);
void index_example(NLIExample& example, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// JSON-lines datasets
// ---------------------------------------------------------------------------

/// Reads and validates QA records without tokenizing them. Missing
/// hypotheses are synthesized from question and choice.
std::vector<QAExample> read_qa_records(const std::filesystem::path& path);
std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path, const Vocabulary& vocab);
std::string to_json_line(const QAExample& example);
void write_qa_dataset(const std::filesystem::path& path, const std::vector<QAExample>& examples);

std::vector<NLIExample> read_nli_records(const std::filesystem::path& path);
std::vector<NLIExample> load_nli_dataset(const std::filesystem::path& path,
                                         const Vocabulary& vocab);
std::string to_json_line(const NLIExample& example);
void write_nli_dataset(const std::filesystem::path& path, const std::vector<NLIExample>& examples);

/// Vocabulary over every text field, in first-seen order, plus the
/// sentence separator.
Vocabulary build_vocabulary(const std::vector<QAExample>& qa, const std::vector<NLIExample>& nli);

// ---------------------------------------------------------------------------
// Synthetic worlds
// ---------------------------------------------------------------------------

struct Fact {
  int subject = 0;
  int relation = 0;
  int object = 0;
  bool operator==(const Fact&) const = default;
};

struct SyntheticWorld {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Fact> facts;
  std::uint64_t seed = 0;

  /// Every token any generated sentence can contain.
  Vocabulary vocabulary() const;
  std::string sentence(const Fact& fact) const;
};

struct SyntheticQAConfig {
  int n_entities = 24;
  int n_relations = 4;
  int n_questions = 100;
  int n_distractors = 6;
  int n_choices = 4;
  std::uint64_t seed = 7;
};

struct SyntheticQA {
  SyntheticWorld world;
  std::vector<QAExample> examples;
};

/// Two-hop questions: the answer follows from chaining two premises, and
/// every wrong choice gets a lure sentence of the same shape as the true
/// second hop. Examples are indexed against world.vocabulary().
SyntheticQA gen_synthetic_qa(const SyntheticQAConfig& config);

struct SyntheticNLIConfig {
  int n_examples = 300;
  std::uint64_t seed = 11;
};

/// Class-balanced sentence pairs over the world's symbols, indexed against
/// world.vocabulary().
std::vector<NLIExample> gen_synthetic_nli(const SyntheticNLIConfig& config,
                                          const SyntheticWorld& world);

}  // namespace multee
