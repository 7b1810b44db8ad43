#include "multee/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>

namespace multee {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Non-ASCII bytes count as word characters so UTF-8 sequences stay intact.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0 || c == '_';
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& words, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

void split_plain(std::string_view chunk, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (is_word_char(chunk[i])) {
      std::size_t j = i;
      while (j < chunk.size() && is_word_char(chunk[j])) ++j;
      out.emplace_back(chunk.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, chunk[i]);
      ++i;
    }
  }
}

// Position of the first occurrence of `needle` in `hay` (both lowercase)
// that sits on word boundaries; falls back to the first raw occurrence.
std::size_t find_answer(const std::string& hay, const std::string& needle) {
  std::size_t first_raw = std::string::npos;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1)) {
    if (first_raw == std::string::npos) first_raw = pos;
    const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end == hay.size() || !is_word_char(hay[end]);
    if (left && right) return pos;
  }
  return first_raw;
}

constexpr std::array<std::string_view, 4> kBeAux = {"is", "are", "was", "were"};
constexpr std::array<std::string_view, 3> kDoAux = {"do", "does", "did"};

template <std::size_t N>
bool one_of(const std::string& w, const std::array<std::string_view, N>& set) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno > 2 && line.empty()) throw ParseError("empty vocabulary entry", lineno);
    v.index_.emplace(line, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < 2) {
    throw ValidationError("vocabulary " + path.string() + " lacks the two reserved lines");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kOovId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

std::vector<std::string> split_tokens(std::string_view text) {
  const std::string lowered = lower(text);
  std::vector<std::string> out;
  for (const auto& chunk : split_whitespace(lowered)) {
    std::string_view rest = chunk;
    while (!rest.empty()) {
      const std::size_t b = rest.find(kAnswerBegin);
      const std::size_t e = rest.find(kAnswerEnd);
      const std::size_t at = std::min(b, e);
      if (at == std::string_view::npos) {
        split_plain(rest, out);
        break;
      }
      split_plain(rest.substr(0, at), out);
      const std::string_view marker = at == b ? kAnswerBegin : kAnswerEnd;
      out.emplace_back(marker);
      rest.remove_prefix(at + marker.size());
    }
  }
  if (out.empty()) throw EmptyText("text contains no tokens");
  return out;
}

TokenSeq to_token_seq(std::vector<std::string> tokens, const Vocabulary& vocab) {
  TokenSeq seq;
  seq.ids.reserve(tokens.size());
  for (const auto& t : tokens) seq.ids.push_back(vocab.id(t));
  seq.tokens = std::move(tokens);
  return seq;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  return to_token_seq(split_tokens(text), vocab);
}

// ---------------------------------------------------------------------------
// Hypothesis construction
// ---------------------------------------------------------------------------

std::string make_hypothesis(std::string_view question, std::string_view answer) {
  std::string_view q = trim(question);
  const std::string_view a = trim(answer);
  if (q.empty()) throw EmptyText("question is empty");
  if (a.empty()) throw EmptyText("answer is empty");
  while (!q.empty() && (q.back() == '?' || is_space(q.back()))) q.remove_suffix(1);
  const std::string ans(a);
  if (q.empty()) return ans;

  const std::vector<std::string> words = split_whitespace(q);
  const std::string wh = lower(words[0]);
  const std::string aux = words.size() > 1 ? lower(words[1]) : std::string();
  const std::size_t rest = words.size() > 2 ? words.size() - 2 : 0;
  const std::string original_aux = words.size() > 1 ? words[1] : std::string();

  if (wh == "where" || wh == "when") {
    if (one_of(aux, kBeAux) && rest >= 2) {
      // "Where was Facebook launched" -> "Facebook was launched in A"
      return join(words, 2, words.size() - 1) + " " + original_aux + " " + words.back() + " in " +
             ans;
    }
    if (one_of(aux, kBeAux) && rest == 1) return words[2] + " " + original_aux + " in " + ans;
    if (one_of(aux, kDoAux) && rest >= 1) return join(words, 2, words.size()) + " in " + ans;
  }
  if (wh == "what" || wh == "who" || wh == "whom" || wh == "which") {
    if (one_of(aux, kDoAux) && rest >= 1) return join(words, 2, words.size()) + " " + ans;
    if (one_of(aux, kBeAux) && rest >= 1) {
      return join(words, 2, words.size()) + " " + original_aux + " " + ans;
    }
    if ((wh == "what" || wh == "who") && words.size() >= 2) {
      return ans + " " + join(words, 1, words.size());
    }
  }
  return std::string(q) + " " + ans;
}

std::string mark_answer_span(std::string_view hypothesis, std::string_view answer) {
  const std::string h(hypothesis);
  const std::string lh = lower(h);
  if (lh.find(kAnswerBegin) != std::string::npos && lh.find(kAnswerEnd) != std::string::npos) {
    return h;
  }
  const std::string a(trim(answer));
  if (a.empty()) throw EmptyText("answer is empty");
  const std::size_t pos = find_answer(lh, lower(a));
  if (pos == std::string::npos) {
    throw SpanNotFound("answer '" + a + "' does not occur in '" + h + "'");
  }
  return h.substr(0, pos) + std::string(kAnswerBegin) + " " + h.substr(pos, a.size()) + " " +
         std::string(kAnswerEnd) + h.substr(pos + a.size());
}

std::string marked_hypothesis(std::string_view question, std::string_view answer) {
  const std::string h = make_hypothesis(question, answer);
  try {
    return mark_answer_span(h, answer);
  } catch (const SpanNotFound&) {
    return h + " " + std::string(kAnswerBegin) + " " + std::string(trim(answer)) + " " +
           std::string(kAnswerEnd);
  }
}

// ---------------------------------------------------------------------------
// Labels and validation
// ---------------------------------------------------------------------------

std::string_view to_string(EntailmentLabel label) {
  switch (label) {
    case EntailmentLabel::entailment: return "entailment";
    case EntailmentLabel::contradiction: return "contradiction";
    case EntailmentLabel::neutral: return "neutral";
  }
  return "neutral";
}

EntailmentLabel parse_entailment_label(std::string_view text) {
  if (text == "entailment") return EntailmentLabel::entailment;
  if (text == "contradiction") return EntailmentLabel::contradiction;
  if (text == "neutral") return EntailmentLabel::neutral;
  throw ValidationError("unknown entailment label '" + std::string(text) + "'");
}

std::string_view to_string(TaskType task) {
  return task == TaskType::single_correct ? "single_correct" : "multi_label";
}

TaskType parse_task_type(std::string_view text) {
  if (text == "single_correct") return TaskType::single_correct;
  if (text == "multi_label") return TaskType::multi_label;
  throw ValidationError("unknown task_type '" + std::string(text) + "'");
}

bool QAExample::is_gold(int choice) const {
  return std::find(gold.begin(), gold.end(), choice) != gold.end();
}

void validate(const QAExample& ex) {
  if (trim(ex.question).empty()) throw ValidationError("question is empty");
  if (ex.choices.size() < 2) throw ValidationError("need at least two choices");
  if (ex.premise_texts.empty()) throw ValidationError("need at least one premise");
  if (ex.hypothesis_texts.size() != ex.choices.size()) {
    throw ValidationError("hypotheses count " + std::to_string(ex.hypothesis_texts.size()) +
                          " differs from choices count " + std::to_string(ex.choices.size()));
  }
  std::set<int> seen;
  for (int g : ex.gold) {
    if (g < 0 || static_cast<std::size_t>(g) >= ex.choices.size()) {
      throw ValidationError("gold index " + std::to_string(g) + " out of range");
    }
    if (!seen.insert(g).second) throw ValidationError("duplicate gold index");
  }
  if (ex.task_type == TaskType::single_correct && ex.gold.size() != 1) {
    throw ValidationError("single_correct task needs exactly one gold choice, got " +
                          std::to_string(ex.gold.size()));
  }
  if (ex.relevance_labels) {
    if (ex.relevance_labels->size() != ex.premise_texts.size()) {
      throw ValidationError("relevance_labels length differs from premise count");
    }
    for (int y : *ex.relevance_labels) {
      if (y != 0 && y != 1) throw ValidationError("relevance labels must be 0 or 1");
    }
  }
  if (!ex.hypotheses.empty() && ex.hypotheses.size() != ex.choices.size()) {
    throw ValidationError("tokenized hypotheses count differs from choices");
  }
  if (!ex.premises.empty() && ex.premises.size() != ex.premise_texts.size()) {
    throw ValidationError("tokenized premises count differs from premise texts");
  }
}

void index_example(QAExample& ex, const Vocabulary& vocab) {
  ex.hypotheses.clear();
  ex.premises.clear();
  for (const auto& h : ex.hypothesis_texts) ex.hypotheses.push_back(tokenize(h, vocab));
  for (const auto& p : ex.premise_texts) ex.premises.push_back(tokenize(p, vocab));
}

void index_example(NLIExample& ex, const Vocabulary& vocab) {
  ex.premise = tokenize(ex.premise_text, vocab);
  ex.hypothesis = tokenize(ex.hypothesis_text, vocab);
}

Vocabulary build_vocabulary(const std::vector<QAExample>& qa, const std::vector<NLIExample>& nli) {
  Vocabulary v;
  v.add(kSentenceSeparator);
  v.add(kAnswerBegin);
  v.add(kAnswerEnd);
  auto add_text = [&v](const std::string& text) {
    for (const auto& t : split_tokens(text)) v.add(t);
  };
  for (const auto& ex : nli) {
    add_text(ex.premise_text);
    add_text(ex.hypothesis_text);
  }
  for (const auto& ex : qa) {
    for (const auto& p : ex.premise_texts) add_text(p);
    for (const auto& h : ex.hypothesis_texts) add_text(h);
  }
  return v;
}

}  // namespace multee
