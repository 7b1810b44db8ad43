#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace testing;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "multee_corpus_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

/// Content tokens of a hypothesis: everything except markers and
/// function words.
std::set<std::string> content_tokens(const TokenSeq& s) {
  std::set<std::string> out;
  for (const auto& t : s.tokens) {
    if (t != kAnswerBegin && t != kAnswerEnd && t != "." && t != "what" && t != "does" && t != "?") out.insert(t);
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and punctuation") {
  CHECK(split_tokens("Facebook was launched.") == std::vector<std::string>{"facebook", "was", "launched", "."});
  CHECK(split_tokens("@@@answer Cambridge answer@@@") ==
        std::vector<std::string>{"@@@answer", "cambridge", "answer@@@"});
  CHECK_THROWS_AS(split_tokens(""), EmptyText);
  CHECK_THROWS_AS(split_tokens("   \t"), EmptyText);
}

TEST_CASE("tokenize maps unknown words to the OOV id") {
  Vocabulary v;
  const int known = v.add("facebook");
  const TokenSeq s = tokenize("Facebook rocks", v);
  CHECK(s.tokens.size() == s.ids.size());
  CHECK(s.ids == std::vector<int>{known, kOovId});
  CHECK(kOovId != kPaddingId);
  CHECK(tokenize("Facebook rocks", v) == s);
}

TEST_CASE("vocabulary file round trip and reserved lines") {
  Vocabulary v;
  v.add("alpha");
  v.add("beta");
  const fs::path p = fs::temp_directory_path() / "multee_corpus_tests" / "vocab.txt";
  fs::create_directories(p.parent_path());
  v.save(p);
  const Vocabulary w = Vocabulary::load(p);
  CHECK(w.tokens() == v.tokens());
  CHECK(w.hash() == v.hash());
  CHECK(w.id("beta") == 3);
  CHECK_THROWS_AS(Vocabulary::load(temp_file("short_vocab.txt", "<pad>\n")), ValidationError);
}

TEST_CASE("make_hypothesis rules and fallback") {
  CHECK(make_hypothesis("Where was Facebook launched?", "Silicon Valley") ==
        "Facebook was launched in Silicon Valley");
  CHECK(make_hypothesis("Where was Facebook launched?", "Cambridge") == "Facebook was launched in Cambridge");
  CHECK(make_hypothesis("Is X true", "yes") == "Is X true yes");
  CHECK(make_hypothesis("What does e1 r1 r2?", "e5") == "e1 r1 r2 e5");
  CHECK(make_hypothesis("When did the war end?", "1945") == "the war end in 1945");
  CHECK(make_hypothesis("Who wrote Hamlet?", "Shakespeare") == "Shakespeare wrote Hamlet");
  CHECK_THROWS_AS(make_hypothesis("", "x"), EmptyText);
}

TEST_CASE("mark_answer_span wraps the first occurrence only") {
  CHECK(mark_answer_span("Facebook was launched in Cambridge", "Cambridge") ==
        "Facebook was launched in @@@answer Cambridge answer@@@");
  CHECK_THROWS_AS(mark_answer_span("A is B", "C"), SpanNotFound);
  const std::string x = mark_answer_span("x x", "x");
  CHECK(x == "@@@answer x answer@@@ x");
  CHECK(count_of(x, "@@@answer") == 1);
  CHECK(count_of(x, "answer@@@") == 1);
}

TEST_CASE("re-marking is idempotent") {
  const std::string once = mark_answer_span(make_hypothesis("Where was Facebook launched?", "Cambridge"), "Cambridge");
  std::string twice;
  try {
    twice = mark_answer_span(once, "Cambridge");
  } catch (const SpanNotFound&) {
    twice = once;
  }
  CHECK(count_of(twice, "@@@answer") == 1);
  CHECK(count_of(twice, "answer@@@") == 1);
  CHECK(marked_hypothesis("Is X true", "maybe") == "Is X true @@@answer maybe answer@@@");
  CHECK(marked_hypothesis("Where is it?", "zzz").find("@@@answer zzz answer@@@") != std::string::npos);
}

TEST_CASE("load_qa_dataset reads, validates and synthesizes hypotheses") {
  const std::string line1 =
      R"({"question": "Where was Facebook launched?", "choices": ["Cambridge", "Paris"], )"
      R"("premises": ["Facebook was launched in Cambridge.", "Paris is in France."], "gold": [0], )"
      R"("relevance_labels": [1, 0], "contiguous": false, "task_type": "single_correct"})";
  const std::string line2 =
      R"({"question": "Who wrote Hamlet?", "choices": ["Shakespeare", "Marlowe", "Kyd"], )"
      R"("premises": ["Shakespeare wrote Hamlet."], "gold": [0, 2], "task_type": "multi_label"})";
  const fs::path p = temp_file("two.jsonl", line1 + "\n" + line2 + "\n");
  const auto records = read_qa_records(p);
  REQUIRE(records.size() == 2);
  CHECK(records[0].hypothesis_texts.size() == records[0].choices.size());
  CHECK(records[1].hypothesis_texts.size() == 3);
  CHECK(records[1].task_type == TaskType::multi_label);
  CHECK_FALSE(records[1].relevance_labels.has_value());

  // Synthesized hypotheses equal those of an explicit-hypotheses file.
  Json explicit_line = Json::parse(line1);
  explicit_line["hypotheses"] = records[0].hypothesis_texts;
  const auto explicit_records = read_qa_records(temp_file("explicit.jsonl", explicit_line.dump() + "\n"));
  CHECK(explicit_records[0].hypothesis_texts == records[0].hypothesis_texts);

  Vocabulary v = build_vocabulary(records, {});
  const auto loaded = load_qa_dataset(p, v);
  CHECK(loaded[0].premises.size() == 2);
  CHECK(loaded[0].hypotheses[0].tokens.back() == std::string(kAnswerEnd));
}

TEST_CASE("dataset errors carry line numbers") {
  const std::string good =
      R"({"question": "Where was Facebook launched?", "choices": ["Cambridge", "Paris"], )"
      R"("premises": ["Facebook was launched in Cambridge."], "gold": [0]})";
  try {
    read_qa_records(temp_file("bad_json.jsonl", good + "\n{not json\n"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  const std::string two_gold =
      R"({"question": "Where?", "choices": ["a", "b"], "premises": ["a b"], "gold": [0, 1], )"
      R"("task_type": "single_correct"})";
  CHECK_THROWS_AS(read_qa_records(temp_file("two_gold.jsonl", two_gold + "\n")), ValidationError);
  const std::string bad_labels =
      R"({"question": "Where?", "choices": ["a", "b"], "premises": ["a b"], "gold": [0], "relevance_labels": [1, 0]})";
  CHECK_THROWS_AS(read_qa_records(temp_file("bad_labels.jsonl", bad_labels + "\n")), ValidationError);
  CHECK_THROWS_AS(read_qa_records(temp_file("missing.jsonl", R"({"question": "x"})" "\n")), ParseError);
}

TEST_CASE("QA dataset round trip") {
  SyntheticQAConfig c;
  c.n_questions = 12;
  const auto qa = gen_synthetic_qa(c);
  const fs::path p = fs::temp_directory_path() / "multee_corpus_tests" / "roundtrip.jsonl";
  write_qa_dataset(p, qa.examples);
  const auto back = read_qa_records(p);
  REQUIRE(back.size() == qa.examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].question == qa.examples[i].question);
    CHECK(back[i].choices == qa.examples[i].choices);
    CHECK(back[i].premise_texts == qa.examples[i].premise_texts);
    CHECK(back[i].hypothesis_texts == qa.examples[i].hypothesis_texts);
    CHECK(back[i].gold == qa.examples[i].gold);
    CHECK(back[i].relevance_labels == qa.examples[i].relevance_labels);
  }
  const fs::path p2 = fs::temp_directory_path() / "multee_corpus_tests" / "roundtrip2.jsonl";
  write_qa_dataset(p2, back);
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("NLI dataset round trip") {
  SyntheticQAConfig c;
  c.n_questions = 1;
  const auto world = gen_synthetic_qa(c).world;
  SyntheticNLIConfig n;
  n.n_examples = 9;
  const auto pairs = gen_synthetic_nli(n, world);
  const fs::path p = fs::temp_directory_path() / "multee_corpus_tests" / "nli.jsonl";
  write_nli_dataset(p, pairs);
  const auto back = read_nli_records(p);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].premise_text == pairs[i].premise_text);
    CHECK(back[i].hypothesis_text == pairs[i].hypothesis_text);
    CHECK(back[i].label == pairs[i].label);
  }
}

TEST_CASE("synthetic QA is deterministic given the seed") {
  SyntheticQAConfig c;
  c.n_questions = 30;
  const fs::path a = fs::temp_directory_path() / "multee_corpus_tests" / "seed_a.jsonl";
  const fs::path b = fs::temp_directory_path() / "multee_corpus_tests" / "seed_b.jsonl";
  write_qa_dataset(a, gen_synthetic_qa(c).examples);
  write_qa_dataset(b, gen_synthetic_qa(c).examples);
  CHECK(slurp(a) == slurp(b));
  c.seed = 8;
  const fs::path d = fs::temp_directory_path() / "multee_corpus_tests" / "seed_c.jsonl";
  write_qa_dataset(d, gen_synthetic_qa(c).examples);
  CHECK(slurp(a) != slurp(d));
}

TEST_CASE("synthetic QA two-hop structure") {
  SyntheticQAConfig c;
  c.n_questions = 200;
  const auto qa = gen_synthetic_qa(c);
  for (const auto& ex : qa.examples) {
    REQUIRE(ex.relevance_labels.has_value());
    const auto& y = *ex.relevance_labels;
    CHECK(std::count(y.begin(), y.end(), 1) == 2);
    CHECK(ex.premises.size() == static_cast<std::size_t>(2 + c.n_distractors));
    CHECK(ex.choices.size() == static_cast<std::size_t>(c.n_choices));

    const auto gold_content = content_tokens(ex.hypotheses[static_cast<std::size_t>(ex.gold[0])]);
    std::set<std::string> chain;
    for (std::size_t i = 0; i < ex.premises.size(); ++i) {
      const auto premise = content_tokens(ex.premises[i]);
      // No single premise covers the correct hypothesis.
      CHECK_FALSE(std::includes(premise.begin(), premise.end(), gold_content.begin(), gold_content.end()));
      if (y[i] == 1) chain.insert(premise.begin(), premise.end());
    }
    CHECK(std::includes(chain.begin(), chain.end(), gold_content.begin(), gold_content.end()));

    // Chain premises are (a r1 b) and (b r2 c): exactly one pair composes.
    std::vector<std::vector<std::string>> facts;
    for (const auto& p : ex.premises) facts.push_back(p.tokens);
    const auto& h = ex.hypotheses[static_cast<std::size_t>(ex.gold[0])].tokens;
    const std::string a = h[0], r1 = h[1], r2 = h[2], answer = h[4];
    int composing = 0;
    for (const auto& f1 : facts) {
      for (const auto& f2 : facts) {
        if (f1[0] == a && f1[1] == r1 && f2[0] == f1[2] && f2[1] == r2) {
          ++composing;
          CHECK(f2[2] == answer);
        }
      }
    }
    CHECK(composing == 1);

    // Every wrong choice is mentioned by a distractor with the second relation.
    for (std::size_t k = 0; k < ex.choices.size(); ++k) {
      if (static_cast<int>(k) == ex.gold[0]) continue;
      const std::string wrong = split_tokens(ex.choices[k])[0];
      const bool lured = std::any_of(facts.begin(), facts.end(), [&](const auto& f) {
        return f[2] == wrong && f[1] == r2;
      });
      CHECK(lured);
    }
  }
}

TEST_CASE("synthetic QA rejects configurations that cannot avoid collisions") {
  SyntheticQAConfig c;
  c.n_entities = 3;
  CHECK_THROWS_AS(gen_synthetic_qa(c), GenerationError);
  c = {};
  c.n_entities = 8;
  c.n_distractors = 6;
  CHECK_THROWS_AS(gen_synthetic_qa(c), GenerationError);
  c = {};
  c.n_distractors = 0;
  CHECK_THROWS_AS(gen_synthetic_qa(c), GenerationError);
}

TEST_CASE("synthetic NLI is balanced, deterministic and entailment shares the subject") {
  SyntheticQAConfig c;
  c.n_questions = 1;
  const auto world = gen_synthetic_qa(c).world;
  SyntheticNLIConfig n;
  n.n_examples = 300;
  const auto pairs = gen_synthetic_nli(n, world);
  std::map<EntailmentLabel, int> histogram;
  for (const auto& p : pairs) {
    ++histogram[p.label];
    if (p.label == EntailmentLabel::entailment) CHECK(p.premise.tokens[0] == p.hypothesis.tokens[0]);
  }
  for (const auto& [label, count] : histogram) {
    CHECK(count >= 99);
    CHECK(count <= 101);
  }
  const auto again = gen_synthetic_nli(n, world);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].premise_text == again[i].premise_text);
    CHECK(pairs[i].hypothesis_text == again[i].hypothesis_text);
    CHECK(pairs[i].label == again[i].label);
  }
}
