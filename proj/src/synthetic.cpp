#include <algorithm>

#include "multee/corpus.hpp"
#include "multee/rng.hpp"

namespace multee {
namespace {

SyntheticWorld make_world(int n_entities, int n_relations, std::uint64_t seed) {
  SyntheticWorld w;
  w.seed = seed;
  for (int i = 0; i < n_entities; ++i) w.entities.push_back("e" + std::to_string(i));
  for (int i = 0; i < n_relations; ++i) w.relations.push_back("r" + std::to_string(i));
  return w;
}

std::string question_text(const SyntheticWorld& w, int subject, int r1, int r2) {
  return "What does " + w.entities[static_cast<std::size_t>(subject)] + " " +
         w.relations[static_cast<std::size_t>(r1)] + " " +
         w.relations[static_cast<std::size_t>(r2)] + "?";
}

}  // namespace

Vocabulary SyntheticWorld::vocabulary() const {
  Vocabulary v;
  v.add(kSentenceSeparator);
  v.add(kAnswerBegin);
  v.add(kAnswerEnd);
  for (const char* t : {"what", "does", "?", "."}) v.add(t);
  for (const auto& e : entities) v.add(e);
  for (const auto& r : relations) v.add(r);
  return v;
}

std::string SyntheticWorld::sentence(const Fact& f) const {
  return entities[static_cast<std::size_t>(f.subject)] + " " +
         relations[static_cast<std::size_t>(f.relation)] + " " +
         entities[static_cast<std::size_t>(f.object)] + " .";
}

SyntheticQA gen_synthetic_qa(const SyntheticQAConfig& cfg) {
  if (cfg.n_entities < 4) throw GenerationError("n_entities must be at least 4");
  if (cfg.n_relations < 2) throw GenerationError("n_relations must be at least 2");
  if (cfg.n_distractors < 1) throw GenerationError("n_distractors must be at least 1");
  if (cfg.n_choices < 2) throw GenerationError("n_choices must be at least 2");
  if (cfg.n_questions < 0) throw GenerationError("n_questions must be non-negative");

  const int wrong = cfg.n_choices - 1;
  const int lures = std::min(cfg.n_distractors, wrong);
  const int companions = std::min(cfg.n_distractors - lures, wrong);
  const int noise = cfg.n_distractors - lures - companions;
  // a, b, c; per wrong choice its answer; per lure its subject; per
  // companion its subject; two fresh entities per noise fact.
  const int needed = 3 + wrong + lures + companions + 2 * noise;
  if (cfg.n_entities < needed) {
    throw GenerationError("n_entities=" + std::to_string(cfg.n_entities) + " cannot keep " +
                          std::to_string(cfg.n_choices) + " choices and " +
                          std::to_string(cfg.n_distractors) +
                          " distractors collision-free; need " + std::to_string(needed));
  }

  SyntheticQA out;
  out.world = make_world(cfg.n_entities, cfg.n_relations, cfg.seed);
  const Vocabulary vocab = out.world.vocabulary();
  SyntheticWorld& w = out.world;
  Rng rng(cfg.seed);

  for (int q = 0; q < cfg.n_questions; ++q) {
    const auto rel = rng.sample_distinct(cfg.n_relations, 2);
    const int r1 = rel[0];
    const int r2 = rel[1];
    const auto ent = rng.sample_distinct(cfg.n_entities, needed);
    std::size_t next = 0;
    const int a = ent[next++];
    const int b = ent[next++];
    const int c = ent[next++];
    std::vector<int> wrong_answers;
    for (int k = 0; k < wrong; ++k) wrong_answers.push_back(ent[next++]);

    struct Premise {
      Fact fact;
      int relevant;
    };
    std::vector<Premise> premises = {{{a, r1, b}, 1}, {{b, r2, c}, 1}};
    std::vector<int> lure_subjects;
    for (int k = 0; k < lures; ++k) {
      lure_subjects.push_back(ent[next++]);
      premises.push_back({{lure_subjects.back(), r2, wrong_answers[static_cast<std::size_t>(k)]}, 0});
    }
    for (int k = 0; k < companions; ++k) {
      premises.push_back({{ent[next++], r1, lure_subjects[static_cast<std::size_t>(k)]}, 0});
    }
    std::vector<int> other_relations;
    for (int r = 0; r < cfg.n_relations; ++r) {
      if (r != r1 && r != r2) other_relations.push_back(r);
    }
    for (int k = 0; k < noise; ++k) {
      const int x = ent[next++];
      const int y = ent[next++];
      const int r = other_relations.empty()
                        ? (rng.below(2) == 0 ? r1 : r2)
                        : other_relations[rng.below(other_relations.size())];
      premises.push_back({{x, r, y}, 0});
    }
    rng.shuffle(premises);

    std::vector<int> answers = wrong_answers;
    answers.push_back(c);
    rng.shuffle(answers);

    QAExample ex;
    ex.question = question_text(w, a, r1, r2);
    for (int ans : answers) {
      ex.choices.push_back(w.entities[static_cast<std::size_t>(ans)]);
      ex.hypothesis_texts.push_back(marked_hypothesis(ex.question, ex.choices.back()));
      if (ans == c) ex.gold.push_back(static_cast<int>(ex.choices.size()) - 1);
    }
    std::vector<int> labels;
    for (const auto& p : premises) {
      ex.premise_texts.push_back(w.sentence(p.fact));
      labels.push_back(p.relevant);
      w.facts.push_back(p.fact);
    }
    ex.relevance_labels = std::move(labels);
    ex.contiguous = false;
    ex.task_type = TaskType::single_correct;
    index_example(ex, vocab);
    validate(ex);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

std::vector<NLIExample> gen_synthetic_nli(const SyntheticNLIConfig& cfg,
                                          const SyntheticWorld& world) {
  const int n_ent = static_cast<int>(world.entities.size());
  const int n_rel = static_cast<int>(world.relations.size());
  if (n_ent < 3 || n_rel < 2) {
    throw GenerationError("world needs at least 3 entities and 2 relations");
  }
  if (cfg.n_examples < 0) throw GenerationError("n_examples must be non-negative");

  const Vocabulary vocab = world.vocabulary();
  Rng rng(cfg.seed);
  std::vector<NLIExample> out;
  auto statement = [&](int s, int r, int o) {
    const std::string q = "What does " + world.entities[static_cast<std::size_t>(s)] + " " +
                          world.relations[static_cast<std::size_t>(r)] + "?";
    return marked_hypothesis(q, world.entities[static_cast<std::size_t>(o)]);
  };
  for (int i = 0; i < cfg.n_examples; ++i) {
    const auto label = static_cast<EntailmentLabel>(i % kNumEntailmentLabels);
    const auto ent = rng.sample_distinct(n_ent, 3);
    const auto rel = rng.sample_distinct(n_rel, 2);
    const Fact fact{ent[0], rel[0], ent[1]};
    NLIExample ex;
    ex.label = label;
    ex.premise_text = world.sentence(fact);
    switch (label) {
      case EntailmentLabel::entailment:
        ex.hypothesis_text = statement(fact.subject, fact.relation, fact.object);
        break;
      case EntailmentLabel::contradiction:
        ex.hypothesis_text = statement(fact.subject, fact.relation, ent[2]);
        break;
      case EntailmentLabel::neutral:
        ex.hypothesis_text = statement(ent[2], rel[1], static_cast<int>(rng.below(
                                                           static_cast<std::size_t>(n_ent))));
        break;
    }
    index_example(ex, vocab);
    out.push_back(std::move(ex));
  }
  rng.shuffle(out);
  return out;
}

}  // namespace multee
