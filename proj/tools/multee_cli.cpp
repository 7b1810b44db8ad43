// multee: pretrain / finetune / evaluate / ablate / visualize / generate.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "multee/harness.hpp"

namespace {

using multee::Json;

int fail(const std::string& kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sentence entailment QA: training, evaluation and analysis"};
  app.require_subcommand(1);

  std::string config, checkpoint, dataset, out;
  int example_id = 0, choice = -1;

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train the entailment stack on the NLI data");
  pretrain->add_option("config", config, "Experiment file")->required()->check(CLI::ExistingFile);

  auto* finetune = app.add_subcommand("finetune", "Run (optional) pre-training, fine-tuning and evaluation");
  finetune->add_option("config", config, "Experiment file")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a stored QA checkpoint");
  evaluate->add_option("config", config, "Experiment file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", checkpoint, "QA-model checkpoint")->required()->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the relevance x aggregator grid");
  ablate->add_option("config", config, "Experiment file")->required()->check(CLI::ExistingFile);

  auto* visualize = app.add_subcommand("visualize", "Export relevance weights and joined attention of one example");
  visualize->add_option("checkpoint", checkpoint, "QA-model checkpoint")->required()->check(CLI::ExistingFile);
  visualize->add_option("dataset", dataset, "QA dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  visualize->add_option("--example-id", example_id, "Zero-based line index of the example")->default_val(0);
  visualize->add_option("--choice", choice, "Answer choice (default: first gold choice)");
  visualize->add_option("--out", out, "Output directory")->required();

  multee::SyntheticDataConfig synth;
  auto* generate = app.add_subcommand("generate", "Write a synthetic two-hop QA corpus and NLI pairs");
  generate->add_option("--out", out, "Output directory")->required();
  generate->add_option("--questions", synth.qa.n_questions, "Training questions")->default_val(synth.qa.n_questions);
  generate->add_option("--dev", synth.qa_dev, "Dev questions")->default_val(synth.qa_dev);
  generate->add_option("--entities", synth.qa.n_entities, "Entity symbols")->default_val(synth.qa.n_entities);
  generate->add_option("--relations", synth.qa.n_relations, "Relation symbols")->default_val(synth.qa.n_relations);
  generate->add_option("--distractors", synth.qa.n_distractors, "Distractor premises per question")
      ->default_val(synth.qa.n_distractors);
  generate->add_option("--choices", synth.qa.n_choices, "Answer choices")->default_val(synth.qa.n_choices);
  generate->add_option("--seed", synth.qa.seed, "Generator seed")->default_val(synth.qa.seed);
  generate->add_option("--nli", synth.nli.n_examples, "NLI training pairs")->default_val(synth.nli.n_examples);
  generate->add_option("--nli-dev", synth.nli_dev, "NLI dev pairs")->default_val(synth.nli_dev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what());
  }

  try {
    if (*pretrain) {
      multee::ExperimentConfig c = multee::load_experiment(config);
      const multee::LoadedData data = multee::load_data(c);
      const multee::TrainReport r = multee::run_pretrain(c, data);
      std::cout << Json{{"checkpoint", r.checkpoint_path}, {"best_epoch", r.best_epoch},
                        {"dev_accuracy", r.best_metric}}.dump(2)
                << '\n';
    } else if (*finetune) {
      std::cout << multee::run_experiment(config).json.dump(2) << '\n';
    } else if (*evaluate) {
      std::cout << multee::run_evaluate(config, checkpoint).json.dump(2) << '\n';
    } else if (*ablate) {
      std::cout << multee::format_ablation_table(multee::run_ablation(config));
    } else if (*visualize) {
      const multee::Vocabulary vocab = multee::checkpoint_vocabulary(checkpoint);
      auto model = multee::load_model<double>(checkpoint, vocab);
      auto records = multee::read_qa_records(dataset);
      if (example_id < 0 || static_cast<std::size_t>(example_id) >= records.size()) {
        throw multee::IndexError("example id " + std::to_string(example_id) + " out of range for " +
                                 std::to_string(records.size()) + " examples");
      }
      multee::QAExample ex = records[static_cast<std::size_t>(example_id)];
      multee::index_example(ex, vocab);
      const auto files = multee::export_attention(*model, ex, out, choice);
      std::cout << Json{{"alpha_csv", files.alpha_csv.string()},
                        {"heatmap", files.heatmap.string()},
                        {"joined_csv", files.joined_csv.string()}}.dump(2)
                << '\n';
    } else if (*generate) {
      multee::write_synthetic(synth, out);
      std::cout << Json{{"out", out}}.dump() << '\n';
    }
  } catch (const multee::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what());
  }
  return 0;
}
