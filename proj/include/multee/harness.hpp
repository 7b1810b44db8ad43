#pragma once

// Experiment files, the run/evaluate/ablate pipeline and attention export.
// The harness trains and evaluates in double precision.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "multee/checkpoint.hpp"

namespace multee {

namespace fs = std::filesystem;

struct SyntheticDataConfig {
  SyntheticQAConfig qa;
  SyntheticNLIConfig nli;
  int qa_dev = 100;
  int nli_dev = 100;
};

/// Either dataset files or a synthetic recipe. Relative paths are resolved
/// against the experiment file's directory.
struct DataBlock {
  fs::path qa_train, qa_dev, qa_test;
  fs::path nli_train, nli_dev;
  std::optional<SyntheticDataConfig> synthetic;
};

struct EvalBlock {
  fs::path output_dir = "results";
  std::string split = "dev";  // "dev" or "test"
  int threads = 1;
};

struct ExperimentConfig {
  fs::path source;
  std::string name = "experiment";
  Json raw;
  DataBlock data;
  ModelConfig model;  // dims.vocab_size is filled in by load_data
  TrainConfig train;
  std::optional<TrainConfig> pretrain;
  EvalBlock eval;

  /// FNV-1a of the canonical JSON text of the experiment file.
  std::string config_hash() const;
  fs::path checkpoint_path() const { return eval.output_dir / "model.ckpt.json"; }
  fs::path results_path() const { return eval.output_dir / "results.json"; }
};

ExperimentConfig parse_experiment(const Json& j, const fs::path& source);
ExperimentConfig load_experiment(const fs::path& path);

struct LoadedData {
  Vocabulary vocab;
  std::vector<QAExample> qa_train, qa_dev, qa_test;
  std::vector<NLIExample> nli_train, nli_dev;

  const std::vector<QAExample>& eval_split(const std::string& split) const;
};

/// Loads or generates the data and sets config.model.dims.vocab_size.
LoadedData load_data(ExperimentConfig& config);

/// Train/dev split of one synthetic recipe, indexed against its world
/// vocabulary.
LoadedData synthetic_data(const SyntheticDataConfig& config);

/// Pre-trains one entailment stack on the NLI data and saves it at
/// train.init.
TrainReport run_pretrain(const ExperimentConfig& config, const LoadedData& data);

struct ResultRecord {
  Json json;
  fs::path path;
};

/// Optional pre-training, fine-tuning and evaluation; writes the model
/// checkpoint, the training report and results.json to eval.output_dir.
ResultRecord run_experiment(const fs::path& config_path);

/// Evaluates a stored QA checkpoint on the configured split.
ResultRecord run_evaluate(const fs::path& config_path, const fs::path& checkpoint);

struct AblationCell {
  std::string relevance;   // no_alpha, alpha, alpha_supervised
  std::string aggregator;  // CA, FL, CA_FL
  MetricReport metrics;
  double selection_metric = 0;
};

/// Trains and evaluates the 3 x 3 relevance-by-aggregator grid with shared
/// seeds; writes ablation.json and ablation.txt to eval.output_dir.
std::vector<AblationCell> run_ablation(const fs::path& config_path);
std::string format_ablation_table(const std::vector<AblationCell>& cells);

struct AttentionExport {
  fs::path alpha_csv, heatmap, joined_csv;
};

/// Writes the premise weights of one choice (default: first gold choice) as
/// CSV and a PPM heatmap, and the joined hypothesis-to-passage attention
/// matrix as CSV.
AttentionExport export_attention(const QaModel<double>& model, const QAExample& example, const fs::path& out_dir,
                                 int choice = -1);

/// Writes a QA split as one JSON-lines file per split plus the NLI data.
void write_synthetic(const SyntheticDataConfig& config, const fs::path& out_dir);

}  // namespace multee
