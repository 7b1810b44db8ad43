#include "multee/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace multee {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::unique_ptr<QaModel<double>> initial_model(const ExperimentConfig& config, const ModelConfig& model,
                                               const TrainConfig& train, const LoadedData& data) {
  auto m = make_model<double>(model, data.vocab);
  if (train.init != "scratch") {
    if (!fs::exists(train.init)) throw ConfigError("train.init: checkpoint " + train.init + " not found");
    m->load_pretrained(load_stack<double>(train.init, data.vocab));
  }
  (void)config;
  return m;
}

/// CSV field quoting for free text.
std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void write_heatmap(const fs::path& path, const std::vector<double>& alpha) {
  constexpr int kCell = 32;
  const int width = kCell * static_cast<int>(alpha.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << width << ' ' << kCell << "\n255\n";
  for (int y = 0; y < kCell; ++y) {
    for (double a : alpha) {
      const double v = std::clamp(a, 0.0, 1.0);
      // White at 0, dark red at 1.
      const auto r = static_cast<unsigned char>(std::lround(255 - 115 * v));
      const auto gb = static_cast<unsigned char>(std::lround(255 * (1 - v)));
      for (int x = 0; x < kCell; ++x) out << r << gb << gb;
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

TrainReport run_pretrain(const ExperimentConfig& config, const LoadedData& data) {
  if (!config.pretrain) throw ConfigError("train.pretrain: missing block");
  if (data.nli_train.empty()) throw ConfigError("data.nli_train: pretraining needs NLI data");
  Rng rng(config.model.init_seed);
  auto stack = EntailmentStack<double>::create("stack", config.model.dims, rng, true);
  TrainReport report = pretrain_nli(stack, data.nli_train, data.nli_dev, *config.pretrain);
  report.checkpoint_path = config.train.init;
  save_stack(config.train.init, stack, data.vocab);
  write_text(fs::path(config.train.init).replace_extension(".report.json"), to_json(report).dump(2) + "\n");
  return report;
}

ResultRecord run_experiment(const fs::path& config_path) {
  ExperimentConfig config = load_experiment(config_path);
  const LoadedData data = load_data(config);
  Json result = {{"name", config.name}, {"config_hash", config.config_hash()}, {"seed", config.train.seed}};
  if (config.pretrain) {
    const TrainReport pre = run_pretrain(config, data);
    result["pretrain"] = {{"best_epoch", pre.best_epoch},
                          {"dev_accuracy", pre.best_metric},
                          {"checkpoint", pre.checkpoint_path}};
  }
  auto model = initial_model(config, config.model, config.train, data);
  TrainConfig train = config.train;
  train.threads = std::max(train.threads, 1);
  TrainReport report = finetune_qa(*model, data.qa_train, data.qa_dev, train);
  report.checkpoint_path = config.checkpoint_path().string();
  save_model(config.checkpoint_path(), *model, data.vocab);
  write_text(config.eval.output_dir / "train_report.json", to_json(report).dump(2) + "\n");

  const QaEvaluation eval = evaluate_qa(*model, data.eval_split(config.eval.split), config.eval.threads);
  result["split"] = config.eval.split;
  result["metrics"] = to_json(eval.metrics);
  result["checkpoint"] = report.checkpoint_path;
  result["best_epoch"] = report.best_epoch;
  result["timestamp"] = timestamp();
  write_text(config.results_path(), result.dump(2) + "\n");
  return {result, config.results_path()};
}

ResultRecord run_evaluate(const fs::path& config_path, const fs::path& checkpoint) {
  ExperimentConfig config = load_experiment(config_path);
  const LoadedData data = load_data(config);
  auto model = load_model<double>(checkpoint, data.vocab);
  const QaEvaluation eval = evaluate_qa(*model, data.eval_split(config.eval.split), config.eval.threads);
  Json result = {{"name", config.name},
                 {"config_hash", config.config_hash()},
                 {"seed", config.train.seed},
                 {"split", config.eval.split},
                 {"metrics", to_json(eval.metrics)},
                 {"checkpoint", checkpoint.string()},
                 {"timestamp", timestamp()}};
  const fs::path out = config.eval.output_dir / "evaluation.json";
  write_text(out, result.dump(2) + "\n");
  return {result, out};
}

std::vector<AblationCell> run_ablation(const fs::path& config_path) {
  ExperimentConfig config = load_experiment(config_path);
  const LoadedData data = load_data(config);
  struct Relevance {
    const char* name;
    RelevanceMode mode;
    RelevanceLoss loss;
  };
  const Relevance rows[] = {{"no_alpha", RelevanceMode::constant_ones, RelevanceLoss::none},
                            {"alpha", RelevanceMode::learned, RelevanceLoss::none},
                            {"alpha_supervised", RelevanceMode::learned, RelevanceLoss::bce}};
  const std::pair<const char*, std::vector<JoinLayer>> cols[] = {
      {"CA", {JoinLayer::cross_attention}},
      {"FL", {JoinLayer::final_layer}},
      {"CA_FL", {JoinLayer::cross_attention, JoinLayer::final_layer}}};
  for (const auto* set : {&data.qa_train, &data.qa_dev}) {
    for (const auto& ex : *set) {
      if (!ex.relevance_labels) throw ConfigError("data: the supervised ablation cell needs relevance_labels");
    }
  }
  if (config.pretrain) run_pretrain(config, data);

  std::vector<AblationCell> cells;
  Json table = Json::array();
  for (const auto& row : rows) {
    for (const auto& [col_name, layers] : cols) {
      ModelConfig model = config.model;
      model.kind = ModelKind::multee;
      model.aggregator.join_layers = layers;
      model.aggregator.use_relevance = row.mode;
      TrainConfig train = config.train;
      train.relevance_loss = row.loss;
      auto m = initial_model(config, model, train, data);
      finetune_qa(*m, data.qa_train, data.qa_dev, train);
      const QaEvaluation eval = evaluate_qa(*m, data.eval_split(config.eval.split), config.eval.threads);
      cells.push_back({row.name, col_name, eval.metrics, eval.selection_metric()});
      table.push_back({{"relevance", row.name},
                       {"aggregator", col_name},
                       {"metric", eval.selection_metric()},
                       {"metrics", to_json(eval.metrics)}});
      std::clog << "ablation " << row.name << " / " << col_name << ": " << eval.selection_metric() << '\n';
    }
  }
  const Json out = {{"name", config.name}, {"config_hash", config.config_hash()}, {"seed", config.train.seed},
                    {"split", config.eval.split}, {"cells", table}};
  write_text(config.eval.output_dir / "ablation.json", out.dump(2) + "\n");
  write_text(config.eval.output_dir / "ablation.txt", format_ablation_table(cells));
  return cells;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells) {
  const char* rows[] = {"no_alpha", "alpha", "alpha_supervised"};
  const char* cols[] = {"CA", "FL", "CA_FL"};
  std::ostringstream s;
  s << std::left << std::setw(18) << "relevance";
  for (const char* c : cols) s << std::right << std::setw(8) << c;
  s << '\n';
  for (const char* r : rows) {
    s << std::left << std::setw(18) << r;
    for (const char* c : cols) {
      auto it = std::find_if(cells.begin(), cells.end(),
                             [&](const AblationCell& x) { return x.relevance == r && x.aggregator == c; });
      s << std::right << std::setw(8);
      if (it == cells.end()) {
        s << "-";
      } else {
        s << std::fixed << std::setprecision(1) << 100 * it->selection_metric;
      }
    }
    s << '\n';
  }
  return s.str();
}

AttentionExport export_attention(const QaModel<double>& model, const QAExample& example, const fs::path& out_dir,
                                 int choice) {
  const auto* multee = dynamic_cast<const MulteeModel<double>*>(&model);
  if (multee == nullptr) throw ConfigError("attention export needs a Multee model");
  if (choice < 0) choice = example.gold.at(0);
  if (static_cast<std::size_t>(choice) >= example.num_choices()) {
    throw IndexError("choice " + std::to_string(choice) + " out of range");
  }
  Tape<double> t(false);
  const RelevanceWeights<double> alpha = multee->relevance(t, example, choice);
  const JoinedCrossAttention<double> joined = multee->joined_attention(t, example, choice);

  fs::create_directories(out_dir);
  AttentionExport out{out_dir / "alpha.csv", out_dir / "alpha.ppm", out_dir / "joined_mhp.csv"};
  std::ostringstream a;
  a << "premise_index,premise_text,alpha,relevance_label\n";
  std::vector<double> values;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    values.push_back(alpha[i]);
    a << i << ',' << csv_quote(example.premise_texts[static_cast<std::size_t>(i)]) << ',' << fmt(alpha[i]) << ',';
    if (example.relevance_labels) a << (*example.relevance_labels)[static_cast<std::size_t>(i)];
    a << '\n';
  }
  write_text(out.alpha_csv, a.str());
  write_heatmap(out.heatmap, values);

  const TokenSeq& h = example.hypotheses[static_cast<std::size_t>(choice)];
  std::ostringstream m;
  m << "hypothesis_token";
  for (std::size_t i = 0; i < example.premises.size(); ++i) {
    for (const auto& tok : example.premises[i].tokens) m << ',' << csv_quote("p" + std::to_string(i) + ":" + tok);
  }
  m << '\n';
  const Matrix<double>& mhp = joined.m_hp.value();
  for (Eigen::Index r = 0; r < mhp.rows(); ++r) {
    m << csv_quote(h.tokens[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < mhp.cols(); ++c) m << ',' << fmt(mhp(r, c));
    m << '\n';
  }
  write_text(out.joined_csv, m.str());
  return out;
}

void write_synthetic(const SyntheticDataConfig& config, const fs::path& out_dir) {
  const LoadedData data = synthetic_data(config);
  fs::create_directories(out_dir);
  write_qa_dataset(out_dir / "qa_train.jsonl", data.qa_train);
  write_qa_dataset(out_dir / "qa_dev.jsonl", data.qa_dev);
  if (!data.nli_train.empty()) {
    write_nli_dataset(out_dir / "nli_train.jsonl", data.nli_train);
    write_nli_dataset(out_dir / "nli_dev.jsonl", data.nli_dev);
  }
}

}  // namespace multee
