#pragma once

// JSON forms of the configuration blocks and reports, and the checkpoint
// container: named parameter tensors plus dimensions and vocabulary hash.

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "multee/training.hpp"

namespace multee {

using Json = nlohmann::json;

Json to_json(const StackDims& dims);
Json to_json(const AggregatorConfig& config);
Json to_json(const ModelConfig& config);
Json to_json(const TrainConfig& config);
Json to_json(const TrainReport& report);
Json to_json(const MetricReport& report);

/// Parsers report the offending field as a dotted path in the ConfigError.
/// The vocabulary size is never read from the document.
ModelConfig model_config_from_json(const Json& j, const std::string& path, int vocab_size);
TrainConfig train_config_from_json(const Json& j, const std::string& path);

struct CheckpointFile {
  std::string kind;  // "entailment_stack" or "qa_model"
  Json config;
  std::uint64_t vocab_hash = 0;
  int vocab_size = 0;
  std::vector<std::string> vocabulary;
  std::vector<std::pair<std::string, Matrix<double>>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError unless the file was written against `vocab`.
void check_vocabulary(const CheckpointFile& file, const Vocabulary& vocab);

/// The vocabulary stored in a checkpoint, verified against its hash.
Vocabulary checkpoint_vocabulary(const CheckpointFile& file);
Vocabulary checkpoint_vocabulary(const std::filesystem::path& path);

namespace detail {

template <typename Scalar>
std::vector<std::pair<std::string, Matrix<double>>> tensors_of(const ParameterList<Scalar>& params) {
  std::vector<std::pair<std::string, Matrix<double>>> out;
  for (const auto* p : params) out.emplace_back(p->name, p->value.template cast<double>());
  return out;
}

template <typename Scalar>
void load_tensors(const CheckpointFile& file, const ParameterList<Scalar>& params) {
  if (file.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(file.tensors.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    auto it = std::find_if(file.tensors.begin(), file.tensors.end(),
                           [&](const auto& t) { return t.first == p->name; });
    if (it == file.tensors.end()) throw CheckpointError("checkpoint lacks tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw CheckpointError("tensor " + p->name + " has shape " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", model expects " +
                            std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    p->value = it->second.template cast<Scalar>();
  }
}

}  // namespace detail

template <typename Scalar>
void save_stack(const std::filesystem::path& path, const EntailmentStack<Scalar>& stack, const Vocabulary& vocab) {
  CheckpointFile f;
  f.kind = "entailment_stack";
  f.config = Json{{"dims", to_json(stack.dims)}};
  f.vocab_hash = vocab.hash();
  f.vocab_size = static_cast<int>(vocab.size());
  f.vocabulary = vocab.tokens();
  f.tensors = detail::tensors_of(stack.parameters());
  write_checkpoint(path, f);
}

template <typename Scalar>
EntailmentStack<Scalar> load_stack(const std::filesystem::path& path, const Vocabulary& vocab) {
  const CheckpointFile f = read_checkpoint(path);
  if (f.kind != "entailment_stack") throw CheckpointError(path.string() + " is not an entailment-stack checkpoint");
  check_vocabulary(f, vocab);
  ModelConfig c = model_config_from_json(Json{{"dims", f.config.at("dims")}}, "checkpoint", f.vocab_size);
  Rng rng(0);
  auto stack = EntailmentStack<Scalar>::create("stack", c.dims, rng, true);
  detail::load_tensors(f, stack.parameters());
  return stack;
}

template <typename Scalar>
void save_model(const std::filesystem::path& path, const QaModel<Scalar>& model, const Vocabulary& vocab) {
  CheckpointFile f;
  f.kind = "qa_model";
  f.config = to_json(model.config());
  f.vocab_hash = vocab.hash();
  f.vocab_size = static_cast<int>(vocab.size());
  f.vocabulary = vocab.tokens();
  f.tensors = detail::tensors_of(model.parameters());
  write_checkpoint(path, f);
}

template <typename Scalar>
std::unique_ptr<QaModel<Scalar>> load_model(const std::filesystem::path& path, const Vocabulary& vocab) {
  const CheckpointFile f = read_checkpoint(path);
  if (f.kind != "qa_model") throw CheckpointError(path.string() + " is not a QA-model checkpoint");
  check_vocabulary(f, vocab);
  auto model = make_model<Scalar>(model_config_from_json(f.config, "checkpoint", f.vocab_size), vocab);
  detail::load_tensors(f, model->parameters());
  return model;
}

}  // namespace multee
