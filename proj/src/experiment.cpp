#include <cstdio>
#include <fstream>
#include <initializer_list>

#include "multee/harness.hpp"

namespace multee {

namespace {

void reject_unknown(const Json& j, const std::string& path, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(path + "." + key + ": unknown field");
  }
}

template <typename T>
T field(const Json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  const bool ok = [&] {
    if constexpr (std::is_integral_v<T>) return v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>) return v.is_number();
    else return v.is_string();
  }();
  if (!ok) throw ConfigError(path + "." + key + ": wrong type");
  return v.get<T>();
}

fs::path resolve(const fs::path& base, const Json& j, const std::string& path, const char* key) {
  const auto text = field<std::string>(j, path, key, "");
  if (text.empty()) return {};
  fs::path p(text);
  return p.is_absolute() ? p : base / p;
}

SyntheticDataConfig parse_synthetic(const Json& j, const std::string& path) {
  reject_unknown(j, path, {"qa", "nli", "qa_dev", "nli_dev"});
  SyntheticDataConfig c;
  c.qa_dev = field(j, path, "qa_dev", c.qa_dev);
  c.nli_dev = field(j, path, "nli_dev", c.nli_dev);
  if (j.contains("qa")) {
    const std::string p = path + ".qa";
    const Json& q = j.at("qa");
    reject_unknown(q, p, {"n_entities", "n_relations", "n_questions", "n_distractors", "n_choices", "seed"});
    c.qa.n_entities = field(q, p, "n_entities", c.qa.n_entities);
    c.qa.n_relations = field(q, p, "n_relations", c.qa.n_relations);
    c.qa.n_questions = field(q, p, "n_questions", c.qa.n_questions);
    c.qa.n_distractors = field(q, p, "n_distractors", c.qa.n_distractors);
    c.qa.n_choices = field(q, p, "n_choices", c.qa.n_choices);
    c.qa.seed = field(q, p, "seed", c.qa.seed);
  }
  if (j.contains("nli")) {
    const std::string p = path + ".nli";
    const Json& n = j.at("nli");
    reject_unknown(n, p, {"n_examples", "seed"});
    c.nli.n_examples = field(n, p, "n_examples", c.nli.n_examples);
    c.nli.seed = field(n, p, "seed", c.nli.seed);
  }
  if (c.qa.n_questions < 1 || c.qa_dev < 0 || c.nli.n_examples < 0 || c.nli_dev < 0) {
    throw ConfigError(path + ": example counts must be nonnegative and qa.n_questions positive");
  }
  return c;
}

}  // namespace

std::string ExperimentConfig::config_hash() const {
  const std::string text = raw.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_experiment(const Json& j, const fs::path& source) {
  reject_unknown(j, "experiment", {"name", "data", "model", "train", "eval"});
  ExperimentConfig c;
  c.source = source;
  c.raw = j;
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");
  c.name = field<std::string>(j, "experiment", "name", c.name);

  if (!j.contains("data")) throw ConfigError("data: missing block");
  const Json& d = j.at("data");
  reject_unknown(d, "data", {"qa_train", "qa_dev", "qa_test", "nli_train", "nli_dev", "synthetic"});
  c.data.qa_train = resolve(base, d, "data", "qa_train");
  c.data.qa_dev = resolve(base, d, "data", "qa_dev");
  c.data.qa_test = resolve(base, d, "data", "qa_test");
  c.data.nli_train = resolve(base, d, "data", "nli_train");
  c.data.nli_dev = resolve(base, d, "data", "nli_dev");
  if (d.contains("synthetic")) {
    if (!c.data.qa_train.empty()) throw ConfigError("data.synthetic: cannot be combined with data.qa_train");
    c.data.synthetic = parse_synthetic(d.at("synthetic"), "data.synthetic");
  } else if (c.data.qa_train.empty()) {
    throw ConfigError("data.qa_train: missing");
  }

  c.model = model_config_from_json(j.value("model", Json::object()), "model", 0);

  Json train = j.value("train", Json::object());
  if (!train.is_object()) throw ConfigError("train: expected an object");
  if (train.contains("pretrain")) {
    c.pretrain = train_config_from_json(train.at("pretrain"), "train.pretrain");
    train.erase("pretrain");
  }
  c.train = train_config_from_json(train, "train");
  if (c.train.init != "scratch") {
    fs::path init(c.train.init);
    c.train.init = (init.is_absolute() ? init : base / init).string();
  }
  if (c.pretrain && c.train.init == "scratch") {
    throw ConfigError("train.init: a pretrain block needs a checkpoint path to write to");
  }

  const Json e = j.value("eval", Json::object());
  reject_unknown(e, "eval", {"output_dir", "split", "threads"});
  c.eval.output_dir = resolve(base, e, "eval", "output_dir");
  if (c.eval.output_dir.empty()) c.eval.output_dir = base / "results";
  c.eval.split = field<std::string>(e, "eval", "split", c.eval.split);
  if (c.eval.split != "dev" && c.eval.split != "test") throw ConfigError("eval.split: expected 'dev' or 'test'");
  c.eval.threads = field(e, "eval", "threads", c.eval.threads);
  if (c.eval.threads < 1) throw ConfigError("eval.threads: must be positive");
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read experiment file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(j, path);
}

const std::vector<QAExample>& LoadedData::eval_split(const std::string& split) const {
  if (split == "test") {
    if (qa_test.empty()) throw ConfigError("eval.split: no test data configured");
    return qa_test;
  }
  if (qa_dev.empty()) throw ConfigError("eval.split: no dev data configured");
  return qa_dev;
}

LoadedData synthetic_data(const SyntheticDataConfig& config) {
  SyntheticQAConfig qa = config.qa;
  qa.n_questions = config.qa.n_questions + config.qa_dev;
  SyntheticQA generated = gen_synthetic_qa(qa);
  LoadedData out;
  out.vocab = generated.world.vocabulary();
  auto split = generated.examples.begin() + config.qa.n_questions;
  out.qa_train.assign(generated.examples.begin(), split);
  out.qa_dev.assign(split, generated.examples.end());
  if (config.nli.n_examples > 0) {
    SyntheticNLIConfig nli = config.nli;
    nli.n_examples = config.nli.n_examples + config.nli_dev;
    auto pairs = gen_synthetic_nli(nli, generated.world);
    auto cut = pairs.begin() + config.nli.n_examples;
    out.nli_train.assign(pairs.begin(), cut);
    out.nli_dev.assign(cut, pairs.end());
  }
  return out;
}

LoadedData load_data(ExperimentConfig& config) {
  LoadedData out;
  if (config.data.synthetic) {
    out = synthetic_data(*config.data.synthetic);
  } else {
    auto read_qa = [](const fs::path& p) { return p.empty() ? std::vector<QAExample>{} : read_qa_records(p); };
    auto read_nli = [](const fs::path& p) { return p.empty() ? std::vector<NLIExample>{} : read_nli_records(p); };
    out.qa_train = read_qa(config.data.qa_train);
    out.qa_dev = read_qa(config.data.qa_dev);
    out.qa_test = read_qa(config.data.qa_test);
    out.nli_train = read_nli(config.data.nli_train);
    out.nli_dev = read_nli(config.data.nli_dev);
    std::vector<QAExample> all_qa = out.qa_train;
    all_qa.insert(all_qa.end(), out.qa_dev.begin(), out.qa_dev.end());
    all_qa.insert(all_qa.end(), out.qa_test.begin(), out.qa_test.end());
    std::vector<NLIExample> all_nli = out.nli_train;
    all_nli.insert(all_nli.end(), out.nli_dev.begin(), out.nli_dev.end());
    out.vocab = build_vocabulary(all_qa, all_nli);
    for (auto* set : {&out.qa_train, &out.qa_dev, &out.qa_test}) {
      for (auto& ex : *set) index_example(ex, out.vocab);
    }
    for (auto* set : {&out.nli_train, &out.nli_dev}) {
      for (auto& ex : *set) index_example(ex, out.vocab);
    }
  }
  config.model.dims.vocab_size = static_cast<int>(out.vocab.size());
  return out;
}

}  // namespace multee
