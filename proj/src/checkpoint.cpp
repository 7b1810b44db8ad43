#include "multee/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace multee {

namespace {

constexpr const char* kFormat = "multee-checkpoint";
constexpr int kVersion = 1;

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Reads optional typed fields of one JSON object and rejects unknown keys.
class Fields {
 public:
  Fields(const Json& j, std::string path, std::initializer_list<const char*> known) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
    for (const auto& [key, value] : j.items()) {
      bool ok = false;
      for (const char* k : known) ok = ok || key == k;
      if (!ok) throw ConfigError(join_path(path_, key) + ": unknown field");
    }
  }

  template <typename T>
  T get(const char* key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() == false && v.get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(join_path(path_, key) + ": wrong type");
    }
  }

  std::string path(const char* key) const { return join_path(path_, key); }
  bool has(const char* key) const { return j_.contains(key); }
  const Json& at(const char* key) const { return j_.at(key); }

 private:
  const Json& j_;
  std::string path_;
};

template <typename Parse>
auto parse_field(const Fields& f, const char* key, Parse parse, decltype(parse(std::string_view())) fallback) {
  if (!f.has(key)) return fallback;
  const auto text = f.get<std::string>(key, "");
  try {
    return parse(text);
  } catch (const Error& e) {
    throw ConfigError(f.path(key) + ": " + e.what());
  }
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string_view to_string(RelevanceLoss loss) {
  switch (loss) {
    case RelevanceLoss::none: return "none";
    case RelevanceLoss::bce: return "bce";
    case RelevanceLoss::irsum: return "irsum";
  }
  return "?";
}

RelevanceLoss parse_relevance_loss(std::string_view text) {
  if (text == "none") return RelevanceLoss::none;
  if (text == "bce") return RelevanceLoss::bce;
  if (text == "irsum") return RelevanceLoss::irsum;
  throw ConfigError("unknown relevance loss '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(relevance_lambda >= 0)) throw ConfigError("relevance_lambda must be >= 0");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (init.empty()) throw ConfigError("init must be 'scratch' or a checkpoint path");
}

Json to_json(const StackDims& d) {
  return {{"vocab_size", d.vocab_size}, {"d_emb", d.d_emb}, {"d_hidden", d.d_hidden}, {"num_labels", d.num_labels}};
}

Json to_json(const AggregatorConfig& c) {
  Json layers = Json::array();
  for (JoinLayer l : c.join_layers) layers.push_back(std::string(to_string(l)));
  return {{"join_layers", layers},
          {"use_relevance", std::string(to_string(c.use_relevance))},
          {"share_below_min_join", c.share_below_min_join},
          {"paragraph_encoding", c.paragraph_encoding}};
}

Json to_json(const ModelConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"dims", to_json(c.dims)},
          {"aggregator", to_json(c.aggregator)},
          {"max_concat_tokens", c.max_concat_tokens},
          {"init_seed", c.init_seed}};
}

Json to_json(const TrainConfig& c) {
  return {{"task_type", std::string(to_string(c.task_type))},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"relevance_loss", std::string(to_string(c.relevance_loss))},
          {"relevance_lambda", c.relevance_lambda},
          {"freeze_embeddings", c.freeze_embeddings},
          {"init", c.init},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"threads", c.threads}};
}

Json to_json(const TrainReport& r) {
  Json epochs = Json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev_loss", e.dev_loss},
                      {"dev_metric", e.dev_metric},
                      {"best_dev_loss", e.best_dev_loss}});
  }
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_metric", r.best_metric},
          {"checkpoint_path", r.checkpoint_path},
          {"seed", r.seed},
          {"config", to_json(r.config)}};
}

Json to_json(const MetricReport& m) {
  Json j = {{"f1a", {{"precision", m.f1a.precision}, {"recall", m.f1a.recall}, {"f1", m.f1a.f1}}},
            {"f1m", m.f1m},
            {"em", m.em},
            {"questions", m.questions},
            {"choices", m.choices}};
  j["accuracy"] = m.accuracy ? Json(*m.accuracy) : Json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const Json& j, const std::string& path, int vocab_size) {
  ModelConfig c;
  Fields f(j, path, {"kind", "dims", "aggregator", "max_concat_tokens", "init_seed"});
  c.kind = parse_field(f, "kind", parse_model_kind, c.kind);
  c.max_concat_tokens = f.get("max_concat_tokens", c.max_concat_tokens);
  c.init_seed = f.get("init_seed", c.init_seed);
  if (f.has("dims")) {
    Fields d(f.at("dims"), f.path("dims"), {"vocab_size", "d_emb", "d_hidden", "num_labels"});
    c.dims.d_emb = d.get("d_emb", c.dims.d_emb);
    c.dims.d_hidden = d.get("d_hidden", c.dims.d_hidden);
    c.dims.num_labels = d.get("num_labels", c.dims.num_labels);
    if (c.dims.d_emb < 1) throw ConfigError(d.path("d_emb") + ": must be positive");
    if (c.dims.d_hidden < 1) throw ConfigError(d.path("d_hidden") + ": must be positive");
  }
  c.dims.vocab_size = vocab_size;
  if (f.has("aggregator")) {
    Fields a(f.at("aggregator"), f.path("aggregator"),
             {"join_layers", "use_relevance", "share_below_min_join", "paragraph_encoding"});
    c.aggregator.use_relevance = parse_field(a, "use_relevance", parse_relevance_mode, c.aggregator.use_relevance);
    c.aggregator.share_below_min_join = a.get("share_below_min_join", c.aggregator.share_below_min_join);
    c.aggregator.paragraph_encoding = a.get("paragraph_encoding", c.aggregator.paragraph_encoding);
    if (a.has("join_layers")) {
      const Json& layers = a.at("join_layers");
      if (!layers.is_array()) throw ConfigError(a.path("join_layers") + ": expected an array");
      c.aggregator.join_layers.clear();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string at = a.path("join_layers") + "[" + std::to_string(i) + "]";
        if (!layers[i].is_string()) throw ConfigError(at + ": expected a string");
        try {
          c.aggregator.join_layers.push_back(parse_join_layer(layers[i].get<std::string>()));
        } catch (const Error& e) {
          throw ConfigError(at + ": " + e.what());
        }
      }
    }
    try {
      c.aggregator.validate();
    } catch (const Error& e) {
      throw ConfigError(a.path("join_layers") + ": " + e.what());
    }
  }
  if (c.max_concat_tokens < 1) throw ConfigError(f.path("max_concat_tokens") + ": must be positive");
  return c;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  Fields f(j, path,
           {"task_type", "epochs", "batch_size", "learning_rate", "seed", "relevance_loss", "relevance_lambda",
            "freeze_embeddings", "init", "patience", "clip_norm", "threads"});
  c.task_type = parse_field(f, "task_type", parse_task_type, c.task_type);
  c.epochs = f.get("epochs", c.epochs);
  c.batch_size = f.get("batch_size", c.batch_size);
  c.learning_rate = f.get("learning_rate", c.learning_rate);
  c.seed = f.get("seed", c.seed);
  c.relevance_loss = parse_field(f, "relevance_loss", parse_relevance_loss, c.relevance_loss);
  c.relevance_lambda = f.get("relevance_lambda", c.relevance_lambda);
  c.freeze_embeddings = f.get("freeze_embeddings", c.freeze_embeddings);
  c.init = f.get("init", c.init);
  c.patience = f.get("patience", c.patience);
  c.clip_norm = f.get("clip_norm", c.clip_norm);
  c.threads = f.get("threads", c.threads);
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  Json tensors = Json::array();
  for (const auto& [name, m] : file.tensors) {
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}});
  }
  const Json j = {{"format", kFormat},
                  {"version", kVersion},
                  {"kind", file.kind},
                  {"config", file.config},
                  {"vocab_hash", hex(file.vocab_hash)},
                  {"vocab_size", file.vocab_size},
                  {"vocabulary", file.vocabulary},
                  {"tensors", std::move(tensors)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw CheckpointError(path.string() + ": not a checkpoint file");
    if (j.at("version") != kVersion) throw CheckpointError(path.string() + ": unsupported checkpoint version");
    CheckpointFile f;
    f.kind = j.at("kind").get<std::string>();
    f.config = j.at("config");
    f.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
    f.vocab_size = j.at("vocab_size").get<int>();
    f.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& t : j.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto& data = t.at("data");
      if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
        throw CheckpointError(path.string() + ": tensor " + t.at("name").get<std::string>() + " is malformed");
      }
      Matrix<double> m(rows, cols);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
      }
      f.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
    return f;
  } catch (const Json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void check_vocabulary(const CheckpointFile& file, const Vocabulary& vocab) {
  if (file.vocab_size != static_cast<int>(vocab.size()) || file.vocab_hash != vocab.hash()) {
    throw CheckpointError("checkpoint vocabulary (" + std::to_string(file.vocab_size) + " tokens, hash " +
                          hex(file.vocab_hash) + ") does not match the data vocabulary (" +
                          std::to_string(vocab.size()) + " tokens, hash " + hex(vocab.hash()) + ")");
  }
}

Vocabulary checkpoint_vocabulary(const CheckpointFile& file) {
  Vocabulary vocab;
  for (const auto& token : file.vocabulary) vocab.add(token);
  check_vocabulary(file, vocab);
  return vocab;
}

Vocabulary checkpoint_vocabulary(const std::filesystem::path& path) { return checkpoint_vocabulary(read_checkpoint(path)); }

}  // namespace multee
