#include <fstream>

#include <json.hpp>

#include "multee/corpus.hpp"

namespace multee {
namespace {

using nlohmann::json;

template <typename T>
T field(const json& obj, const char* name, int line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("field '") + name + "': " + e.what(), line);
  }
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("record is not a JSON object", lineno);
    fn(obj, lineno);
  }
}

QAExample parse_qa(const json& obj, int line) {
  QAExample ex;
  ex.question = field<std::string>(obj, "question", line);
  ex.choices = field<std::vector<std::string>>(obj, "choices", line);
  ex.premise_texts = field<std::vector<std::string>>(obj, "premises", line);
  ex.gold = field<std::vector<int>>(obj, "gold", line);
  ex.contiguous = obj.contains("contiguous") ? field<bool>(obj, "contiguous", line) : false;
  try {
    ex.task_type = obj.contains("task_type")
                       ? parse_task_type(field<std::string>(obj, "task_type", line))
                       : TaskType::single_correct;
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  if (obj.contains("relevance_labels") && !obj["relevance_labels"].is_null()) {
    ex.relevance_labels = field<std::vector<int>>(obj, "relevance_labels", line);
  }
  if (obj.contains("hypotheses") && !obj["hypotheses"].is_null()) {
    ex.hypothesis_texts = field<std::vector<std::string>>(obj, "hypotheses", line);
  } else {
    try {
      for (const auto& c : ex.choices) ex.hypothesis_texts.push_back(marked_hypothesis(ex.question, c));
    } catch (const EmptyText& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  try {
    validate(ex);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return ex;
}

}  // namespace

std::vector<QAExample> read_qa_records(const std::filesystem::path& path) {
  std::vector<QAExample> out;
  for_each_line(path, [&](const json& obj, int line) { out.push_back(parse_qa(obj, line)); });
  return out;
}

std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = read_qa_records(path);
  for (auto& ex : out) index_example(ex, vocab);
  return out;
}

std::string to_json_line(const QAExample& ex) {
  json obj;
  obj["question"] = ex.question;
  obj["choices"] = ex.choices;
  obj["premises"] = ex.premise_texts;
  obj["gold"] = ex.gold;
  if (ex.relevance_labels) obj["relevance_labels"] = *ex.relevance_labels;
  obj["hypotheses"] = ex.hypothesis_texts;
  obj["contiguous"] = ex.contiguous;
  obj["task_type"] = std::string(to_string(ex.task_type));
  return obj.dump();
}

void write_qa_dataset(const std::filesystem::path& path, const std::vector<QAExample>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& ex : examples) out << to_json_line(ex) << '\n';
}

std::vector<NLIExample> read_nli_records(const std::filesystem::path& path) {
  std::vector<NLIExample> out;
  for_each_line(path, [&](const json& obj, int line) {
    NLIExample ex;
    ex.premise_text = field<std::string>(obj, "premise", line);
    ex.hypothesis_text = field<std::string>(obj, "hypothesis", line);
    try {
      ex.label = parse_entailment_label(field<std::string>(obj, "label", line));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<NLIExample> load_nli_dataset(const std::filesystem::path& path,
                                         const Vocabulary& vocab) {
  auto out = read_nli_records(path);
  for (auto& ex : out) index_example(ex, vocab);
  return out;
}

std::string to_json_line(const NLIExample& ex) {
  json obj;
  obj["premise"] = ex.premise_text;
  obj["hypothesis"] = ex.hypothesis_text;
  obj["label"] = std::string(to_string(ex.label));
  return obj.dump();
}

void write_nli_dataset(const std::filesystem::path& path, const std::vector<NLIExample>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& ex : examples) out << to_json_line(ex) << '\n';
}

}  // namespace multee
