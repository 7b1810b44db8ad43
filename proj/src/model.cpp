#include "multee/model.hpp"

#include <array>
#include <utility>

namespace multee {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<std::pair<std::string_view, E>, N>& names,
             const char* what) {
  for (const auto& [name, value] : names) {
    if (name == text) return value;
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E value, const std::array<std::pair<std::string_view, E>, N>& names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, JoinLayer>, 2> kJoinNames{{
    {"CA", JoinLayer::cross_attention},
    {"FL", JoinLayer::final_layer},
}};
constexpr std::array<std::pair<std::string_view, RelevanceMode>, 3> kRelevanceNames{{
    {"learned", RelevanceMode::learned},
    {"constant_ones", RelevanceMode::constant_ones},
    {"direct", RelevanceMode::direct},
}};
constexpr std::array<std::pair<std::string_view, ModelKind>, 3> kKindNames{{
    {"multee", ModelKind::multee},
    {"max", ModelKind::max},
    {"concat", ModelKind::concat},
}};

}  // namespace

std::string_view to_string(JoinLayer layer) { return name_of(layer, kJoinNames); }
std::string_view to_string(RelevanceMode mode) { return name_of(mode, kRelevanceNames); }
std::string_view to_string(ModelKind kind) { return name_of(kind, kKindNames); }
JoinLayer parse_join_layer(std::string_view text) { return parse_enum(text, kJoinNames, "join layer"); }
RelevanceMode parse_relevance_mode(std::string_view text) {
  return parse_enum(text, kRelevanceNames, "relevance mode");
}
ModelKind parse_model_kind(std::string_view text) { return parse_enum(text, kKindNames, "model kind"); }

void AggregatorConfig::validate() const {
  if (join_layers.empty()) throw ConfigError("join_layers must not be empty");
  if (join_layers.size() > 2) throw ConfigError("join_layers lists a layer twice");
  if (join_layers.size() == 2 && join_layers[0] == join_layers[1]) {
    throw ConfigError("join_layers lists a layer twice");
  }
}

void ModelConfig::validate() const {
  if (dims.vocab_size < 2) throw ConfigError("vocabulary must hold the reserved tokens");
  if (dims.d_emb < 1 || dims.d_hidden < 1) throw ConfigError("dimensions must be positive");
  if (dims.num_labels != kNumEntailmentLabels) throw ConfigError("entailment stack needs three labels");
  if (max_concat_tokens < 1) throw ConfigError("max_concat_tokens must be positive");
  aggregator.validate();
}

ConcatenatedPremises concatenate_premises(const std::vector<TokenSeq>& premises, int separator_id,
                                          int max_tokens) {
  ConcatenatedPremises out;
  for (std::size_t i = 0; i < premises.size(); ++i) {
    if (i > 0 && separator_id >= 0) {
      out.tokens.tokens.emplace_back(kSentenceSeparator);
      out.tokens.ids.push_back(separator_id);
    }
    out.tokens.tokens.insert(out.tokens.tokens.end(), premises[i].tokens.begin(), premises[i].tokens.end());
    out.tokens.ids.insert(out.tokens.ids.end(), premises[i].ids.begin(), premises[i].ids.end());
  }
  if (out.tokens.ids.size() > static_cast<std::size_t>(max_tokens)) {
    out.tokens.tokens.resize(static_cast<std::size_t>(max_tokens));
    out.tokens.ids.resize(static_cast<std::size_t>(max_tokens));
    out.truncated = true;
  }
  return out;
}

}  // namespace multee
