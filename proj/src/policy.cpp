#include "evolgym/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::policy {

namespace {

std::string lowercase(const std::string& text) { return util::lower(text); }

std::size_t find_last_label(const std::string& haystack_lower, const std::string& label) {
  return haystack_lower.rfind(label);
}

/// Positions of every label occurrence, used to delimit blocks.
std::vector<std::size_t> label_positions(const std::string& haystack_lower) {
  std::vector<std::size_t> positions;
  for (const char* label : {"thought:", "action:"}) {
    std::size_t pos = 0;
    while ((pos = haystack_lower.find(label, pos)) != std::string::npos) {
      positions.push_back(pos);
      pos += 1;
    }
  }
  std::sort(positions.begin(), positions.end());
  return positions;
}

std::string block_after(const std::string& text, const std::vector<std::size_t>& positions,
                        std::size_t label_pos, std::size_t label_len) {
  std::size_t end = text.size();
  for (const std::size_t pos : positions) {
    if (pos > label_pos) {
      end = pos;
      break;
    }
  }
  return text.substr(label_pos + label_len, end - label_pos - label_len);
}

std::string clean_action(std::string action) {
  action = util::trim(action);
  if (action.rfind("```", 0) == 0) {
    const std::size_t newline = action.find('\n');
    action = newline == std::string::npos ? action.substr(3) : action.substr(newline + 1);
    if (action.size() >= 3 && action.compare(action.size() - 3, 3, "```") == 0) {
      action = action.substr(0, action.size() - 3);
    }
    action = util::trim(action);
  }
  const std::size_t newline = action.find('\n');
  if (newline != std::string::npos) action = util::trim(action.substr(0, newline));
  while (action.size() >= 2 && action.front() == action.back() &&
         (action.front() == '"' || action.front() == '\'' || action.front() == '`')) {
    action = util::trim(action.substr(1, action.size() - 2));
  }
  return action;
}

}  // namespace

ReActOutput parse_react(const std::string& text) {
  const std::string lower = lowercase(text);
  const auto positions = label_positions(lower);
  const std::size_t action_pos = find_last_label(lower, "action:");
  if (action_pos == std::string::npos) {
    throw ReactParseError("no Action: label in agent output");
  }
  ReActOutput output;
  output.action = clean_action(block_after(text, positions, action_pos, 7));
  if (output.action.empty()) {
    throw ReactParseError("empty action in agent output");
  }
  const std::size_t thought_pos = find_last_label(lower, "thought:");
  if (thought_pos != std::string::npos) {
    output.thought = util::trim(block_after(text, positions, thought_pos, 8));
  }
  return output;
}

std::string render_react(const ReActOutput& output) {
  return "Thought: " + output.thought + "\nAction: " + output.action;
}

// --- Feature map ---

namespace {

constexpr std::size_t kMaxObsTokens = 64;
constexpr std::size_t kMaxActionTokens = 16;
constexpr std::size_t kMaxPrevObsTokens = 32;

constexpr std::uint64_t kTagActionNgram = util::fnv1a64("A|");
constexpr std::uint64_t kTagActionWhole = util::fnv1a64("AW|");
constexpr std::uint64_t kTagObsAction = util::fnv1a64("OA|");
constexpr std::uint64_t kTagUnigramPair = util::fnv1a64("UU|");
constexpr std::uint64_t kTagLastAction = util::fnv1a64("LA|");
constexpr std::uint64_t kTagEpisodeStart = util::fnv1a64("LA0|");
constexpr std::uint64_t kTagPrevObs = util::fnv1a64("LO|");
constexpr std::uint64_t kTagObsOverlap = util::fnv1a64("OVT|");
constexpr std::uint64_t kTagRareOverlap = util::fnv1a64("RVT|");
constexpr std::uint64_t kTagRepeat = util::fnv1a64("REP|");

inline std::uint32_t to_index(std::uint64_t hash) {
  return static_cast<std::uint32_t>(util::splitmix64(hash) & (kFeatureDimension - 1));
}

std::vector<std::uint64_t> token_hashes(const std::string& text, std::size_t cap) {
  std::vector<std::uint64_t> hashes;
  for (const std::string& token : util::tokenize(text)) {
    if (hashes.size() >= cap) break;
    hashes.push_back(util::fnv1a64(token));
  }
  return hashes;
}

std::vector<std::uint64_t> sorted_distinct(std::vector<std::uint64_t> hashes) {
  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());
  return hashes;
}

std::size_t intersection_size(const std::vector<std::uint64_t>& a,
                              const std::vector<std::uint64_t>& b) {
  std::size_t i = 0, j = 0, count = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

}  // namespace

namespace {

template <typename Emit>
void emit_feature_keys(const PolicyContext& context, const std::string& action, Emit&& emit) {
  const std::vector<std::uint64_t> obs = token_hashes(context.current_observation, kMaxObsTokens);
  const std::vector<std::uint64_t> act = token_hashes(action, kMaxActionTokens);
  const std::uint64_t action_whole = util::fnv1a64(action);

  emit(util::mix(kTagActionWhole, action_whole));
  for (std::size_t i = 0; i < act.size(); ++i) {
    std::uint64_t ngram = kTagActionNgram;
    for (std::size_t n = 0; n < 3 && i + n < act.size(); ++n) {
      ngram = util::mix(ngram, act[i + n]);
      emit(ngram);
    }
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    std::uint64_t ngram = util::mix(kTagObsAction, action_whole);
    for (std::size_t n = 0; n < 4 && i + n < obs.size(); ++n) {
      ngram = util::mix(ngram, obs[i + n]);
      emit(ngram);
    }
    for (const std::uint64_t act_token : act) {
      emit(util::mix(util::mix(kTagUnigramPair, obs[i]), act_token));
    }
  }
  if (context.history.empty()) {
    emit(util::mix(kTagEpisodeStart, action_whole));
  } else {
    const std::uint64_t last_action = util::fnv1a64(context.history.back().action);
    emit(util::mix(util::mix(kTagLastAction, last_action), action_whole));
    if (context.history.back().action == action) {
      emit(util::mix(kTagRepeat, 1));
    }
    const std::string& previous_observation =
        context.history.size() >= 2 ? context.history[context.history.size() - 2].observation
                                    : context.instruction;
    for (const std::uint64_t token : token_hashes(previous_observation, kMaxPrevObsTokens)) {
      emit(util::mix(util::mix(kTagPrevObs, token), action_whole));
    }
  }

  // Thermometer overlap features transfer across instances: how strongly the
  // candidate's tokens co-occur with the latest feedback and with the rare
  // (instance-specific) instruction vocabulary.
  const auto act_set = sorted_distinct(act);
  const std::size_t obs_overlap = intersection_size(act_set, sorted_distinct(obs));
  for (std::size_t j = 1; j <= std::min<std::size_t>(obs_overlap, 6); ++j) {
    emit(util::mix(kTagObsOverlap, j));
  }
  std::vector<std::uint64_t> instruction_tokens = token_hashes(context.instruction, 256);
  std::sort(instruction_tokens.begin(), instruction_tokens.end());
  std::vector<std::uint64_t> rare;
  for (std::size_t i = 0; i < instruction_tokens.size();) {
    std::size_t j = i;
    while (j < instruction_tokens.size() && instruction_tokens[j] == instruction_tokens[i]) ++j;
    if (j - i <= 2) rare.push_back(instruction_tokens[i]);
    i = j;
  }
  const std::size_t rare_overlap = intersection_size(act_set, rare);
  for (std::size_t j = 1; j <= std::min<std::size_t>(rare_overlap, 6); ++j) {
    emit(util::mix(kTagRareOverlap, j));
  }
}

}  // namespace

FeatureVector featurize(const PolicyContext& context, const std::string& action) {
  FeatureVector features;
  features.reserve(512);
  emit_feature_keys(context, action,
                    [&features](std::uint64_t key) { features.push_back(to_index(key)); });
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  return features;
}

std::vector<std::uint64_t> featurize_raw_keys(const PolicyContext& context,
                                              const std::string& action) {
  std::vector<std::uint64_t> keys;
  keys.reserve(512);
  emit_feature_keys(context, action, [&keys](std::uint64_t key) { keys.push_back(key); });
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

// --- LogLinearPolicy ---

LogLinearPolicy::LogLinearPolicy() : weights_(kFeatureDimension, 0.0) {}

LogLinearPolicy::LogLinearPolicy(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.size() != kFeatureDimension) {
    throw core::DomainError("policy weight vector has wrong dimension");
  }
}

double LogLinearPolicy::score(const FeatureVector& features) const {
  if (features.empty()) return 0.0;
  double total = 0.0;
  for (const std::uint32_t index : features) total += weights_[index];
  // Presence vectors are l2-normalized so the softmax curvature stays O(1)
  // regardless of how many features fire.
  return total / std::sqrt(static_cast<double>(features.size()));
}

std::vector<double> LogLinearPolicy::log_probs(const std::vector<FeatureVector>& features) const {
  std::vector<double> scores(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) scores[i] = score(features[i]);
  const double max_score = *std::max_element(scores.begin(), scores.end());
  double normalizer = 0.0;
  for (const double s : scores) normalizer += std::exp(s - max_score);
  const double log_normalizer = max_score + std::log(normalizer);
  for (double& s : scores) s -= log_normalizer;
  return scores;
}

std::vector<double> LogLinearPolicy::log_probs(const PolicyContext& context) const {
  if (context.available_actions.empty()) {
    throw core::DomainError("log-linear policy requires a non-empty action set");
  }
  std::vector<FeatureVector> features;
  features.reserve(context.available_actions.size());
  for (const std::string& action : context.available_actions) {
    features.push_back(featurize(context, action));
  }
  return log_probs(features);
}

ActResult LogLinearPolicy::act(const core::Instruction& instruction, const PolicyContext& context,
                               double temperature, std::mt19937_64& rng) {
  (void)instruction;
  return act(context, temperature, rng);
}

ActResult LogLinearPolicy::act(const PolicyContext& context, double temperature,
                               std::mt19937_64& rng) {
  if (context.available_actions.empty()) {
    throw core::DomainError("log-linear policy requires a non-empty action set");
  }
  std::vector<FeatureVector> features;
  features.reserve(context.available_actions.size());
  for (const std::string& action : context.available_actions) {
    features.push_back(featurize(context, action));
  }
  const std::vector<double> logp = log_probs(features);

  std::size_t chosen = 0;
  if (temperature <= 0.0) {
    // Actions are sorted, so the first strict maximum is the lexicographic
    // tie-break winner.
    for (std::size_t i = 1; i < logp.size(); ++i) {
      if (logp[i] > logp[chosen]) chosen = i;
    }
  } else {
    std::vector<double> tempered(logp.size());
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logp.size(); ++i) {
      tempered[i] = logp[i] / temperature;
      max_score = std::max(max_score, tempered[i]);
    }
    double total = 0.0;
    for (double& value : tempered) {
      value = std::exp(value - max_score);
      total += value;
    }
    const double draw = util::next_unit(rng) * total;
    double cumulative = 0.0;
    chosen = tempered.size() - 1;
    for (std::size_t i = 0; i < tempered.size(); ++i) {
      cumulative += tempered[i];
      if (draw < cumulative) {
        chosen = i;
        break;
      }
    }
  }

  ActResult result;
  result.action = context.available_actions[chosen];
  result.thought = "I will " + result.action + ".";
  result.log_prob = logp[chosen];
  return result;
}

double LogLinearPolicy::log_prob(const PolicyContext& context, const std::string& action) const {
  const auto& actions = context.available_actions;
  const auto it = std::find(actions.begin(), actions.end(), action);
  if (it == actions.end()) {
    throw core::DomainError("action not in available set: " + action);
  }
  return log_probs(context)[static_cast<std::size_t>(it - actions.begin())];
}

std::vector<std::pair<std::uint32_t, double>> LogLinearPolicy::grad_log_prob(
    const PolicyContext& context, const std::string& action) const {
  const auto& actions = context.available_actions;
  const auto it = std::find(actions.begin(), actions.end(), action);
  if (it == actions.end()) {
    throw core::DomainError("action not in available set: " + action);
  }
  std::vector<FeatureVector> features;
  features.reserve(actions.size());
  for (const std::string& candidate : actions) features.push_back(featurize(context, candidate));
  const std::vector<double> logp = log_probs(features);

  std::map<std::uint32_t, double> gradient;
  const auto& chosen = features[static_cast<std::size_t>(it - actions.begin())];
  const double chosen_scale = chosen.empty() ? 0.0 : 1.0 / std::sqrt(double(chosen.size()));
  for (const std::uint32_t index : chosen) gradient[index] += chosen_scale;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double probability = std::exp(logp[i]);
    const double scale =
        features[i].empty() ? 0.0 : probability / std::sqrt(double(features[i].size()));
    for (const std::uint32_t index : features[i]) gradient[index] -= scale;
  }
  return {gradient.begin(), gradient.end()};
}

std::string LogLinearPolicy::to_json() const {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) {
      weights.push_back({i, weights_[i]});
    }
  }
  const nlohmann::json snapshot = {{"dimension", kFeatureDimension},
                                   {"feature_map_version", kFeatureMapVersion},
                                   {"weights", weights}};
  return snapshot.dump();
}

LogLinearPolicy LogLinearPolicy::from_json(const std::string& text) {
  nlohmann::json snapshot;
  try {
    snapshot = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& error) {
    throw core::ParseError("", std::string("malformed policy snapshot: ") + error.what());
  }
  if (snapshot.value("dimension", std::size_t{0}) != kFeatureDimension) {
    throw core::ParseError("dimension", "policy snapshot dimension mismatch");
  }
  if (snapshot.value("feature_map_version", -1) != kFeatureMapVersion) {
    throw core::ParseError("feature_map_version", "policy snapshot feature map mismatch");
  }
  LogLinearPolicy policy;
  for (const auto& entry : snapshot.at("weights")) {
    const std::size_t index = entry.at(0).get<std::size_t>();
    if (index >= kFeatureDimension) throw core::ParseError("weights", "weight index out of range");
    policy.weights_[index] = entry.at(1).get<double>();
  }
  return policy;
}

void LogLinearPolicy::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw core::DomainError("cannot write policy snapshot: " + path);
  out << to_json() << '\n';
}

LogLinearPolicy LogLinearPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw core::DomainError("cannot open policy snapshot: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::uint64_t LogLinearPolicy::snapshot_hash() const {
  std::uint64_t hash = util::kFnvOffset;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    hash = util::mix(hash, i);
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(double));
    std::memcpy(&bits, &weights_[i], sizeof(bits));
    hash = util::mix(hash, bits);
  }
  return hash;
}

// --- Action space resolution ---

std::vector<std::string> resolve_action_space(const std::string& env_name,
                                              const std::string& instruction_text) {
  std::vector<std::string> actions;
  if (env_name == "maze") {
    actions = {"move down", "move left", "move right", "move up"};
  } else if (env_name == "wordle") {
    const std::string marker = "The vocabulary is: ";
    const std::size_t pos = instruction_text.find(marker);
    if (pos == std::string::npos) {
      throw core::DomainError("wordle instruction does not list a vocabulary");
    }
    std::string listing = instruction_text.substr(pos + marker.size());
    if (!listing.empty() && listing.back() == '.') listing.pop_back();
    for (const std::string& entry : util::split(listing, ',')) {
      const std::string word = util::trim(entry);
      if (word.empty()) continue;
      std::string spaced;
      for (std::size_t i = 0; i < word.size(); ++i) {
        if (i > 0) spaced.push_back(' ');
        spaced.push_back(word[i]);
      }
      actions.push_back(spaced);
    }
  } else if (env_name == "craft") {
    std::vector<envs::Recipe> recipes;
    for (const std::string& line : util::split(instruction_text, '\n')) {
      const std::string trimmed = util::trim(line);
      if (auto recipe = envs::parse_recipe_command(trimmed)) {
        recipes.push_back(std::move(*recipe));
      }
    }
    if (recipes.empty()) {
      throw core::DomainError("craft instruction lists no crafting commands");
    }
    std::set<std::string> outputs;
    for (const auto& recipe : recipes) outputs.insert(recipe.output);
    std::set<std::string> bases;
    for (const auto& recipe : recipes) {
      for (const auto& [count, item] : recipe.inputs) {
        if (outputs.count(item) == 0) bases.insert(item);
      }
    }
    actions.push_back("inventory");
    for (const auto& base : bases) actions.push_back("get " + base);
    for (const auto& recipe : recipes) actions.push_back(recipe.command());
  } else {
    throw core::DomainError("unknown environment: " + env_name);
  }
  std::sort(actions.begin(), actions.end());
  return actions;
}

}  // namespace evolgym::policy
