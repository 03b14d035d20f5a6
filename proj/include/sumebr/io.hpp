#pragma once

// On-disk formats: candidate dumps, metric label dumps, rerank dumps,
// generator and energy model files. Line-delimited JSON unless noted.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sumebr/ebr.hpp"
#include "sumebr/error.hpp"
#include "sumebr/generator.hpp"
#include "sumebr/metrics.hpp"
#include "sumebr/rerank.hpp"

namespace sumebr {

using json = nlohmann::json;

inline constexpr const char* kModelVersion = "ebr-v1";
inline constexpr const char* kLmVersion = "lm-v1";

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ContractError("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::string s;
  for (const auto& r : records) s += r.dump() + '\n';
  write_file(path, s);
}

inline std::vector<json> read_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ContractError("malformed JSON at line " + std::to_string(n) + " of " + path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate dump: {"doc_id", "candidates": [{"tokens", "logprob", "finished"}]}

inline json to_json(const CandidateSet& s) {
  json cands = json::array();
  for (const auto& h : s.candidates)
    cands.push_back({{"tokens", h.tokens}, {"logprob", h.logprob}, {"finished", h.finished}});
  return {{"doc_id", s.doc_id}, {"candidates", std::move(cands)}};
}

inline CandidateSet candidate_set_from_json(const json& j) {
  try {
    CandidateSet s;
    s.doc_id = j.at("doc_id").get<std::string>();
    for (const auto& c : j.at("candidates")) {
      Hypothesis h;
      h.tokens = c.at("tokens").get<TokenSeq>();
      h.logprob = c.at("logprob").get<double>();
      h.finished = c.value("finished", true);
      s.candidates.push_back(std::move(h));
    }
    return s;
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad candidate record: ") + e.what());
  }
}

inline void save_candidates(const std::string& path, const std::vector<CandidateSet>& sets) {
  std::vector<json> recs;
  for (const auto& s : sets) recs.push_back(to_json(s));
  write_jsonl(path, recs);
}

inline std::vector<CandidateSet> load_candidates(const std::string& path) {
  std::vector<CandidateSet> out;
  for (const auto& j : read_jsonl(path)) out.push_back(candidate_set_from_json(j));
  return out;
}

// ---------------------------------------------------------------------------
// Metric label dump: {"doc_id", "kind", "scores": [per candidate]}

struct MetricLabels {
  std::string doc_id;
  MetricKind kind;
  std::vector<double> scores;
};

inline void save_labels(const std::string& path, const std::vector<MetricLabels>& labels) {
  std::vector<json> recs;
  for (const auto& l : labels) recs.push_back({{"doc_id", l.doc_id}, {"kind", to_string(l.kind)}, {"scores", l.scores}});
  write_jsonl(path, recs);
}

inline std::vector<MetricLabels> load_labels(const std::string& path) {
  std::vector<MetricLabels> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back({j.at("doc_id").get<std::string>(), parse_metric_kind(j.at("kind").get<std::string>()),
                     j.at("scores").get<std::vector<double>>()});
    } catch (const json::exception& e) {
      throw ContractError("bad label record in " + path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rerank dump: {"doc_id", "method", "chosen_index", "scores"}

inline void save_reranks(const std::string& path, const std::vector<RerankResult>& results) {
  std::vector<json> recs;
  for (const auto& r : results)
    recs.push_back({{"doc_id", r.doc_id}, {"method", r.method}, {"chosen_index", r.chosen_index}, {"scores", r.scores}});
  write_jsonl(path, recs);
}

struct RerankRecord {
  std::string doc_id;
  std::string method;
  std::size_t chosen_index;
  std::vector<double> scores;
};

inline std::vector<RerankRecord> load_reranks(const std::string& path) {
  std::vector<RerankRecord> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back({j.at("doc_id").get<std::string>(), j.at("method").get<std::string>(),
                     j.at("chosen_index").get<std::size_t>(), j.at("scores").get<std::vector<double>>()});
    } catch (const json::exception& e) {
      throw ContractError("bad rerank record in " + path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator file

inline json to_json(const ConditionalLM& lm) {
  json bigrams = json::array();
  for (std::size_t p = 0; p < lm.successors.size(); ++p)
    for (const auto& [n, c] : lm.successors[p]) bigrams.push_back({p, n, c});
  return {{"version", kLmVersion},       {"copy_weight", lm.copy_weight}, {"smoothing", lm.smoothing},
          {"target_len", lm.target_len}, {"vocab", lm.vocab.tokens},      {"bigrams", std::move(bigrams)}};
}

inline ConditionalLM lm_from_json(const json& j) {
  try {
    require(j.at("version").get<std::string>() == kLmVersion, "generator file: unsupported version");
    ConditionalLM lm;
    lm.copy_weight = j.at("copy_weight").get<double>();
    lm.smoothing = j.at("smoothing").get<double>();
    lm.target_len = j.at("target_len").get<double>();
    lm.vocab.tokens = j.at("vocab").get<std::vector<std::string>>();
    require(lm.vocab.size() >= 2 && lm.vocab.tokens[kBos] == kBosToken && lm.vocab.tokens[kEos] == kEosToken,
            "generator file: vocabulary must start with BOS/EOS");
    for (int i = 0; i < lm.vocab.size(); ++i) lm.vocab.index.emplace(lm.vocab.tokens[i], i);
    lm.successors.resize(lm.vocab.size());
    lm.context_total.assign(lm.vocab.size(), 0.0);
    for (const auto& b : j.at("bigrams")) {
      const int p = b.at(0).get<int>();
      const int n = b.at(1).get<int>();
      const double c = b.at(2).get<double>();
      require(p >= 0 && p < lm.vocab.size() && n >= 0 && n < lm.vocab.size(), "generator file: bad bigram id");
      lm.successors[p].emplace_back(n, c);
      lm.context_total[p] += c;
    }
    for (auto& row : lm.successors) std::sort(row.begin(), row.end());
    validate(lm);
    return lm;
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad generator file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Energy model file

inline json to_json(const TrainConfig& c) {
  return {{"tau", c.tau},           {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"seed", c.seed},             {"loss", to_string(c.loss)},
          {"margin_scale", c.margin_scale}, {"pairs_per_list", c.pairs_per_list}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  c.tau = j.value("tau", c.tau);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.margin_scale = j.value("margin_scale", c.margin_scale);
  c.pairs_per_list = j.value("pairs_per_list", c.pairs_per_list);
  return c;
}

inline json to_json(const EnergyModel& m) {
  std::vector<double> w1(m.net.theta.begin(), m.net.theta.begin() + kHidden * kNumFeatures);
  std::vector<double> b1, w2;
  for (std::size_t h = 0; h < kHidden; ++h) {
    b1.push_back(m.net.b1(h));
    w2.push_back(m.net.w2(h));
  }
  std::vector<std::string> names(feature_names().begin(), feature_names().end());
  return {{"version", kModelVersion},
          {"features", names},
          {"standardization", {{"mean", m.mean}, {"stddev", m.stddev}}},
          {"layers",
           {{{"shape", {kHidden, kNumFeatures}}, {"weights", w1}, {"bias", b1}, {"activation", "tanh"}},
            {{"shape", {1, kHidden}}, {"weights", w2}, {"bias", {m.net.b2()}}, {"activation", "linear"}}}},
          {"train_config", to_json(m.config)}};
}

inline EnergyModel model_from_json(const json& j) {
  try {
    require(j.at("version").get<std::string>() == kModelVersion, "model file: unsupported version");
    EnergyModel m;
    const auto mean_v = j.at("standardization").at("mean").get<std::vector<double>>();
    const auto sd_v = j.at("standardization").at("stddev").get<std::vector<double>>();
    require(mean_v.size() == kNumFeatures && sd_v.size() == kNumFeatures, "model file: wrong feature count");
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      require(sd_v[i] > 0, "model file: stddev must be > 0");
      m.mean[i] = mean_v[i];
      m.stddev[i] = sd_v[i];
    }
    const auto& layers = j.at("layers");
    require(layers.size() == 2, "model file: expected two layers");
    const auto w1 = layers[0].at("weights").get<std::vector<double>>();
    const auto b1 = layers[0].at("bias").get<std::vector<double>>();
    const auto w2 = layers[1].at("weights").get<std::vector<double>>();
    const auto b2 = layers[1].at("bias").get<std::vector<double>>();
    require(w1.size() == kHidden * kNumFeatures && b1.size() == kHidden && w2.size() == kHidden && b2.size() == 1,
            "model file: layer shape mismatch");
    std::copy(w1.begin(), w1.end(), m.net.theta.begin());
    for (std::size_t h = 0; h < kHidden; ++h) {
      m.net.b1(h) = b1[h];
      m.net.w2(h) = w2[h];
    }
    m.net.b2() = b2[0];
    if (j.contains("train_config")) m.config = train_config_from_json(j.at("train_config"));
    return m;
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad model file: ") + e.what());
  }
}

}  // namespace sumebr
