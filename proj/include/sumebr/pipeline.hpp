#pragma once

// Stage orchestration: corpus -> generator -> labels -> energy model ->
// re-ranking -> reports. Every stage reads its inputs from the output
// directory, writes its artifacts there, and records a manifest with the
// config hash, tool version and seed plus a content hash per artifact.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sumebr/corpus.hpp"
#include "sumebr/ebr.hpp"
#include "sumebr/error.hpp"
#include "sumebr/eval.hpp"
#include "sumebr/generator.hpp"
#include "sumebr/io.hpp"
#include "sumebr/metrics.hpp"
#include "sumebr/rerank.hpp"

namespace sumebr {

inline constexpr const char* kToolVersion = "sumebr 0.1.0";

struct GeneratorSpec {
  double copy_weight = 0.5;
  double smoothing = 0.01;
};

struct EvalSpec {
  std::uint64_t n_resamples = 10000;
  double alpha = 0.05;
  int hist_bins = 20;
  double hist_low = -4.0;
  double hist_high = 4.0;
  std::vector<int> sweep_k{4, 8, 16, 32};
  std::vector<double> sweep_weights{0.0, 0.2, 0.5, 0.8};
  int timing_pairs = 1000;
  int timing_rounds = 3;
};

struct PipelineConfig {
  std::optional<std::string> corpus_path;  // synthetic corpus when empty
  std::size_t synthetic_docs = 600;
  std::uint64_t synthetic_seed = 7;
  double train_fraction = 0.4;
  double val_fraction = 0.1;
  double test_fraction = 0.5;
  GeneratorSpec generator_a{0.5, 0.01};
  GeneratorSpec generator_b{0.4, 0.05};
  GenConfig train_decoding{8, 4, 0.8, 30, 8, 4};
  GenConfig infer_decoding{8, 1, 0.0, 30, 8, 4};
  std::vector<MetricKind> targets{MetricKind::RL, MetricKind::ConsPlusRel};
  MetricKind sweep_target = MetricKind::RL;
  AlignerKind aligner = AlignerKind::Exact;
  TrainConfig train;
  EvalSpec eval;
  std::uint64_t seed = 1234;
  std::string out_dir = "out";

  // Sub-seeds derived from the master seed.
  std::uint64_t split_seed() const { return mix_seed(seed, 1); }
  std::uint64_t train_seed() const { return mix_seed(seed, 2); }
  std::uint64_t random_seed() const { return mix_seed(seed, 3); }
  std::uint64_t test_seed() const { return mix_seed(seed, 4); }
};

inline json gen_config_to_json(const GenConfig& g) {
  return {{"beams", g.beams}, {"groups", g.groups}, {"diversity_weight", g.diversity_weight},
          {"max_len", g.max_len}, {"k", g.k}, {"min_len", g.min_len}};
}

inline GenConfig gen_config_from_json(const json& j, GenConfig g) {
  g.beams = j.value("beams", g.beams);
  g.groups = j.value("groups", g.groups);
  g.diversity_weight = j.value("diversity_weight", g.diversity_weight);
  g.max_len = j.value("max_len", g.max_len);
  g.k = j.value("k", g.k);
  g.min_len = j.value("min_len", g.min_len);
  return g;
}

inline json to_json(const PipelineConfig& c) {
  json corpus;
  if (c.corpus_path)
    corpus = {{"path", *c.corpus_path}};
  else
    corpus = {{"synthetic", {{"n_docs", c.synthetic_docs}, {"seed", c.synthetic_seed}}}};
  std::vector<std::string> targets;
  for (auto k : c.targets) targets.push_back(to_string(k));
  json train = to_json(c.train);
  train.erase("seed");  // derived from the master seed
  return {
      {"corpus", corpus},
      {"split", {{"train", c.train_fraction}, {"val", c.val_fraction}, {"test", c.test_fraction}}},
      {"generator_a", {{"copy_weight", c.generator_a.copy_weight}, {"smoothing", c.generator_a.smoothing}}},
      {"generator_b", {{"copy_weight", c.generator_b.copy_weight}, {"smoothing", c.generator_b.smoothing}}},
      {"train_decoding", gen_config_to_json(c.train_decoding)},
      {"infer_decoding", gen_config_to_json(c.infer_decoding)},
      {"targets", targets},
      {"sweep_target", to_string(c.sweep_target)},
      {"aligner", to_string(c.aligner)},
      {"train", train},
      {"eval",
       {{"n_resamples", c.eval.n_resamples},
        {"alpha", c.eval.alpha},
        {"hist_bins", c.eval.hist_bins},
        {"hist_range", {c.eval.hist_low, c.eval.hist_high}},
        {"sweep_k", c.eval.sweep_k},
        {"sweep_weights", c.eval.sweep_weights},
        {"timing_pairs", c.eval.timing_pairs},
        {"timing_rounds", c.eval.timing_rounds}}},
      {"seed", c.seed},
      {"out_dir", c.out_dir}};
}

inline void validate(const PipelineConfig& c) {
  if (c.corpus_path) {
    if (!std::filesystem::exists(*c.corpus_path)) throw IoError("corpus file not found: " + *c.corpus_path);
  } else {
    require(c.synthetic_docs >= 1, "config: corpus.synthetic.n_docs must be >= 1");
  }
  require(c.train_fraction >= 0 && c.val_fraction >= 0 && c.test_fraction >= 0,
          "config: split fractions must be non-negative");
  require(std::abs(c.train_fraction + c.val_fraction + c.test_fraction - 1.0) <= 1e-9,
          "config: split fractions must sum to 1");
  for (const auto* g : {&c.generator_a, &c.generator_b}) {
    require(g->copy_weight >= 0 && g->copy_weight <= 1, "config: generator copy_weight outside [0,1]");
    require(g->smoothing > 0, "config: generator smoothing must be > 0");
  }
  validate(c.train_decoding);
  validate(c.infer_decoding);
  require(c.train_decoding.max_len == c.infer_decoding.max_len,
          "config: train and inference decoding must share max_len");
  require(!c.targets.empty(), "config: no target metrics");
  bool has_sweep = false;
  for (auto k : c.targets) has_sweep |= k == c.sweep_target;
  require(has_sweep, "config: sweep_target must be one of targets");
  TrainConfig t = c.train;
  validate(t);
  require(c.eval.alpha > 0 && c.eval.alpha < 1, "config: eval.alpha must be in (0,1)");
  require(c.eval.n_resamples >= 1, "config: eval.n_resamples must be >= 1");
  require(c.eval.hist_bins >= 1, "config: eval.hist_bins must be >= 1");
  require(c.eval.hist_low < c.eval.hist_high, "config: eval.hist_range is inverted");
  for (int k : c.eval.sweep_k) require(k >= 1 && k <= 32, "config: eval.sweep_k values must be in [1,32]");
  for (double w : c.eval.sweep_weights) require(w >= 0, "config: eval.sweep_weights must be non-negative");
  require(c.eval.timing_pairs >= 1, "config: eval.timing_pairs must be >= 1");
}

inline PipelineConfig config_from_json(const json& j) {
  try {
    PipelineConfig c;
    if (j.contains("corpus")) {
      const auto& cj = j.at("corpus");
      if (cj.contains("path")) {
        c.corpus_path = cj.at("path").get<std::string>();
      } else if (cj.contains("synthetic")) {
        c.synthetic_docs = cj.at("synthetic").value("n_docs", c.synthetic_docs);
        c.synthetic_seed = cj.at("synthetic").value("seed", c.synthetic_seed);
      }
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.train_fraction = s.value("train", c.train_fraction);
      c.val_fraction = s.value("val", c.val_fraction);
      c.test_fraction = s.value("test", c.test_fraction);
    }
    auto gen = [&](const char* key, GeneratorSpec& g) {
      if (!j.contains(key)) return;
      g.copy_weight = j.at(key).value("copy_weight", g.copy_weight);
      g.smoothing = j.at(key).value("smoothing", g.smoothing);
    };
    gen("generator_a", c.generator_a);
    gen("generator_b", c.generator_b);
    if (j.contains("train_decoding")) c.train_decoding = gen_config_from_json(j.at("train_decoding"), c.train_decoding);
    if (j.contains("infer_decoding")) c.infer_decoding = gen_config_from_json(j.at("infer_decoding"), c.infer_decoding);
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j.at("targets")) c.targets.push_back(parse_metric_kind(t.get<std::string>()));
    }
    if (j.contains("sweep_target")) c.sweep_target = parse_metric_kind(j.at("sweep_target").get<std::string>());
    if (j.contains("aligner")) c.aligner = parse_aligner_kind(j.at("aligner").get<std::string>());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.n_resamples = e.value("n_resamples", c.eval.n_resamples);
      c.eval.alpha = e.value("alpha", c.eval.alpha);
      c.eval.hist_bins = e.value("hist_bins", c.eval.hist_bins);
      if (e.contains("hist_range")) {
        c.eval.hist_low = e.at("hist_range").at(0).get<double>();
        c.eval.hist_high = e.at("hist_range").at(1).get<double>();
      }
      c.eval.sweep_k = e.value("sweep_k", c.eval.sweep_k);
      c.eval.sweep_weights = e.value("sweep_weights", c.eval.sweep_weights);
      c.eval.timing_pairs = e.value("timing_pairs", c.eval.timing_pairs);
      c.eval.timing_rounds = e.value("timing_rounds", c.eval.timing_rounds);
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.train.seed = c.train_seed();
    return c;
  } catch (const json::exception& e) {
    throw ContractError(std::string("bad config: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::string& path) { return config_from_json(read_json(path)); }

// 64-bit FNV-1a, hex encoded. Used for config and artifact fingerprints.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// The output directory says where artifacts go, not what they contain, so it
// is left out of the hash.
inline std::string config_hash(const PipelineConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  return fnv1a_hex(j.dump());
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-data", "train-lm",  "generate", "label",
                                              "train-ebr", "rerank",   "report",   "sweep-k",
                                              "sweep-div", "cross-model", "timing"};
  return names;
}

inline std::string metric_slug(MetricKind k) {
  switch (k) {
    case MetricKind::R1: return "R1";
    case MetricKind::R2: return "R2";
    case MetricKind::RL: return "RL";
    case MetricKind::Consistency: return "Cons";
    case MetricKind::Relevance: return "Rel";
    case MetricKind::ConsPlusRel: return "ConsPlusRel";
  }
  return "unknown";
}

inline std::string ebr_name(MetricKind k) { return "EBR[" + to_string(k) + "]"; }

// Selects labels for reference-free metrics without touching references.
inline std::vector<MetricLabels> compute_labels(MetricKind kind, const Corpus& docs,
                                                const std::vector<CandidateSet>& sets, AlignerKind aligner) {
  require(docs.size() == sets.size(), "label: corpus and candidate dump differ in size");
  std::vector<MetricLabels> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Document& d = docs.documents[i];
    require(d.id == sets[i].doc_id, "label: candidate dump out of order at '" + sets[i].doc_id + "'");
    const std::optional<TokenSeq> ref = is_reference_free(kind) ? std::nullopt : std::optional<TokenSeq>(d.reference);
    out.push_back({d.id, kind, metric_scores(kind, d.source, ref, sets[i], aligner)});
  }
  return out;
}

inline std::vector<RankedList> build_ranked_lists(const Corpus& docs, const std::vector<CandidateSet>& sets,
                                                  const std::vector<MetricLabels>& labels, const ConditionalLM& lm,
                                                  int max_len) {
  require(docs.size() == sets.size() && sets.size() == labels.size(), "train-ebr: input sizes differ");
  std::vector<RankedList> lists;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    require(sets[i].doc_id == docs.documents[i].id && labels[i].doc_id == sets[i].doc_id,
            "train-ebr: inputs out of order at '" + sets[i].doc_id + "'");
    require(labels[i].scores.size() == sets[i].candidates.size(), "train-ebr: label count mismatch");
    std::vector<FeatureVector> f;
    std::vector<double> lp;
    for (const auto& h : sets[i].candidates) {
      f.push_back(extract_features(docs.documents[i].source, h, lm, max_len));
      lp.push_back(h.logprob);
    }
    lists.push_back(make_ranked_list(sets[i].doc_id, std::move(f), labels[i].scores, std::move(lp)));
  }
  return lists;
}

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    hash_ = config_hash(cfg_);
  }

  const PipelineConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }

  std::string path(const std::string& name) const { return (std::filesystem::path(cfg_.out_dir) / name).string(); }

  void run_stage(const std::string& stage) {
    static const std::map<std::string, void (Pipeline::*)()> table{
        {"gen-data", &Pipeline::gen_data},   {"train-lm", &Pipeline::train_lms},
        {"generate", &Pipeline::generate_candidates}, {"label", &Pipeline::label},
        {"train-ebr", &Pipeline::train_ebr}, {"rerank", &Pipeline::rerank},
        {"report", &Pipeline::report},       {"sweep-k", &Pipeline::sweep_k},
        {"sweep-div", &Pipeline::sweep_div}, {"cross-model", &Pipeline::cross_model},
        {"timing", &Pipeline::timing}};
    auto it = table.find(stage);
    if (it == table.end()) throw ContractError("unknown stage: " + stage);
    written_.clear();
    (this->*(it->second))();
    write_manifest(stage);
  }

  void run_all() {
    for (const auto& s : stage_names()) run_stage(s);
  }

 private:
  PipelineConfig cfg_;
  std::string hash_;
  std::vector<std::pair<std::string, std::string>> written_;  // name, content hash

  void emit(const std::string& name, const std::string& content) {
    write_file(path(name), content);
    written_.emplace_back(name, fnv1a_hex(content));
  }
  void emit_jsonl(const std::string& name, const std::vector<json>& recs) {
    std::string s;
    for (const auto& r : recs) s += r.dump() + '\n';
    emit(name, s);
  }

  std::string need(const std::string& name) const {
    const std::string p = path(name);
    if (!std::filesystem::exists(p)) throw IoError("missing upstream artifact: " + p);
    return p;
  }

  void write_manifest(const std::string& stage) {
    json arts = json::object();
    for (const auto& [name, h] : written_) arts[name] = h;
    json m = {{"stage", stage}, {"tool_version", kToolVersion}, {"config_hash", hash_},
              {"seed", cfg_.seed},  {"artifacts", arts}};
    write_file(path("manifests/" + stage + ".json"), m.dump(2) + '\n');
  }

  Corpus split_part(const std::string& which) const { return load_corpus(need("split_" + which + ".jsonl")); }
  ConditionalLM lm(const std::string& which) const { return lm_from_json(read_json(need("lm_" + which + ".json"))); }
  std::vector<CandidateSet> candidates(const std::string& name) const { return load_candidates(need(name)); }
  EnergyModel model(MetricKind k) const {
    return model_from_json(read_json(need("model_" + metric_slug(k) + ".json")));
  }
  int max_len() const { return cfg_.infer_decoding.max_len; }

  // -- stages ---------------------------------------------------------------

  void gen_data() {
    Corpus corpus = cfg_.corpus_path ? load_corpus(*cfg_.corpus_path)
                                     : make_synthetic_corpus(cfg_.synthetic_docs, cfg_.synthetic_seed);
    auto [tr, va, te] = split_corpus(corpus, {cfg_.train_fraction, cfg_.val_fraction, cfg_.test_fraction,
                                              cfg_.split_seed()});
    require(!tr.empty(), "gen-data: training split is empty");
    require(!te.empty(), "gen-data: test split is empty");
    auto dump = [](const Corpus& c) {
      std::string s;
      for (const auto& d : c.documents)
        s += json{{"id", d.id}, {"source", join(d.source)}, {"reference", join(d.reference)}}.dump() + '\n';
      return s;
    };
    emit("corpus.jsonl", dump(corpus));
    emit("split_train.jsonl", dump(tr));
    emit("split_val.jsonl", dump(va));
    emit("split_test.jsonl", dump(te));
  }

  void train_lms() {
    const Corpus tr = split_part("train");
    emit("lm_a.json", to_json(train_lm(tr, cfg_.generator_a.copy_weight, cfg_.generator_a.smoothing)).dump() + '\n');
    emit("lm_b.json", to_json(train_lm(tr, cfg_.generator_b.copy_weight, cfg_.generator_b.smoothing)).dump() + '\n');
  }

  void generate_candidates() {
    const ConditionalLM a = lm("a");
    auto run = [&](const std::string& split, const GenConfig& g) {
      const Corpus c = split_part(split);
      std::vector<json> recs;
      for (const auto& d : c.documents) recs.push_back(to_json(generate(a, d, g)));
      emit_jsonl("cand_" + split + ".jsonl", recs);
    };
    run("train", cfg_.train_decoding);
    run("val", cfg_.train_decoding);
    run("test", cfg_.infer_decoding);
  }

  void label() {
    for (const std::string split : {"train", "val", "test"}) {
      const Corpus c = split_part(split);
      const auto sets = candidates("cand_" + split + ".jsonl");
      for (auto kind : cfg_.targets) {
        std::vector<json> recs;
        for (const auto& l : compute_labels(kind, c, sets, cfg_.aligner))
          recs.push_back({{"doc_id", l.doc_id}, {"kind", to_string(l.kind)}, {"scores", l.scores}});
        emit_jsonl("labels_" + split + "_" + metric_slug(kind) + ".jsonl", recs);
      }
    }
  }

  void train_ebr() {
    const ConditionalLM a = lm("a");
    const Corpus tr = split_part("train");
    const Corpus va = split_part("val");
    const auto ctr = candidates("cand_train.jsonl");
    const auto cva = candidates("cand_val.jsonl");
    for (auto kind : cfg_.targets) {
      const auto ltr = load_labels(need("labels_train_" + metric_slug(kind) + ".jsonl"));
      const auto lva = load_labels(need("labels_val_" + metric_slug(kind) + ".jsonl"));
      const auto train_lists = build_ranked_lists(tr, ctr, ltr, a, max_len());
      const auto val_lists = build_ranked_lists(va, cva, lva, a, max_len());
      const TrainResult r = train(train_lists, val_lists, cfg_.train);
      emit("model_" + metric_slug(kind) + ".json", to_json(r.model).dump(2) + '\n');
      std::string curve = "epoch,val_ndcg,selected\n";
      for (std::size_t e = 0; e < r.val_ndcg.size(); ++e)
        curve += std::to_string(e) + ',' + fmt_fixed(r.val_ndcg[e]) + ',' +
                 (static_cast<int>(e) == r.best_epoch ? "1" : "0") + '\n';
      emit("curve_" + metric_slug(kind) + ".csv", curve);
    }
  }

  void rerank() {
    const ConditionalLM a = lm("a");
    const Corpus te = split_part("test");
    const auto sets = candidates("cand_test.jsonl");
    require(sets.size() == te.size(), "rerank: candidate dump does not match test split");
    std::vector<EnergyModel> models;
    for (auto kind : cfg_.targets) models.push_back(model(kind));
    Rng rng(cfg_.random_seed());
    std::vector<RerankResult> out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const Document& d = te.documents[i];
      require(d.id == sets[i].doc_id, "rerank: candidate dump out of order");
      out.push_back(rerank_top_beam(sets[i]));
      out.push_back(rerank_random(sets[i], rng, cfg_.random_seed()));
      for (std::size_t m = 0; m < models.size(); ++m)
        out.push_back(rerank_ebr(models[m], d.source, sets[i], a, max_len(), ebr_name(cfg_.targets[m])));
      for (auto kind : cfg_.targets) out.push_back(rerank_oracle(kind, d.source, d.reference, sets[i], cfg_.aligner));
      out.push_back(rerank_reference_free(MetricKind::Consistency, d.source, sets[i], cfg_.aligner));
    }
    std::vector<json> recs;
    for (const auto& r : out)
      recs.push_back({{"doc_id", r.doc_id}, {"method", r.method}, {"chosen_index", r.chosen_index}, {"scores", r.scores}});
    emit_jsonl("rerank_test.jsonl", recs);
  }

  // System name -> per-document chosen summary, in rerank-dump order.
  std::vector<std::pair<std::string, std::map<std::string, TokenSeq>>> systems_from_dump(
      const std::vector<RerankRecord>& recs, const std::vector<CandidateSet>& sets) const {
    std::map<std::string, const CandidateSet*> by_id;
    for (const auto& s : sets) by_id[s.doc_id] = &s;
    std::vector<std::pair<std::string, std::map<std::string, TokenSeq>>> systems;
    std::map<std::string, std::size_t> pos;
    for (const auto& r : recs) {
      auto it = by_id.find(r.doc_id);
      require(it != by_id.end(), "report: rerank dump names unknown document '" + r.doc_id + "'");
      require(r.chosen_index < it->second->candidates.size(), "report: chosen index out of range");
      auto [p, inserted] = pos.emplace(r.method, systems.size());
      if (inserted) systems.push_back({r.method, {}});
      systems[p->second].second[r.doc_id] = it->second->candidates[r.chosen_index].tokens;
    }
    return systems;
  }

  static std::string display_name(const std::string& method) {
    return method.rfind("Random(", 0) == 0 ? "Random" : method;
  }

  void report() {
    const Corpus te = split_part("test");
    const auto sets = candidates("cand_test.jsonl");
    const auto recs = load_reranks(need("rerank_test.jsonl"));
    std::vector<SystemReport> reports;
    for (const auto& [method, choices] : systems_from_dump(recs, sets))
      reports.push_back(evaluate_system(display_name(method), choices, te, report_kinds(), cfg_.aligner));
    std::vector<SystemReport> targets_extra;  // own-target columns for each EBR system
    std::string csv = report_csv(reports);
    emit("report.csv", csv);
    emit("report.md", "# Test-set report\n\n" + report_markdown(reports) + "\nScores in percent; " +
                          std::to_string(te.size()) + " test documents, aligner " + to_string(cfg_.aligner) +
                          ".\n");

    auto find = [&](const std::string& name) -> const SystemReport& {
      for (const auto& r : reports)
        if (r.name == name) return r;
      throw ContractError("report: missing system " + name);
    };
    // Significance of each EBR system against the baselines.
    std::string sig = "system,baseline,metric,mean_system,mean_baseline,p_value,significant,exact,n_resamples\n";
    for (auto kind : cfg_.targets) {
      for (const std::string base : {"TopBeam", "Random"}) {
        const auto& s = find(ebr_name(kind));
        const auto& b = find(base);
        for (auto mk : report_kinds()) {
          const auto r = permutation_test(s.scores_of(mk), b.scores_of(mk), cfg_.eval.n_resamples, cfg_.eval.alpha,
                                          cfg_.test_seed());
          sig += s.name + ',' + base + ',' + to_string(mk) + ',' + fmt_fixed(s.mean_of(mk)) + ',' +
                 fmt_fixed(b.mean_of(mk)) + ',' + fmt_fixed(r.p_value) + ',' + (r.significant ? "1" : "0") + ',' +
                 (r.exact ? "1" : "0") + ',' + std::to_string(r.n_resamples) + '\n';
        }
      }
    }
    emit("significance.csv", sig);

    // Own-target scores (Cons+Rel is not a report column) and ranking quality.
    std::string own = "system,target,mean_target,mean_kendall_tau,n_lists\n";
    std::map<std::string, const CandidateSet*> by_id;
    for (const auto& s : sets) by_id[s.doc_id] = &s;
    for (auto kind : cfg_.targets) {
      const auto labels = load_labels(need("labels_test_" + metric_slug(kind) + ".jsonl"));
      std::map<std::string, const MetricLabels*> lab;
      for (const auto& l : labels) lab[l.doc_id] = &l;
      for (const auto& rec_kind : cfg_.targets) {
        const std::string name = ebr_name(rec_kind);
        double sum = 0, tau_sum = 0;
        std::size_t n = 0, n_tau = 0;
        for (const auto& r : recs) {
          if (r.method != name) continue;
          const auto* l = lab.at(r.doc_id);
          sum += l->scores[r.chosen_index];
          ++n;
          std::vector<double> neg;
          for (double e : r.scores) neg.push_back(-e);
          const double t = kendall_tau_b(neg, l->scores);
          if (!std::isnan(t)) {
            tau_sum += t;
            ++n_tau;
          }
        }
        own += name + ',' + to_string(kind) + ',' + fmt_fixed(n ? sum / static_cast<double>(n) : 0.0) + ',' +
               fmt_fixed(n_tau ? tau_sum / static_cast<double>(n_tau) : 0.0) + ',' + std::to_string(n_tau) + '\n';
      }
    }
    emit("own_target.csv", own);

    for (auto kind : cfg_.targets) {
      std::vector<double> chosen;
      for (const auto& r : recs)
        if (r.method == ebr_name(kind)) chosen.push_back(r.scores[r.chosen_index]);
      emit("hist_" + metric_slug(kind) + ".csv",
           histogram_csv(energy_histogram(chosen, cfg_.eval.hist_bins, cfg_.eval.hist_low, cfg_.eval.hist_high)));
    }
  }

  void sweep_k() {
    const ConditionalLM a = lm("a");
    const Corpus te = split_part("test");
    const auto rows = candidate_sweep(model(cfg_.sweep_target), a, te, cfg_.eval.sweep_k, cfg_.sweep_target,
                                      cfg_.aligner, cfg_.infer_decoding);
    emit("sweep_k.csv", selection_csv("k", rows));
  }

  void sweep_div() {
    const ConditionalLM a = lm("a");
    Corpus docs = split_part("val");
    if (docs.empty()) docs = split_part("test");
    GenConfig g = cfg_.train_decoding;
    const auto rows = diversity_sweep(a, docs, cfg_.eval.sweep_weights, model(cfg_.sweep_target),
                                      cfg_.sweep_target, cfg_.aligner, g);
    emit("sweep_div.csv", selection_csv("diversity_weight", rows));
  }

  void cross_model() {
    const ConditionalLM a = lm("a");
    const ConditionalLM b = lm("b");
    const Corpus te = split_part("test");
    const MetricKind target = cfg_.sweep_target;
    std::vector<MetricKind> kinds = report_kinds();
    bool has_target = false;
    for (auto k : kinds) has_target |= k == target;
    if (!has_target) kinds.push_back(target);
    const EnergyModel m = model(target);
    const CrossModelResult r = cross_model_eval(m, a, b, te, kinds, cfg_.aligner, cfg_.infer_decoding, ebr_name(target));

    // Seeded random choice among B's candidates, for the transfer check.
    Rng rng(mix_seed(cfg_.random_seed(), 0xb));
    std::vector<RerankResult> rnd;
    std::vector<double> chosen_energy;
    for (std::size_t i = 0; i < te.size(); ++i) {
      const CandidateSet set = generate(b, te.documents[i], cfg_.infer_decoding);
      rnd.push_back(rerank_random(set, rng, cfg_.random_seed()));
      chosen_energy.push_back(r.ebr_choices[i].scores[r.ebr_choices[i].chosen_index]);
    }
    const SystemReport random = evaluate_system("B:Random", choices_of(rnd), te, kinds, cfg_.aligner);
    emit("cross_model.csv", report_csv({r.top_beam, r.ebr, random}));

    std::string sig = "system,baseline,metric,mean_system,mean_baseline,p_value,significant\n";
    for (const auto* base : {&r.top_beam, &random}) {
      const auto t = permutation_test(r.ebr.scores_of(target), base->scores_of(target), cfg_.eval.n_resamples,
                                      cfg_.eval.alpha, cfg_.test_seed());
      sig += r.ebr.name + ',' + base->name + ',' + to_string(target) + ',' + fmt_fixed(r.ebr.mean_of(target)) + ',' +
             fmt_fixed(base->mean_of(target)) + ',' + fmt_fixed(t.p_value) + ',' + (t.significant ? "1" : "0") + '\n';
    }
    emit("cross_model_significance.csv", sig);
    emit("hist_cross_" + metric_slug(target) + ".csv",
         histogram_csv(energy_histogram(chosen_energy, cfg_.eval.hist_bins, cfg_.eval.hist_low, cfg_.eval.hist_high)));
  }

  void timing() {
    const ConditionalLM a = lm("a");
    const Corpus te = split_part("test");
    const auto sets = candidates("cand_test.jsonl");
    std::vector<TimingPair> pairs;
    const auto want = static_cast<std::size_t>(cfg_.eval.timing_pairs);
    // Cycle through documents so the pairs span the whole test split.
    for (std::size_t round = 0; pairs.size() < want; ++round) {
      bool any = false;
      for (std::size_t i = 0; i < sets.size() && pairs.size() < want; ++i) {
        if (round < sets[i].candidates.size()) {
          pairs.push_back({&te.documents[i].source, sets[i].candidates[round]});
          any = true;
        }
      }
      if (!any) break;
    }
    const auto rows = timing_report(model(cfg_.sweep_target), a, pairs, max_len(), cfg_.eval.timing_rounds);
    emit("timing.csv", timing_csv(rows, pairs.size()));
  }
};

}  // namespace sumebr
