// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "sumebr/pipeline.hpp"

using namespace sumebr;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) { return fmt_fixed(v, digits); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

using CsvRow = std::vector<std::string>;
std::vector<CsvRow> read_csv(const fs::path& p) {
  std::istringstream in(read_file(p.string()));
  std::vector<CsvRow> rows;
  for (std::string line; std::getline(in, line);) {
    CsvRow row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

const CsvRow& find_row(const std::vector<CsvRow>& rows, const std::function<bool(const CsvRow&)>& pred) {
  for (const auto& r : rows)
    if (pred(r)) return r;
  throw ContractError("acceptance: expected row not found");
}

std::size_t column(const std::vector<CsvRow>& rows, const std::string& name) {
  const auto& h = rows.at(0);
  auto it = std::find(h.begin(), h.end(), name);
  if (it == h.end()) throw ContractError("acceptance: missing column " + name);
  return static_cast<std::size_t>(it - h.begin());
}

// ---------------------------------------------------------------------------

void permutation_mass() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0;
  const double taus[] = {0.5, 1.0, 2.0};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(uniform_index(rng, 5));
    const double tau = taus[uniform_index(rng, 3)];
    std::vector<double> e(k);
    for (auto& v : e) v = uniform(rng, -4, 4);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double total = 0;
    do {
      std::vector<double> ordered;
      for (auto i : perm) ordered.push_back(e[i]);
      total += permutation_likelihood(ordered, tau);
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-9 && secs < 5.0,
         "200 lists, max |sum - 1| = " + sci(worst) + ", " + fmt(secs, 3) + " s");
}

void loss_coherence() {
  Rng rng(202);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(uniform_index(rng, 7));
    EnergyModel m;
    for (auto& t : m.net.theta) t = uniform(rng, -0.6, 0.6);
    std::vector<FeatureVector> f(k);
    std::vector<double> g(k), lp(k);
    for (std::size_t i = 0; i < k; ++i) {
      for (auto& v : f[i]) v = uniform(rng, -2, 2);
      g[i] = uniform01(rng);
      lp[i] = -uniform(rng, 1, 9);
    }
    const auto list = make_ranked_list("c", f, g, lp);
    const double tau = uniform(rng, 0.25, 4.0);
    const double loss = listmle_loss(m, list, tau);
    const double ll = permutation_likelihood(energies_in_target_order(m, list), tau);
    worst = std::max(worst, std::abs(loss + std::log(ll)));
  }
  RankedList eq;
  eq.doc_id = "eq";
  eq.features.assign(3, FeatureVector{});
  eq.gains = {3, 2, 1};
  eq.logprobs = {0, 0, 0};
  eq.target_order = {0, 1, 2};
  const double l3 = listmle_loss(EnergyModel{}, eq, 1.0);
  const bool ok = worst <= 1e-9 && l3 == std::log(6.0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "1000 cases, max |loss + log P| = %.3g; equal energies k=3 -> %.15f (ln 6 = %.15f)",
                worst, l3, std::log(6.0));
  report(2, ok, buf);
}

void gradient_check() {
  Rng rng(303);
  const double h = 1e-5;
  double worst = 0;
  bool bias_ok = true;
  const int draws = 120;
  for (int d = 0; d < draws; ++d) {
    EnergyModel m;
    for (auto& t : m.net.theta) t = uniform(rng, -0.5, 0.5);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      m.mean[i] = uniform(rng, -0.5, 0.5);
      m.stddev[i] = uniform(rng, 0.5, 2.0);
    }
    const std::size_t k = 2 + static_cast<std::size_t>(uniform_index(rng, 7));
    std::vector<FeatureVector> f(k);
    std::vector<double> g(k), lp(k);
    for (std::size_t i = 0; i < k; ++i) {
      for (auto& v : f[i]) v = uniform(rng, -2, 2);
      g[i] = uniform01(rng);
      lp[i] = -uniform(rng, 1, 9);
    }
    const auto list = make_ranked_list("g", f, g, lp);
    const double tau = uniform(rng, 0.5, 2.0);
    const auto grad = listmle_gradient(m, list, tau).grad;
    for (std::size_t p = 0; p < kNumParams; ++p) {
      const double saved = m.net.theta[p];
      m.net.theta[p] = saved + h;
      const double up = listmle_loss(m, list, tau);
      m.net.theta[p] = saved - h;
      const double down = listmle_loss(m, list, tau);
      m.net.theta[p] = saved;
      const double fd = (up - down) / (2 * h);
      if (p == kNumParams - 1) {
        // Output bias: the loss sees only energy differences, so the exact
        // derivative is zero and only an absolute check is meaningful.
        bias_ok &= std::abs(grad.theta[p]) <= 1e-12 && std::abs(fd) <= 1e-8;
        continue;
      }
      const double rel = std::abs(fd - grad.theta[p]) / std::max({std::abs(fd), std::abs(grad.theta[p]), 1e-7});
      worst = std::max(worst, rel);
    }
  }
  report(3, worst <= 1e-4 && bias_ok,
         std::to_string(draws) + " draws x " + std::to_string(kNumParams - 1) + " params, max relative error " +
             sci(worst) + "; output-bias derivative zero: " + (bias_ok ? "yes" : "no"));
}

void decoder_equivalence() {
  const Corpus corpus = make_synthetic_corpus(100, 303);
  const ConditionalLM lm = train_lm(corpus, 0.5, 0.01);
  std::size_t identical = 0;
  for (const auto& d : corpus.documents) {
    GenConfig g{8, 4, 0.0, 30, 8, 4};
    const auto a = diverse_beam_search(lm, d.source, g);
    const auto b = beam_search(lm, d.source, g);
    bool same = a.candidates.size() == b.candidates.size();
    for (std::size_t i = 0; same && i < a.candidates.size(); ++i)
      same = a.candidates[i].tokens == b.candidates[i].tokens &&
             std::memcmp(&a.candidates[i].logprob, &b.candidates[i].logprob, sizeof(double)) == 0 &&
             a.candidates[i].finished == b.candidates[i].finished;
    identical += same;
  }

  Rng rng(404);
  int exact = 0;
  const int cases = 100;
  for (int c = 0; c < cases; ++c) {
    const std::vector<std::vector<std::string>> vocabs{{"a", "b"}, {"a", "b", "c"}, {"a", "b", "c", "d"}};
    auto t = oracle::tiny_case(rng, vocabs[uniform_index(rng, 3)], uniform01(rng), 0.05 + uniform01(rng));
    const int max_len = 1 + static_cast<int>(uniform_index(rng, 4));
    const int min_len = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_len)));
    const auto all = oracle::exhaustive(t.lm, t.x, max_len, min_len);
    // More beams than there are prefixes of any length.
    const auto set = beam_search(t.lm, t.x, GenConfig{2048, 1, 0.0, max_len, 1, min_len});
    exact += set.candidates.size() == 1 && set.candidates[0].tokens == all[0].tokens &&
             std::abs(set.candidates[0].logprob - all[0].logprob) <= 1e-12;
  }
  report(4, identical == corpus.size() && exact == cases,
         "zero-weight DBS bit-identical on " + std::to_string(identical) + "/100 docs; wide beam = exhaustive argmax on " +
             std::to_string(exact) + "/" + std::to_string(cases) + " tiny LMs");
}

// ---------------------------------------------------------------------------
// Pipeline-level criteria

struct Systems {
  Corpus test;
  std::vector<CandidateSet> sets;
  std::vector<RerankRecord> reranks;
  std::map<std::string, std::vector<const RerankRecord*>> by_method;  // in test order
};

Systems load_systems(const fs::path& dir) {
  Systems s;
  s.test = load_corpus((dir / "split_test.jsonl").string());
  s.sets = load_candidates((dir / "cand_test.jsonl").string());
  s.reranks = load_reranks((dir / "rerank_test.jsonl").string());
  for (const auto& r : s.reranks) {
    const std::string key = r.method.rfind("Random(", 0) == 0 ? "Random" : r.method;
    s.by_method[key].push_back(&r);
  }
  return s;
}

// Per-document target metric of a system's choices, from the label dumps.
std::vector<double> chosen_labels(const Systems& s, const std::vector<MetricLabels>& labels,
                                  const std::string& method) {
  std::vector<double> out;
  const auto& recs = s.by_method.at(method);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (labels[i].doc_id != recs[i]->doc_id) throw ContractError("acceptance: label order mismatch");
    out.push_back(labels[i].scores[recs[i]->chosen_index]);
  }
  return out;
}

double avg(const std::vector<double>& v) { return mean(v); }

void pipeline_criteria(const fs::path& config_path) {
  const fs::path root = fs::temp_directory_path() / "sumebr_acceptance";
  fs::remove_all(root);
  json j = read_json(config_path.string());

  const auto t0 = std::chrono::steady_clock::now();
  j["out_dir"] = (root / "run1").string();
  Pipeline(config_from_json(j)).run_all();
  const double run_secs = seconds_since(t0);
  j["out_dir"] = (root / "run2").string();
  Pipeline(config_from_json(j)).run_all();

  const fs::path dir = root / "run1";
  const PipelineConfig cfg = config_from_json(j);
  const Systems s = load_systems(dir);
  const auto rl = load_labels((dir / "labels_test_RL.jsonl").string());
  const auto cr = load_labels((dir / "labels_test_ConsPlusRel.jsonl").string());

  // 5: distillation of ROUGE-L.
  {
    double tau_sum = 0;
    std::size_t n_tau = 0;
    const auto& recs = s.by_method.at("EBR[RL]");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      std::vector<double> neg;
      for (double e : recs[i]->scores) neg.push_back(-e);
      const double t = kendall_tau_b(neg, rl[i].scores);
      if (!std::isnan(t)) {
        tau_sum += t;
        ++n_tau;
      }
    }
    const double tau = tau_sum / static_cast<double>(n_tau);
    const auto ebr = chosen_labels(s, rl, "EBR[RL]");
    const auto top = chosen_labels(s, rl, "TopBeam");
    const auto sig = permutation_test(ebr, top, cfg.eval.n_resamples, cfg.eval.alpha, cfg.test_seed());
    const double diff = avg(ebr) - avg(top);
    report(5, tau >= 0.4 && diff > 0 && sig.significant && run_secs < 300,
           "Kendall tau " + fmt(tau) + " over " + std::to_string(n_tau) + " lists; RL(EBR) - RL(TopBeam) = " +
               fmt(diff) + ", p = " + fmt(sig.p_value) + "; pipeline " + fmt(run_secs, 1) + " s on " +
               std::to_string(s.test.size()) + " test docs");
  }

  // 6: own-metric dominance.
  {
    const double rl_rl = avg(chosen_labels(s, rl, "EBR[RL]"));
    const double rl_cr = avg(chosen_labels(s, rl, "EBR[Cons+Rel]"));
    const double cr_cr = avg(chosen_labels(s, cr, "EBR[Cons+Rel]"));
    const double cr_rl = avg(chosen_labels(s, cr, "EBR[RL]"));
    report(6, rl_rl > rl_cr && cr_cr > cr_rl,
           "RL: EBR[RL] " + fmt(rl_rl) + " vs EBR[Cons+Rel] " + fmt(rl_cr) + "; Cons+Rel: EBR[Cons+Rel] " +
               fmt(cr_cr) + " vs EBR[RL] " + fmt(cr_rl));
  }

  // 7: Oracle >= EBR >= Random per target.
  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, labels] : {std::pair<std::string, const std::vector<MetricLabels>*>{"RL", &rl},
                                       {"Cons+Rel", &cr}}) {
      const auto o = chosen_labels(s, *labels, "Oracle[" + name + "]");
      const auto e = chosen_labels(s, *labels, "EBR[" + name + "]");
      const auto r = chosen_labels(s, *labels, "Random");
      std::size_t violations = 0;
      for (std::size_t i = 0; i < o.size(); ++i) violations += o[i] < e[i];
      ok &= avg(o) >= avg(e) && avg(e) >= avg(r) && violations == 0;
      detail += name + ": " + fmt(avg(o)) + " >= " + fmt(avg(e)) + " >= " + fmt(avg(r)) + " (" +
                std::to_string(violations) + " per-doc violations); ";
    }
    report(7, ok, detail);
  }

  // 8: candidate sweep over nested k.
  {
    const EnergyModel model = model_from_json(read_json((dir / "model_RL.json").string()));
    const ConditionalLM lm = lm_from_json(read_json((dir / "lm_a.json").string()));
    const auto rows =
        candidate_sweep(model, lm, s.test, {4, 8, 16, 32}, MetricKind::RL, cfg.aligner, cfg.infer_decoding);
    std::size_t non_monotone = 0;
    for (std::size_t r = 1; r < rows.size(); ++r)
      for (std::size_t d = 0; d < s.test.size(); ++d) non_monotone += rows[r].oracle[d] < rows[r - 1].oracle[d];
    bool means_ok = true;
    std::string detail = "oracle means";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      detail += " " + fmt(rows[r].oracle_mean());
      if (r) means_ok &= rows[r].oracle_mean() >= rows[r - 1].oracle_mean();
    }
    const double e4 = rows.front().ebr_mean(), e32 = rows.back().ebr_mean();
    report(8, non_monotone == 0 && means_ok && e32 >= e4 - 0.01,
           detail + " (" + std::to_string(non_monotone) + " per-doc decreases); EBR k=4 " + fmt(e4) + ", k=32 " +
               fmt(e32));
  }

  // 9: cross-model transfer.
  {
    const auto rows = read_csv(dir / "cross_model.csv");
    const auto col = column(rows, "RL");
    auto mean_for = [&](const std::string& sys) {
      return std::stod(find_row(rows, [&](const CsvRow& r) { return r.at(0) == sys; }).at(col));
    };
    const double top = mean_for("B:TopBeam"), ebr = mean_for("B:EBR[RL]"), rnd = mean_for("B:Random");
    const auto sig = read_csv(dir / "cross_model_significance.csv");
    const auto& vs_random = find_row(sig, [](const CsvRow& r) { return r.at(1) == "B:Random"; });
    const double p = std::stod(vs_random.at(column(sig, "p_value")));
    report(9, ebr >= top - 0.005 && ebr > rnd && p < cfg.eval.alpha && s.test.size() >= 300,
           "generator B RL: EBR " + fmt(ebr) + ", TopBeam " + fmt(top) + ", Random " + fmt(rnd) +
               "; p(EBR vs Random) = " + fmt(p));
  }

  // 10: timing protocol.
  {
    const auto rows = read_csv(dir / "timing.csv");
    const auto sec = column(rows, "seconds"), rel = column(rows, "relative"), pairs = column(rows, "pairs");
    const auto& ebr = find_row(rows, [](const CsvRow& r) { return r.at(0) == "EBR"; });
    const auto& soft = find_row(rows, [](const CsvRow& r) { return r.at(0) == "Cons[SoftChar]"; });
    const auto& exact = find_row(rows, [](const CsvRow& r) { return r.at(0) == "Cons[Exact]"; });
    const double te = std::stod(ebr.at(sec)), ts = std::stod(soft.at(sec));
    report(10, std::stod(ebr.at(rel)) == 1.0 && std::stoi(ebr.at(pairs)) == 1000 && te <= ts,
           ebr.at(pairs) + " unbatched pairs: EBR 1.00, Cons[Exact] " + exact.at(rel) + ", Cons[SoftChar] " +
               soft.at(rel) + " (EBR throughput " + (te <= ts ? ">=" : "<") + " SoftChar)");
  }

  // 11: determinism.
  {
    std::vector<std::string> differing;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      const bool relevant = name.rfind("report", 0) == 0 || name.rfind("model_", 0) == 0 ||
                            name.rfind("hist_", 0) == 0 || name == "significance.csv" || name == "own_target.csv";
      if (!relevant) continue;
      ++compared;
      if (read_file(entry.path().string()) != read_file((root / "run2" / name).string())) differing.push_back(name);
    }
    std::string detail = std::to_string(compared) + " report/model/histogram files compared, " +
                         std::to_string(differing.size()) + " differ";
    for (const auto& d : differing) detail += " " + d;
    report(11, differing.empty() && compared >= 8, detail);
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(SUMEBR_DEFAULT_CONFIG);
  set_warnings_enabled(false);
  try {
    permutation_mass();
    loss_coherence();
    gradient_check();
    decoder_equivalence();
    pipeline_criteria(config);
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 100;
  }
  std::printf("%d criteria failed\n", failures);
  return failures;
}
