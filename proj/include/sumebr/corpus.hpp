#pragma once

// Documents, tokenization, corpus files and the synthetic fact corpus.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "sumebr/error.hpp"
#include "sumebr/rng.hpp"

namespace sumebr {

// Lowercase tokens, no empty strings, no whitespace. BOS/EOS are not stored.
using TokenSeq = std::vector<std::string>;

struct Document {
  std::string id;
  TokenSeq source;
  TokenSeq reference;
};

struct Corpus {
  std::string name;
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

inline std::string join(const TokenSeq& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

namespace detail {

inline bool is_detached_punct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';':
    case ':': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// Length in bytes of a UTF-8 whitespace sequence starting at s[i], or 0.
inline std::size_t whitespace_len(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f')
    return 1;
  auto at = [&](std::size_t k) {
    return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0u;
  };
  if (c == 0xC2 && (at(1) == 0x85 || at(1) == 0xA0)) return 2;  // NEL, NBSP
  if (c == 0xE1 && at(1) == 0x9A && at(2) == 0x80) return 3;     // U+1680
  if (c == 0xE2 && at(1) == 0x80) {
    const auto t = at(2);
    if ((t >= 0x80 && t <= 0x8A) || t == 0xA8 || t == 0xA9 || t == 0xAF) return 3;
  }
  if (c == 0xE2 && at(1) == 0x81 && at(2) == 0x9F) return 3;  // U+205F
  if (c == 0xE3 && at(1) == 0x80 && at(2) == 0x80) return 3;  // U+3000
  return 0;
}

inline void split_chunk(std::string_view chunk, TokenSeq& out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const char c = chunk[i];
    if (is_detached_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else if (c == '\'') {
      const bool internal = !word.empty() && i + 1 < chunk.size() &&
                            !is_detached_punct(chunk[i + 1]) && chunk[i + 1] != '\'';
      if (internal) {
        word += c;
      } else {
        flush();
        out.emplace_back(1, c);
      }
    } else {
      const auto u = static_cast<unsigned char>(c);
      word += (u < 0x80) ? static_cast<char>(std::tolower(u)) : c;
    }
  }
  flush();
}

}  // namespace detail

inline TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::size_t w = detail::whitespace_len(text, i)) {
      if (i > start) detail::split_chunk(text.substr(start, i - start), out);
      i += w;
      start = i;
    } else {
      ++i;
    }
  }
  if (start < text.size()) detail::split_chunk(text.substr(start), out);
  return out;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  Corpus corpus;
  corpus.name = path;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractError(where + ": malformed JSON: " + e.what());
    }
    if (!rec.is_object()) throw ContractError(where + ": record is not a JSON object");
    auto field = [&](const char* name) {
      auto it = rec.find(name);
      if (it == rec.end())
        throw ContractError(where + ": missing field '" + name + "'");
      if (!it->is_string())
        throw ContractError(where + ": field '" + name + "' must be a string");
      return it->get<std::string>();
    };
    Document doc;
    doc.id = field("id");
    doc.source = tokenize(field("source"));
    doc.reference = tokenize(field("reference"));
    if (doc.source.empty()) throw ContractError(where + ": empty source in '" + doc.id + "'");
    if (doc.reference.empty())
      throw ContractError(where + ": empty reference in '" + doc.id + "'");
    if (!seen.insert(doc.id).second)
      throw ContractError(where + ": duplicate id '" + doc.id + "'");
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& d : corpus.documents) {
    nlohmann::json rec = {{"id", d.id}, {"source", join(d.source)}, {"reference", join(d.reference)}};
    out << rec.dump() << '\n';
  }
}

// Returns (train, val, test). Parts keep the relative order of the input.
inline std::tuple<Corpus, Corpus, Corpus> split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  require(!corpus.empty(), "split_corpus: empty corpus");
  require(spec.train_fraction >= 0 && spec.val_fraction >= 0 && spec.test_fraction >= 0,
          "split_corpus: fractions must be non-negative");
  require(std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) <= 1e-9,
          "split_corpus: fractions must sum to 1");
  const std::size_t n = corpus.size();
  // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
  auto part = [n](double f) {
    return std::min(n, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t n_val = part(spec.val_fraction);
  const std::size_t n_test = std::min(n - n_val, part(spec.test_fraction));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle(std::span<std::size_t>(order), rng);

  std::vector<int> assign(n, 0);
  for (std::size_t i = 0; i < n_val; ++i) assign[order[i]] = 1;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) assign[order[i]] = 2;

  Corpus parts[3];
  const char* suffix[3] = {"/train", "/val", "/test"};
  for (int p = 0; p < 3; ++p) parts[p].name = corpus.name + suffix[p];
  for (std::size_t i = 0; i < n; ++i) parts[assign[i]].documents.push_back(corpus.documents[i]);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

namespace detail {

struct FactPools {
  std::vector<std::string> persons{
      "alice", "bruno", "chen",  "dmitri", "elena", "farid", "greta",  "hiro",   "ingrid",
      "jamal", "kofi",  "lena",  "marco",  "nadia", "oscar", "priya",  "quinn",  "rosa",
      "sven",  "tara",  "umar",  "vera",   "wei",   "ximena", "yusuf", "zara",   "anton",
      "bianca", "carlos", "dara", "emil",  "fiona", "goran", "hana",   "ivan",   "julia"};
  std::vector<std::string> orgs{"council", "ministry", "university", "hospital", "bank",
                                "union",   "agency",   "committee",  "museum",   "court",
                                "police",  "airline",  "charity",    "studio",   "league"};
  std::vector<std::string> places{"paris", "lagos", "lima",  "oslo",   "cairo", "delhi",  "quito",
                                  "tokyo", "berlin", "nairobi", "madrid", "seoul", "dublin",
                                  "hanoi", "accra", "perth", "riga",   "boston", "denver", "porto"};
  std::vector<std::string> actions{"opened",    "closed", "approved", "rejected", "announced",
                                   "launched",  "sold",   "bought",   "repaired", "inspected",
                                   "funded",    "cancelled", "delivered", "signed", "tested"};
  std::vector<std::string> objects{"bridge",  "school",  "contract", "plan",     "budget",  "factory",
                                   "stadium", "library", "vaccine",  "report",   "railway", "tower",
                                   "festival", "program", "harbor",  "market",   "airport", "park"};
  std::vector<std::string> days{"monday", "tuesday",  "wednesday", "thursday",
                                "friday", "saturday", "sunday"};
  std::vector<std::string> moods{"cold", "sunny", "busy", "quiet", "crowded", "rainy", "calm"};
};

inline const FactPools& fact_pools() {
  static const FactPools pools;
  return pools;
}

struct Fact {
  std::string person, org, action, object, place, day, number;
};

// Draws from `pool` avoiding values already in `used`.
inline std::string draw_fresh(const std::vector<std::string>& pool, std::set<std::string>& used,
                              Rng& rng) {
  for (;;) {
    const auto& v = pool[uniform_index(rng, pool.size())];
    if (used.insert(v).second) return v;
  }
}

inline Fact draw_fact(std::set<std::string>& used, Rng& rng) {
  const auto& p = fact_pools();
  Fact f;
  f.person = draw_fresh(p.persons, used, rng);
  f.org = draw_fresh(p.orgs, used, rng);
  f.action = p.actions[uniform_index(rng, p.actions.size())];
  f.object = draw_fresh(p.objects, used, rng);
  f.place = draw_fresh(p.places, used, rng);
  f.day = p.days[uniform_index(rng, p.days.size())];
  f.number = std::to_string(2 + uniform_index(rng, 98));
  return f;
}

inline void append(TokenSeq& out, std::initializer_list<std::string_view> words) {
  for (auto w : words) out.emplace_back(w);
}

inline void lead_sentence(const Fact& f, TokenSeq& out) {
  append(out, {f.person, "of", "the", f.org, f.action, "the", f.object, "in", f.place, "on",
               f.day, "."});
}

inline void detail_sentence(const Fact& f, int variant, TokenSeq& out) {
  if (variant == 0)
    append(out, {"the", f.object, "cost", f.number, "million", ",", f.person, "said", "."});
  else
    append(out, {f.person, "said", "the", f.object, "would", "serve", f.number, "thousand",
                 "people", "."});
}

inline void distractor_sentence(std::set<std::string>& used, Rng& rng, TokenSeq& out) {
  const auto& p = fact_pools();
  if (uniform_index(rng, 2) == 0) {
    Fact d = draw_fact(used, rng);
    append(out, {d.person, "of", "the", d.org, d.action, "a", d.object, "in", d.place,
                 "last", "year", "."});
  } else {
    const auto& place = draw_fresh(p.places, used, rng);
    append(out, {"the", "weather", "in", place, "was", p.moods[uniform_index(rng, p.moods.size())],
                 "on", p.days[uniform_index(rng, p.days.size())], "."});
  }
}

}  // namespace detail

// Each document describes one main fact (lead sentence plus one or two
// detail sentences), optionally a secondary fact, and 1-3 distractor
// sentences about unrelated entities. The reference compresses the main
// lead sentence and sometimes one more fact, using only tokens of the
// source. Entities are drawn from global pools, so a generator trained on
// many documents can emit entities that are absent from a given source.
inline Corpus make_synthetic_corpus(std::size_t n_docs, std::uint64_t seed) {
  require(n_docs >= 1, "make_synthetic_corpus: n_docs must be >= 1");
  Corpus corpus;
  corpus.name = "synthetic-" + std::to_string(seed);
  Rng rng(mix_seed(seed, 0x5eed));
  const std::size_t width = std::to_string(n_docs - 1).size();
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::set<std::string> used;
    const detail::Fact main = detail::draw_fact(used, rng);
    const bool second = uniform_index(rng, 2) == 1;
    detail::Fact other;
    if (second) other = detail::draw_fact(used, rng);
    const int n_main_details = 1 + static_cast<int>(uniform_index(rng, 2));
    // 4-8 source sentences in total, at least one distractor.
    const int base = 1 + n_main_details + (second ? 2 : 0);
    const int lo = std::max(1, 4 - base);
    const int hi = std::min(3, 8 - base);
    const int n_distract = lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));

    Document doc;
    std::string num = std::to_string(i);
    doc.id = "syn-" + std::string(width - num.size(), '0') + num;

    // Sentence plan: main lead first, details, then the secondary fact and
    // distractors in random order.
    detail::lead_sentence(main, doc.source);
    const int first_variant = static_cast<int>(uniform_index(rng, 2));
    for (int d = 0; d < n_main_details; ++d)
      detail::detail_sentence(main, (first_variant + d) % 2, doc.source);
    std::vector<int> rest;
    if (second) rest.push_back(-1);
    for (int d = 0; d < n_distract; ++d) rest.push_back(d);
    shuffle(std::span<int>(rest), rng);
    int other_variant = static_cast<int>(uniform_index(rng, 2));
    for (int r : rest) {
      if (r == -1) {
        detail::lead_sentence(other, doc.source);
        detail::detail_sentence(other, other_variant, doc.source);
      } else {
        detail::distractor_sentence(used, rng, doc.source);
      }
    }

    detail::append(doc.reference, {main.person, main.action, "the", main.object, "in", main.place, "."});
    if (second && uniform_index(rng, 2) == 1) {
      detail::append(doc.reference, {other.person, other.action, "the", other.object, "."});
    } else if (uniform_index(rng, 2) == 1) {
      const bool cost = first_variant == 0 || n_main_details == 2;
      if (cost)
        detail::append(doc.reference, {"the", main.object, "cost", main.number, "million", "."});
      else
        detail::append(doc.reference, {"the", main.object, "would", "serve", main.number,
                                       "thousand", "people", "."});
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace sumebr
