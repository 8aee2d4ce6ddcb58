#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msg/errors.hpp"
#include "msg/jsonl.hpp"
#include "msg/rng.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace msg::distractor {

namespace fs = std::filesystem;

// Per-target candidate pools with curated exclusion sets. An exclusion set
// lists the synonyms of a gold label that must never be offered as
// distractors for it.
class Thesaurus {
public:
  void set_pool(GroundingTarget target, std::vector<std::string> pool,
                std::map<std::string, std::vector<std::string>> exclusions = {}) {
    Entry e;
    e.pool = std::move(pool);
    for (auto& [gold, words] : exclusions) {
      std::set<std::string> norm;
      for (const auto& w : words) norm.insert(str::normalize_label(w));
      e.exclusions[str::normalize_label(gold)] = std::move(norm);
    }
    entries_[target] = std::move(e);
  }

  const std::vector<std::string>& pool(GroundingTarget target) const {
    static const std::vector<std::string> empty;
    auto it = entries_.find(target);
    return it == entries_.end() ? empty : it->second.pool;
  }

  bool excluded(GroundingTarget target, const std::string& gold,
                const std::string& candidate) const {
    auto it = entries_.find(target);
    if (it == entries_.end()) return false;
    auto ex = it->second.exclusions.find(str::normalize_label(gold));
    if (ex == it->second.exclusions.end()) return false;
    return ex->second.count(str::normalize_label(candidate)) > 0;
  }

  // One JSON document per target: {"target": ..., "pool": [...],
  // "exclusions": {gold: [...]}}.
  static Thesaurus load(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("thesaurus directory not found: " + dir.string());
    Thesaurus th;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      Json j = jsonl::read_json_file(file);
      auto target = target_from_string(j.at("target").get<std::string>());
      if (!target) throw MalformedFile(file.string() + ": unknown target");
      std::vector<std::string> pool = j.at("pool").get<std::vector<std::string>>();
      std::map<std::string, std::vector<std::string>> exclusions;
      if (j.contains("exclusions"))
        for (const auto& [k, v] : j.at("exclusions").items())
          exclusions[k] = v.get<std::vector<std::string>>();
      for (const auto& [gold, words] : exclusions) {
        std::string gn = str::normalize_label(gold);
        for (const auto& w : words)
          if (str::normalize_label(w) == gn)
            throw MalformedFile(file.string() + ": exclusion entry '" + w +
                                "' is string-equal to its key '" + gold + "'");
      }
      th.set_pool(*target, std::move(pool), std::move(exclusions));
    }
    return th;
  }

private:
  struct Entry {
    std::vector<std::string> pool;
    std::map<std::string, std::set<std::string>> exclusions;
  };
  std::map<GroundingTarget, Entry> entries_;
};

// ---- numeral handling -------------------------------------------------------

inline const std::vector<std::string>& numeral_words() {
  static const std::vector<std::string> words = {
      "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
      "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
      "seventeen", "eighteen", "nineteen", "twenty"};
  return words;
}

inline std::optional<long> numeral_value(std::string_view s) {
  std::string n = str::normalize_label(s);
  const auto& words = numeral_words();
  for (size_t i = 0; i < words.size(); ++i)
    if (words[i] == n) return static_cast<long>(i);
  if (n.empty()) return std::nullopt;
  for (char c : n)
    if (c < '0' || c > '9') return std::nullopt;
  return std::stol(n);
}

// Render `value` in the same surface form as `like` (digits or words).
inline std::string numeral_like(long value, std::string_view like) {
  bool digits = !like.empty() && like.front() >= '0' && like.front() <= '9';
  const auto& words = numeral_words();
  if (!digits && value >= 0 && value < static_cast<long>(words.size()))
    return words[static_cast<size_t>(value)];
  return std::to_string(value);
}

// ---- similarity scorers -------------------------------------------------------

// score(a, b) in [0, 1]; symmetric; 1 for identical inputs.
class SimilarityScorer {
public:
  virtual ~SimilarityScorer() = default;
  virtual std::string backend_id() const = 0;
  virtual double score(const std::string& a, const std::string& b) const = 0;
};

// Character-trigram cosine over normalized text. Offline and deterministic;
// the default backend for generation and tests.
class LexicalScorer : public SimilarityScorer {
public:
  std::string backend_id() const override { return "lexical"; }

  double score(const std::string& a, const std::string& b) const override {
    auto ga = grams(a);
    auto gb = grams(b);
    if (ga.empty() || gb.empty()) return 0.0;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [g, c] : ga) {
      na += static_cast<double>(c) * c;
      auto it = gb.find(g);
      if (it != gb.end()) dot += static_cast<double>(c) * it->second;
    }
    for (const auto& [g, c] : gb) nb += static_cast<double>(c) * c;
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  }

private:
  static std::map<std::string, int> grams(const std::string& s) {
    std::map<std::string, int> out;
    std::string padded = " " + str::normalize_label(s) + " ";
    size_t n = str::cp_length(padded);
    if (n < 3) {
      out[padded] = 1;
      return out;
    }
    for (size_t i = 0; i + 3 <= n; ++i) out[str::cp_substr(padded, i, i + 3)]++;
    return out;
  }
};

// Remote sentence-embedding backend. POSTs {"texts": [a, b]} and expects
// {"embeddings": [[...], [...]]}; the score is the embeddings' cosine mapped
// to [0, 1].
class RemoteScorer : public SimilarityScorer {
public:
  using Fetch = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

  explicit RemoteScorer(Fetch fetch) : fetch_(std::move(fetch)) {}

  std::string backend_id() const override { return "remote"; }

  double score(const std::string& a, const std::string& b) const override {
    auto embs = fetch_({a, b});
    if (embs.size() != 2 || embs[0].empty() || embs[0].size() != embs[1].size())
      throw ScorerUnavailable("embedding backend returned a malformed response");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < embs[0].size(); ++i) {
      dot += embs[0][i] * embs[1][i];
      na += embs[0][i] * embs[0][i];
      nb += embs[1][i] * embs[1][i];
    }
    if (na == 0 || nb == 0) return 0.0;
    double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    return (cosine + 1.0) / 2.0;
  }

private:
  Fetch fetch_;
};

// ---- sampling ----------------------------------------------------------------

// k distinct candidate labels for `gold`, drawn uniformly without replacement
// from the target pool minus gold and its exclusion set. Number golds prefer
// the +-5 numeral window before falling back to the whole pool.
inline std::vector<std::string> sample_candidates(const Thesaurus& thesaurus,
                                                  GroundingTarget target,
                                                  const std::string& gold, size_t k,
                                                  RngStream& rng) {
  const std::string gold_norm = str::normalize_label(gold);
  auto eligible_from = [&](const std::vector<std::string>& source) {
    std::vector<std::string> out;
    for (const auto& c : source) {
      if (str::normalize_label(c) == gold_norm) continue;
      if (thesaurus.excluded(target, gold, c)) continue;
      out.push_back(c);
    }
    return out;
  };

  std::vector<std::string> picked;
  if (target == GroundingTarget::Number) {
    if (auto value = numeral_value(gold)) {
      const bool digits = !gold.empty() && gold.front() >= '0' && gold.front() <= '9';
      std::vector<std::string> window;
      for (long v = std::max<long>(0, *value - 5); v <= *value + 5; ++v) {
        if (v == *value) continue;
        // word golds stay in the word-expressible range
        if (!digits && v > static_cast<long>(numeral_words().size()) - 1) continue;
        window.push_back(numeral_like(v, gold));
      }
      auto eligible = eligible_from(window);
      auto idx = rng.sample_indices(eligible.size(), std::min(k, eligible.size()));
      for (size_t i : idx) picked.push_back(eligible[i]);
      if (picked.size() >= k) return picked;
    }
  }

  auto eligible = eligible_from(thesaurus.pool(target));
  // Skip anything already picked (window draws for Number).
  std::set<std::string> seen;
  for (const auto& p : picked) seen.insert(str::normalize_label(p));
  std::vector<std::string> rest;
  for (auto& c : eligible) {
    std::string n = str::normalize_label(c);
    if (seen.count(n)) continue;
    // gold's surface form governs numeral rendering
    if (target == GroundingTarget::Number) {
      if (auto v = numeral_value(c)) {
        std::string surfaced = numeral_like(*v, gold);
        if (seen.count(str::normalize_label(surfaced))) continue;
        seen.insert(str::normalize_label(surfaced));
        rest.push_back(surfaced);
        continue;
      }
    }
    seen.insert(n);
    rest.push_back(c);
  }
  size_t need = k - picked.size();
  if (rest.size() < need)
    throw PoolTooSmall("target " + std::string(to_string(target)) + ": need " +
                       std::to_string(k) + " candidates for '" + gold + "', have " +
                       std::to_string(picked.size() + rest.size()));
  auto idx = rng.sample_indices(rest.size(), need);
  for (size_t i : idx) picked.push_back(rest[i]);
  return picked;
}

// Keep candidates scoring below `threshold` against the gold, order preserved.
inline std::vector<std::string> similarity_filter(const std::string& gold,
                                                  const std::vector<std::string>& candidates,
                                                  const SimilarityScorer& scorer,
                                                  double threshold) {
  std::vector<std::string> out;
  for (const auto& c : candidates)
    if (scorer.score(gold, c) < threshold) out.push_back(c);
  return out;
}

// n distinct labels drawn uniformly from the filtered candidates.
inline std::vector<std::string> select_distractors(const std::vector<std::string>& filtered,
                                                   size_t n, RngStream& rng) {
  if (filtered.size() < n)
    throw InsufficientDistractors("need " + std::to_string(n) + " distractors, have " +
                                  std::to_string(filtered.size()));
  std::vector<std::string> out;
  auto idx = rng.sample_indices(filtered.size(), n);
  for (size_t i : idx) out.push_back(filtered[i]);
  return out;
}

namespace detail {

inline bool starts_with_vowel_sound(std::string_view word) {
  if (word.empty()) return false;
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word.front())));
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

}  // namespace detail

// Substitute the code-point span of `description` with `replacement`, fixing
// up a preceding indefinite article for the new initial sound.
inline std::string negative_replace(const std::string& description,
                                    std::pair<size_t, size_t> span,
                                    const std::string& replacement) {
  size_t len = str::cp_length(description);
  if (span.first >= span.second || span.second > len)
    throw SpanOutOfBounds("span [" + std::to_string(span.first) + ", " +
                          std::to_string(span.second) + ") out of bounds for description of " +
                          std::to_string(len) + " code points");
  std::string original = str::cp_substr(description, span.first, span.second);
  if (str::normalize_label(original) == str::normalize_label(replacement))
    throw NoOpReplacement("replacement '" + replacement + "' equals the span text");

  std::string out = str::cp_splice(description, span.first, span.second, replacement);

  // a/an agreement for the word immediately before the replaced span
  std::string prefix = str::cp_substr(out, 0, span.first);
  size_t end = prefix.find_last_not_of(" \t");
  if (end != std::string::npos) {
    size_t start = prefix.find_last_of(" \t", end);
    start = start == std::string::npos ? 0 : start + 1;
    std::string word = prefix.substr(start, end - start + 1);
    std::string fixed;
    bool vowel = detail::starts_with_vowel_sound(replacement);
    if (word == "a" && vowel) fixed = "an";
    else if (word == "an" && !vowel) fixed = "a";
    else if (word == "A" && vowel) fixed = "An";
    else if (word == "An" && !vowel) fixed = "A";
    if (!fixed.empty())
      out = out.substr(0, start) + fixed + out.substr(end + 1);
  }
  return out;
}

}  // namespace msg::distractor
