#pragma once
// Detection query sets: the merged human-curated vocabulary, per-image
// N-gram queries extracted from alt-text, and score rescaling for the
// combined label space.

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ovpipe/core.hpp"
#include "ovpipe/wordlists.hpp"

namespace ovpipe {

// Lowercase, duplicate-free, plural-reduced class list, sorted for
// reproducibility.
struct CuratedVocabulary {
  std::vector<std::string> classes;
};

enum class QuerySource { curated, ngram };

inline const char* to_string(QuerySource s) {
  return s == QuerySource::curated ? "curated" : "ngram";
}

inline QuerySource query_source_from_string(std::string_view s) {
  if (s == "curated") return QuerySource::curated;
  if (s == "ngram") return QuerySource::ngram;
  throw std::invalid_argument("unknown query source: " + std::string(s));
}

struct QuerySet {
  std::string image_id;
  std::vector<std::string> queries;
  QuerySource source = QuerySource::ngram;
};

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// Splits on runs of ASCII whitespace, dropping empty tokens.
inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) tokens.emplace_back(s.substr(start, i - start));
  }
  return tokens;
}

// Merges class-name lists into one vocabulary: lowercase, dedupe, then
// drop every entry that is a trailing-"s" or trailing-"es" plural of
// another entry. Plural detection looks at the deduplicated set before
// any removal, so chains like dog/dogs/dogss are all reduced to "dog".
inline CuratedVocabulary merge_curated(
    const std::vector<std::vector<std::string>>& lists) {
  std::set<std::string> merged;
  for (const auto& list : lists) {
    for (const auto& name : list) {
      merged.insert(ascii_lower(name));
    }
  }
  std::set<std::string> remove;
  for (const auto& singular : merged) {
    for (const char* suffix : {"s", "es"}) {
      std::string plural = singular + suffix;
      if (merged.count(plural)) remove.insert(std::move(plural));
    }
  }
  CuratedVocabulary vocab;
  for (const auto& name : merged) {
    if (!remove.count(name)) vocab.classes.push_back(name);
  }
  return vocab;
}

// N-gram enumeration order. The query cap makes the order observable, so
// both useful conventions are supported:
//   window: sliding window — for each start position, lengths ascending.
//   length: all 1-grams, then all 2-grams, and so on, left to right.
enum class NgramOrder { window, length };

inline NgramOrder ngram_order_from_string(std::string_view s) {
  if (s == "window") return NgramOrder::window;
  if (s == "length") return NgramOrder::length;
  throw std::invalid_argument("unknown ngram order: " + std::string(s));
}

// Extracts word N-gram queries from a caption: lowercase, split on
// whitespace, drop generic words, enumerate contiguous N-grams up to
// max_ngram_len, skip N-grams made entirely of stopwords, cap the count.
inline std::vector<std::string> extract_ngram_queries(
    std::string_view caption, int max_num_queries, int max_ngram_len,
    NgramOrder order = NgramOrder::window) {
  if (max_num_queries < 1 || max_ngram_len < 1) {
    throw std::invalid_argument("extract_ngram_queries: bad limits");
  }
  const std::string lowered = ascii_lower(caption);
  std::vector<std::string> words;
  for (auto& w : split_whitespace(lowered)) {
    if (!common_generic_words().count(w)) words.push_back(std::move(w));
  }
  const int n = static_cast<int>(words.size());

  auto all_stopwords = [&](int start, int len) {
    for (int i = start; i < start + len; ++i) {
      if (!stopwords_en().count(words[i])) return false;
    }
    return true;
  };
  auto join = [&](int start, int len) {
    std::string out = words[start];
    for (int i = start + 1; i < start + len; ++i) {
      out += ' ';
      out += words[i];
    }
    return out;
  };

  std::vector<std::string> queries;
  auto emit = [&](int start, int len) {
    if (all_stopwords(start, len)) return false;
    queries.push_back(join(start, len));
    return static_cast<int>(queries.size()) == max_num_queries;
  };

  if (order == NgramOrder::window) {
    for (int start = 0; start < n; ++start) {
      const int longest = std::min(max_ngram_len, n - start);
      for (int len = 1; len <= longest; ++len) {
        if (emit(start, len)) return queries;
      }
    }
  } else {
    for (int len = 1; len <= std::min(max_ngram_len, n); ++len) {
      for (int start = 0; start + len <= n; ++start) {
        if (emit(start, len)) return queries;
      }
    }
  }
  return queries;
}

inline QuerySet extract_ngrams(std::string_view caption,
                               const PipelineConfig& cfg,
                               std::string image_id = {}) {
  QuerySet qs;
  qs.image_id = std::move(image_id);
  qs.source = QuerySource::ngram;
  qs.queries =
      extract_ngram_queries(caption, cfg.max_num_queries, cfg.max_ngram_len,
                            ngram_order_from_string(cfg.ngram_order));
  return qs;
}

// Rescales the scores of curated-origin annotations by `factor`, leaving
// ngram-origin annotations untouched. Order is preserved.
inline std::vector<PseudoAnnotation> rescale_curated_scores(
    std::vector<PseudoAnnotation> annos, double factor) {
  if (factor <= 0.0 || factor > 1.0) {
    throw std::invalid_argument("rescale_curated_scores: factor not in (0,1]");
  }
  for (auto& a : annos) {
    if (a.origin == AnnotationOrigin::curated) a.score *= factor;
  }
  return annos;
}

inline void to_json(nlohmann::json& j, const QuerySet& q) {
  j = nlohmann::json{{"image_id", q.image_id},
                     {"queries", q.queries},
                     {"source", to_string(q.source)}};
}

inline void from_json(const nlohmann::json& j, QuerySet& q) {
  q.image_id = j.at("image_id").get<std::string>();
  q.queries = j.at("queries").get<std::vector<std::string>>();
  q.source = query_source_from_string(j.at("source").get<std::string>());
}

}  // namespace ovpipe
