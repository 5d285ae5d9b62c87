#pragma once
// Embedded English stopword list and generic-word list used by the
// N-gram query extractor. Do not edit: downstream results depend on the
// exact membership of both sets.

#include <array>
#include <string_view>
#include <unordered_set>

namespace ovpipe {

inline constexpr std::array<std::string_view, 127> kStopwordsEn = {
    "a",          "about",    "above",   "after",      "again",
    "against",    "all",      "am",      "an",         "and",
    "any",        "are",      "as",      "at",         "be",
    "because",    "been",     "before",  "being",      "below",
    "between",    "both",     "but",     "by",         "can",
    "did",        "do",       "does",    "doing",      "don",
    "down",       "during",   "each",    "few",        "for",
    "from",       "further",  "had",     "has",        "have",
    "having",     "he",       "her",     "here",       "hers",
    "herself",    "him",      "himself", "his",        "how",
    "i",          "if",       "in",      "into",       "is",
    "it",         "its",      "itself",  "just",       "me",
    "more",       "most",     "my",      "myself",     "no",
    "nor",        "not",      "now",     "of",         "off",
    "on",         "once",     "only",    "or",         "other",
    "our",        "ours",     "ourselves", "out",      "over",
    "own",        "s",        "same",    "she",        "should",
    "so",         "some",     "such",    "t",          "than",
    "that",       "the",      "their",   "theirs",     "them",
    "themselves", "then",     "there",   "these",      "they",
    "this",       "those",    "through", "to",         "too",
    "under",      "until",    "up",      "very",       "was",
    "we",         "were",     "what",    "when",       "where",
    "which",      "while",    "who",     "whom",       "why",
    "will",       "with",     "you",     "your",       "yours",
    "yourself",   "yourselves"};

inline constexpr std::array<std::string_view, 61> kCommonGenericWords = {
    "alibaba",      "aliexpress", "amazon",     "available",     "background",
    "blog",         "buy",        "co",         "com",           "description",
    "diy",          "download",   "facebook",   "free",          "gif",
    "hd",           "ideas",      "illustration", "illustrations", "image",
    "images",       "img",        "instagram",  "jpg",           "online",
    "org",          "original",   "page",       "pdf",           "photo",
    "photography",  "photos",     "picclick",   "picture",       "pictures",
    "png",          "porn",       "premium",    "resolution",    "royalty",
    "sale",         "sex",        "shutterstock", "stock",       "svg",
    "thumbnail",    "tumblr",     "tumgir",     "twitter",       "uk",
    "uploaded",     "vector",     "vectors",    "video",         "videos",
    "wallpaper",    "wallpapers", "wholesale",  "www",           "xxx",
    "youtube"};

inline const std::unordered_set<std::string_view>& stopwords_en() {
  static const std::unordered_set<std::string_view> set(kStopwordsEn.begin(),
                                                        kStopwordsEn.end());
  return set;
}

inline const std::unordered_set<std::string_view>& common_generic_words() {
  static const std::unordered_set<std::string_view> set(
      kCommonGenericWords.begin(), kCommonGenericWords.end());
  return set;
}

}  // namespace ovpipe
