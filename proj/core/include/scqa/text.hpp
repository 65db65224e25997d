#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scqa::text {

/// Whitespace tokenization; never yields empty words.
std::vector<std::string> split_words(std::string_view s);
std::string join_words(std::span<const std::string> words);

/// Lowercase ASCII and drop ASCII punctuation ("Cotton's," -> "cottons").
std::string normalize_token(std::string_view word);
std::vector<std::string> normalize_tokens(std::span<const std::string> words);

/// Bag-of-tokens F1 between two token lists (tokens compared verbatim).
double bag_f1(std::span<const std::string> a, std::span<const std::string> b);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace scqa::text
