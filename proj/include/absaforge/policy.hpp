#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absaforge/corpus.hpp"
#include "absaforge/rng.hpp"

namespace absaforge {

class ChatClient;
struct PromptSet;

enum class SentenceLength { short_, medium, long_ };

std::string_view to_string(SentenceLength l);

/// Maps free-text length descriptions ("very long-winded", "brief") onto the
/// closed set. Returns nullopt when nothing matches.
std::optional<SentenceLength> map_sentence_length(std::string_view description);

struct StyleInfo {
    std::string writing_style;
    std::string grammar_structure;
    SentenceLength sentence_length = SentenceLength::medium;

    friend bool operator==(const StyleInfo&, const StyleInfo&) = default;
};

inline constexpr std::size_t kMaxPolicyTerms = 4;

struct Policy {
    std::vector<std::string> terms;
    std::vector<Polarity> polarities;
    StyleInfo style;
    std::string domain;
    std::vector<std::string> source_sentence_ids;

    /// Throws InvalidArgument when the parallel-list or size invariants fail.
    void validate() const;

    friend bool operator==(const Policy&, const Policy&) = default;
};

enum class SamplingMode { uniform, frequency_weighted };

/// Distinct (term, polarity) pairs harvested from training data, in first
/// occurrence order, plus frequency tables.
struct SamplingPool {
    std::vector<AspectAnnotation> pairs;
    /// Occurrences of each pair, parallel to `pairs`.
    std::vector<std::size_t> pair_counts;
    std::map<std::string, std::size_t> term_frequency;
    std::map<Polarity, std::size_t> polarity_frequency;
    std::uint64_t seed = 0;
    SamplingMode mode = SamplingMode::uniform;

    std::size_t size() const { return pairs.size(); }
    /// Run-scoped generator streams derived from `seed`.
    Rng label_rng(std::uint64_t worker = 0) const { return make_rng(seed, 2 * worker); }
    Rng style_rng(std::uint64_t worker = 0) const { return make_rng(seed, 2 * worker + 1); }
};

/// Throws InvalidArgument when `train` carries no annotations.
SamplingPool build_pool(const Dataset& train, std::uint64_t seed,
                        SamplingMode mode = SamplingMode::uniform);

struct LabelDraw {
    std::vector<std::string> terms;
    std::vector<Polarity> polarities;

    friend bool operator==(const LabelDraw&, const LabelDraw&) = default;
};

/// Draws k ~ Uniform{1..4} (or `forced_k`), capped at the number of distinct
/// terms, then k pairs without replacement with pairwise-distinct terms.
LabelDraw sample_labels(const SamplingPool& pool, Rng& rng, std::optional<std::size_t> forced_k = std::nullopt);

inline constexpr std::size_t kDefaultStyleSentences = 3;

struct StyleExtraction {
    StyleInfo style;
    std::vector<std::string> source_ids;
};

/// Samples `n_sentences` real sentences, asks the model for their style and
/// parses the reply. Re-asks once when a field is missing.
StyleExtraction extract_style(ChatClient& gateway, const PromptSet& prompts, const Dataset& train,
                              std::size_t n_sentences, Rng& rng, std::string_view domain);

/// Parses the three-field style object from model output. Throws
/// FormatError when a field is missing or empty.
StyleInfo parse_style_reply(std::string_view reply);

/// "Laptops" for laptop datasets, "Restaurants" otherwise.
std::string infer_domain(std::string_view dataset_name);

Policy get_policy(ChatClient& gateway, const PromptSet& prompts, const SamplingPool& pool, const Dataset& train,
                  Rng& label_rng, Rng& style_rng, std::string_view domain,
                  std::size_t n_sentences = kDefaultStyleSentences);

}  // namespace absaforge
