#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/corpus.hpp"
#include "absaforge/error.hpp"
#include "absaforge/policy.hpp"

namespace absaforge {

class TemplateError : public Error {
public:
    using Error::Error;
};

/// Text with `{name}` placeholders. `{{` and `}}` render as literal braces.
class PromptTemplate {
public:
    PromptTemplate() = default;
    PromptTemplate(std::string name, std::string text);

    const std::string& name() const { return name_; }
    const std::string& text() const { return text_; }
    const std::set<std::string>& placeholders() const { return placeholders_; }

    /// Every placeholder must be bound; extra bindings are ignored.
    std::string render(const std::map<std::string, std::string>& bindings) const;

private:
    std::string name_;
    std::string text_;
    std::set<std::string> placeholders_;
};

struct PromptSet {
    PromptTemplate generation;
    PromptTemplate baseline;
    PromptTemplate verifier;
    PromptTemplate style_extract;
    PromptTemplate generator_agent;
    PromptTemplate evaluator_agent;

    /// Templates compiled into the binary (copies of prompts/*.txt).
    static const PromptSet& defaults();
    /// Defaults, with any `<name>.txt` present in `dir` taking precedence.
    static PromptSet load(const std::filesystem::path& dir);
};

std::string polarity_list(const std::vector<Polarity>& polarities);

std::string render_generation_prompt(const PromptSet& prompts, const Policy& policy);
std::string render_baseline_prompt(const PromptSet& prompts, const std::vector<std::string>& terms,
                                   const std::vector<Polarity>& polarities, std::string_view style_sentence,
                                   std::string_view domain);
std::string render_verifier_prompt(const PromptSet& prompts, std::string_view sentence,
                                   const std::vector<std::string>& terms, const std::vector<Polarity>& polarities);
std::string render_style_prompt(const PromptSet& prompts, const std::vector<std::string>& sentences,
                                std::string_view domain);

class GenerationParseError : public Error {
public:
    using Error::Error;
};

struct ParsedGeneration {
    std::string sentence;
    std::vector<std::string> terms;
    std::vector<Polarity> polarities;

    friend bool operator==(const ParsedGeneration&, const ParsedGeneration&) = default;
};

/// Extracts the sentence and the last Terms=/Polarity= lists from a
/// generation reply.
ParsedGeneration parse_generation(std::string_view reply);

/// The sentence followed by Terms= and Polarity= lines.
std::string render_generation_block(const ParsedGeneration& generation);

/// Parses a bracketed list literal, tolerating either quote style and
/// backslash-escaped apostrophes. Bare comma-separated items are accepted.
std::vector<std::string> parse_list_literal(std::string_view literal);

enum class VerdictKind { ok, not_ok };

struct Verdict {
    VerdictKind kind = VerdictKind::not_ok;
    std::string raw_reply;

    bool ok() const { return kind == VerdictKind::ok; }
};

std::string_view to_string(VerdictKind v);

class VerdictParseError : public Error {
public:
    using Error::Error;
};

Verdict parse_verdict(std::string_view reply);

}  // namespace absaforge
