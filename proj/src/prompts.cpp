#include "absaforge/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "absaforge/text.hpp"
#include "prompt_assets.hpp"

namespace absaforge {

namespace {

bool is_ident_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_' || std::isdigit(static_cast<unsigned char>(c)); }

/// Length of the `{name}` placeholder starting at `pos`, or 0.
std::size_t placeholder_at(std::string_view s, std::size_t pos, std::string* name) {
    if (s[pos] != '{') return 0;
    std::size_t i = pos + 1;
    while (i < s.size() && is_ident_char(s[i])) ++i;
    if (i == pos + 1 || i >= s.size() || s[i] != '}') return 0;
    if (name) *name = std::string(s.substr(pos + 1, i - pos - 1));
    return i - pos + 1;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string text) : name_(std::move(name)), text_(std::move(text)) {
    for (std::size_t i = 0; i < text_.size(); ++i) {
        if (text_.compare(i, 2, "{{") == 0 || text_.compare(i, 2, "}}") == 0) {
            ++i;
            continue;
        }
        std::string ph;
        if (auto len = placeholder_at(text_, i, &ph)) {
            placeholders_.insert(ph);
            i += len - 1;
        }
    }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
    for (const auto& ph : placeholders_) {
        if (!bindings.count(ph)) throw TemplateError("template '" + name_ + "': placeholder {" + ph + "} is unbound");
    }
    std::string out;
    out.reserve(text_.size() + 256);
    for (std::size_t i = 0; i < text_.size(); ++i) {
        if (text_.compare(i, 2, "{{") == 0 || text_.compare(i, 2, "}}") == 0) {
            out.push_back(text_[i]);
            ++i;
            continue;
        }
        std::string ph;
        if (auto len = placeholder_at(text_, i, &ph)) {
            out += bindings.at(ph);
            i += len - 1;
            continue;
        }
        out.push_back(text_[i]);
    }
    return out;
}

const PromptSet& PromptSet::defaults() {
    static const PromptSet set = [] {
        PromptSet s;
        s.generation = PromptTemplate("generation", std::string(assets::kGeneration));
        s.baseline = PromptTemplate("baseline", std::string(assets::kBaseline));
        s.verifier = PromptTemplate("verifier", std::string(assets::kVerifier));
        s.style_extract = PromptTemplate("style_extract", std::string(assets::kStyleExtract));
        s.generator_agent = PromptTemplate("generator_agent", std::string(assets::kGeneratorAgent));
        s.evaluator_agent = PromptTemplate("evaluator_agent", std::string(assets::kEvaluatorAgent));
        return s;
    }();
    return set;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory '" + dir.string() + "' does not exist");
    PromptSet s = defaults();
    auto overlay = [&](PromptTemplate& slot) {
        const auto path = dir / (slot.name() + ".txt");
        if (!std::filesystem::exists(path)) return;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read prompt file '" + path.string() + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        slot = PromptTemplate(slot.name(), buf.str());
    };
    overlay(s.generation);
    overlay(s.baseline);
    overlay(s.verifier);
    overlay(s.style_extract);
    overlay(s.generator_agent);
    overlay(s.evaluator_agent);
    return s;
}

std::string polarity_list(const std::vector<Polarity>& polarities) {
    std::vector<std::string> words;
    words.reserve(polarities.size());
    for (auto p : polarities) words.emplace_back(to_string(p));
    return text::python_list(words);
}

namespace {

void require_labels(const std::vector<std::string>& terms, const std::vector<Polarity>& polarities) {
    if (terms.empty()) throw InvalidArgument("prompt needs at least one aspect term");
    if (terms.size() != polarities.size()) throw InvalidArgument("terms and polarities differ in length");
}

}  // namespace

std::string render_generation_prompt(const PromptSet& prompts, const Policy& policy) {
    policy.validate();
    return prompts.generation.render({
        {"aspect_term", text::python_list(policy.terms)},
        {"polarity", polarity_list(policy.polarities)},
        {"writing_style", policy.style.writing_style},
        {"grammar_structure", policy.style.grammar_structure},
        {"sentence_length", std::string(to_string(policy.style.sentence_length))},
        {"domain", policy.domain},
    });
}

std::string render_baseline_prompt(const PromptSet& prompts, const std::vector<std::string>& terms,
                                   const std::vector<Polarity>& polarities, std::string_view style_sentence,
                                   std::string_view domain) {
    require_labels(terms, polarities);
    return prompts.baseline.render({
        {"aspect_term", text::python_list(terms)},
        {"polarity", polarity_list(polarities)},
        {"sent", std::string(style_sentence)},
        {"domain", std::string(domain)},
    });
}

std::string render_verifier_prompt(const PromptSet& prompts, std::string_view sentence,
                                   const std::vector<std::string>& terms, const std::vector<Polarity>& polarities) {
    require_labels(terms, polarities);
    if (text::trim(sentence).empty()) throw InvalidArgument("verifier prompt needs a non-empty sentence");
    return prompts.verifier.render({
        {"sent", std::string(text::trim(sentence))},
        {"aspect_term", text::python_list(terms)},
        {"polarity", polarity_list(polarities)},
    });
}

std::string render_style_prompt(const PromptSet& prompts, const std::vector<std::string>& sentences,
                                std::string_view domain) {
    if (sentences.empty()) throw InvalidArgument("style prompt needs at least one sentence");
    std::string joined;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        joined += std::to_string(i + 1) + ". " + sentences[i];
        if (i + 1 < sentences.size()) joined += "\n";
    }
    return prompts.style_extract.render({{"sentences", joined}, {"domain", std::string(domain)}});
}

// ---------------------------------------------------------------------------
// Generation parsing

namespace {

bool is_quote(char c) { return c == '\'' || c == '"'; }

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

struct KeyMatch {
    std::size_t key_begin;
    std::size_t value_begin;  // just past '='
};

/// All occurrences of `key` (case-insensitive, not preceded by a letter)
/// followed by optional spaces and '='.
std::vector<KeyMatch> find_keys(std::string_view s, std::initializer_list<std::string_view> keys) {
    std::vector<KeyMatch> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0 && is_alpha(s[i - 1])) continue;
        for (auto key : keys) {
            if (!text::starts_with_icase(s.substr(i), key)) continue;
            std::size_t j = i + key.size();
            while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
            if (j < s.size() && s[j] == '=') {
                out.push_back({i, j + 1});
                break;
            }
        }
    }
    return out;
}

/// Position just past a list value starting at `pos`: the matching ']' for
/// bracketed lists, the end of line otherwise.
std::size_t list_extent(std::string_view s, std::size_t pos) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos < s.size() && s[pos] == '[') {
        char quote = 0;
        for (std::size_t i = pos + 1; i < s.size(); ++i) {
            const char c = s[i];
            if (quote) {
                if (c == '\\') {
                    ++i;
                } else if (c == quote) {
                    std::size_t k = i + 1;
                    while (k < s.size() && s[k] == ' ') ++k;
                    if (k >= s.size() || s[k] == ',' || s[k] == ']') quote = 0;
                }
            } else if (is_quote(c)) {
                quote = c;
            } else if (c == ']') {
                return i + 1;
            } else if (c == '\n') {
                return i;
            }
        }
        return s.size();
    }
    auto eol = s.find('\n', pos);
    return eol == std::string_view::npos ? s.size() : eol;
}

std::string clean_sentence(std::string_view region) {
    std::vector<std::string> kept;
    for (auto line : text::split_lines(region)) {
        std::string_view l = text::trim(line);
        // Strip list numbering and bullets ("1.", "2)", "-", "*").
        std::size_t k = 0;
        while (k < l.size() && std::isdigit(static_cast<unsigned char>(l[k]))) ++k;
        if (k > 0 && k < l.size() && (l[k] == '.' || l[k] == ')') && (k + 1 == l.size() || l[k + 1] == ' ')) {
            l = text::trim(l.substr(k + 1));
        } else if (!l.empty() && (l[0] == '-' || l[0] == '*') && (l.size() == 1 || l[1] == ' ')) {
            l = text::trim(l.substr(1));
        }
        if (text::starts_with_icase(l, "sentence:")) l = text::trim(l.substr(9));
        if (!l.empty()) kept.emplace_back(l);
    }
    std::string out;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i) out += ' ';
        out += kept[i];
    }
    // Separator left over from the one-line "sentence Terms=..." shape.
    while (!out.empty() && (out.back() == ',' || out.back() == ';' || out.back() == ' ')) out.pop_back();
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return std::string(text::trim(out));
}

}  // namespace

std::vector<std::string> parse_list_literal(std::string_view literal) {
    std::string_view s = text::trim(literal);
    if (!s.empty() && s.front() == '[') {
        s.remove_prefix(1);
        if (!s.empty() && s.back() == ']') s.remove_suffix(1);
    }
    std::vector<std::string> items;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == ',' || s[i] == '\t')) ++i;
        if (i >= s.size()) break;
        std::string item;
        if (is_quote(s[i])) {
            const char quote = s[i++];
            while (i < s.size()) {
                const char c = s[i];
                if (c == '\\') {
                    std::size_t k = i;
                    while (k < s.size() && s[k] == '\\') ++k;
                    if (k < s.size() && is_quote(s[k])) {
                        item.push_back(s[k]);
                        i = k + 1;
                    } else {
                        item.append((k - i + 1) / 2, '\\');
                        i = k;
                    }
                    continue;
                }
                if (c == quote) {
                    std::size_t k = i + 1;
                    while (k < s.size() && s[k] == ' ') ++k;
                    if (k >= s.size() || s[k] == ',') {
                        i = k;
                        break;
                    }
                }
                item.push_back(c);
                ++i;
            }
        } else {
            const auto comma = s.find(',', i);
            const auto end = comma == std::string_view::npos ? s.size() : comma;
            item = std::string(text::trim(s.substr(i, end - i)));
            i = end;
        }
        items.emplace_back(text::trim(item));
    }
    return items;
}

ParsedGeneration parse_generation(std::string_view reply) {
    const auto terms_keys = find_keys(reply, {"terms"});
    if (terms_keys.empty()) throw GenerationParseError("reply has no Terms= line");
    const auto terms_at = terms_keys.back();
    const auto terms_end = list_extent(reply, terms_at.value_begin);

    const auto pol_keys = find_keys(reply.substr(terms_end), {"polarities", "polarity"});
    if (pol_keys.empty()) throw GenerationParseError("reply has no Polarity= line after Terms=");
    const auto pol_begin = terms_end + pol_keys.back().value_begin;
    const auto pol_end = list_extent(reply, pol_begin);

    // The sentence starts after any earlier Polarity= block (echoed examples).
    std::size_t sentence_begin = 0;
    for (const auto& k : find_keys(reply.substr(0, terms_at.key_begin), {"polarities", "polarity"})) {
        sentence_begin = list_extent(reply, k.value_begin);
    }

    ParsedGeneration out;
    out.sentence = clean_sentence(reply.substr(sentence_begin, terms_at.key_begin - sentence_begin));
    if (out.sentence.empty()) throw GenerationParseError("reply has no sentence before Terms=");

    out.terms = parse_list_literal(reply.substr(terms_at.value_begin, terms_end - terms_at.value_begin));
    const auto pol_words = parse_list_literal(reply.substr(pol_begin, pol_end - pol_begin));
    if (out.terms.empty()) throw GenerationParseError("Terms= list is empty");
    for (const auto& t : out.terms) {
        if (t.empty()) throw GenerationParseError("Terms= list has an empty item");
    }
    if (out.terms.size() != pol_words.size()) {
        throw GenerationParseError("Terms= has " + std::to_string(out.terms.size()) + " items but Polarity= has " +
                                   std::to_string(pol_words.size()));
    }
    for (const auto& w : pol_words) {
        auto p = try_parse_polarity(w);
        if (!p || *p == Polarity::none) throw GenerationParseError("unknown polarity '" + w + "'");
        out.polarities.push_back(*p);
    }
    return out;
}

std::string render_generation_block(const ParsedGeneration& generation) {
    return generation.sentence + "\nTerms=" + text::python_list(generation.terms) +
           "\nPolarity=" + polarity_list(generation.polarities);
}

// ---------------------------------------------------------------------------

std::string_view to_string(VerdictKind v) { return v == VerdictKind::ok ? "OK" : "NOT_OK"; }

Verdict parse_verdict(std::string_view reply) {
    std::string cleaned;
    for (char c : text::to_upper(text::trim(reply))) {
        if ((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_') {
            cleaned.push_back(c);
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            cleaned.push_back(' ');
        }
    }
    cleaned = text::normalize_space(cleaned);
    if (cleaned == "OK") return {VerdictKind::ok, std::string(reply)};
    if (cleaned == "NOT_OK" || cleaned == "NOT OK" || cleaned == "NOTOK") return {VerdictKind::not_ok, std::string(reply)};
    throw VerdictParseError("unparseable verdict: '" + std::string(text::trim(reply)) + "'");
}

}  // namespace absaforge
