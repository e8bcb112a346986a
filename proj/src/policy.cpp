#include "absaforge/policy.hpp"

#include <algorithm>
#include <set>

#include "absaforge/error.hpp"
#include "absaforge/llm_gateway.hpp"
#include "absaforge/log.hpp"
#include "absaforge/prompts.hpp"
#include "absaforge/text.hpp"

namespace absaforge {

std::string_view to_string(SentenceLength l) {
    switch (l) {
        case SentenceLength::short_: return "short";
        case SentenceLength::medium: return "medium";
        case SentenceLength::long_: return "long";
    }
    return "medium";
}

std::optional<SentenceLength> map_sentence_length(std::string_view description) {
    static const std::vector<std::pair<std::string_view, SentenceLength>> table = {
        {"short", SentenceLength::short_},     {"brief", SentenceLength::short_},
        {"concise", SentenceLength::short_},   {"terse", SentenceLength::short_},
        {"succinct", SentenceLength::short_},  {"compact", SentenceLength::short_},
        {"small", SentenceLength::short_},     {"medium", SentenceLength::medium},
        {"moderate", SentenceLength::medium},  {"average", SentenceLength::medium},
        {"mid", SentenceLength::medium},       {"normal", SentenceLength::medium},
        {"standard", SentenceLength::medium},  {"regular", SentenceLength::medium},
        {"typical", SentenceLength::medium},   {"intermediate", SentenceLength::medium},
        {"long", SentenceLength::long_},       {"lengthy", SentenceLength::long_},
        {"extended", SentenceLength::long_},   {"verbose", SentenceLength::long_},
        {"wordy", SentenceLength::long_},      {"elaborate", SentenceLength::long_},
        {"detailed", SentenceLength::long_},   {"longer", SentenceLength::long_},
        {"shorter", SentenceLength::short_},
    };
    // First token with a known meaning wins: "medium to long" is medium.
    std::string token;
    const std::string lowered = text::to_lower(description) + " ";
    for (char c : lowered) {
        if (c >= 'a' && c <= 'z') {
            token.push_back(c);
            continue;
        }
        if (token.empty()) continue;
        for (const auto& [word, length] : table) {
            if (token == word) return length;
        }
        token.clear();
    }
    return std::nullopt;
}

void Policy::validate() const {
    if (terms.empty() || terms.size() > kMaxPolicyTerms) {
        throw InvalidArgument("policy must carry 1 to 4 terms, got " + std::to_string(terms.size()));
    }
    if (terms.size() != polarities.size()) throw InvalidArgument("policy terms and polarities differ in length");
    std::set<std::string> seen;
    for (const auto& t : terms) {
        if (text::trim(t).empty()) throw InvalidArgument("policy has an empty term");
        if (!seen.insert(text::term_key(t)).second) throw InvalidArgument("policy repeats term '" + t + "'");
    }
    for (auto p : polarities) {
        if (p == Polarity::none) throw InvalidArgument("policy polarity cannot be 'none'");
    }
    if (style.writing_style.empty() || style.grammar_structure.empty()) {
        throw InvalidArgument("policy style is incomplete");
    }
}

SamplingPool build_pool(const Dataset& train, std::uint64_t seed, SamplingMode mode) {
    SamplingPool pool;
    pool.seed = seed;
    pool.mode = mode;
    for (const auto& ex : train.examples) {
        for (const auto& a : ex.annotations) {
            auto it = std::find(pool.pairs.begin(), pool.pairs.end(), a);
            if (it == pool.pairs.end()) {
                pool.pairs.push_back(a);
                pool.pair_counts.push_back(1);
            } else {
                ++pool.pair_counts[static_cast<std::size_t>(it - pool.pairs.begin())];
            }
            ++pool.term_frequency[a.term];
            ++pool.polarity_frequency[a.polarity];
        }
    }
    if (pool.pairs.empty()) {
        throw InvalidArgument("dataset '" + train.name + "' has no aspect annotations to sample from");
    }
    return pool;
}

namespace {

std::size_t weighted_index(const std::vector<std::size_t>& weights, const std::vector<std::size_t>& candidates,
                           Rng& rng) {
    std::uint64_t total = 0;
    for (auto c : candidates) total += weights[c];
    auto r = uniform_index(rng, total);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (r < weights[candidates[i]]) return i;
        r -= weights[candidates[i]];
    }
    return candidates.size() - 1;
}

}  // namespace

LabelDraw sample_labels(const SamplingPool& pool, Rng& rng, std::optional<std::size_t> forced_k) {
    if (pool.pairs.empty()) throw InvalidArgument("cannot sample from an empty pool");

    std::set<std::string> distinct_terms;
    for (const auto& p : pool.pairs) distinct_terms.insert(text::term_key(p.term));

    std::size_t k = forced_k ? *forced_k : 1 + uniform_index(rng, kMaxPolicyTerms);
    if (k == 0) throw InvalidArgument("cannot sample zero labels");
    k = std::min({k, kMaxPolicyTerms, distinct_terms.size()});

    std::vector<std::size_t> remaining(pool.pairs.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

    LabelDraw draw;
    std::set<std::string> used;
    while (draw.terms.size() < k && !remaining.empty()) {
        const std::size_t slot = pool.mode == SamplingMode::uniform
                                     ? static_cast<std::size_t>(uniform_index(rng, remaining.size()))
                                     : weighted_index(pool.pair_counts, remaining, rng);
        const auto& pair = pool.pairs[remaining[slot]];
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(slot));
        if (!used.insert(text::term_key(pair.term)).second) continue;
        draw.terms.push_back(pair.term);
        draw.polarities.push_back(pair.polarity);
    }
    return draw;
}

std::string infer_domain(std::string_view dataset_name) {
    const auto n = text::to_lower(dataset_name);
    return n.find("lap") != std::string::npos ? "Laptops" : "Restaurants";
}

namespace {

std::string json_string_or_empty(const nlohmann::json& j, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = j.find(k);
        if (it != j.end() && it->is_string()) return std::string(text::trim(it->get<std::string>()));
    }
    return {};
}

struct RawStyle {
    std::string writing_style;
    std::string grammar_structure;
    std::string length;
};

RawStyle read_style_fields(std::string_view reply) {
    RawStyle raw;
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        std::string body(reply.substr(open, close - open + 1));
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            std::replace(body.begin(), body.end(), '\'', '"');
            j = nlohmann::json::parse(body, nullptr, false);
        }
        if (j.is_object()) {
            raw.writing_style = json_string_or_empty(j, {"writing_style", "writing style", "style"});
            raw.grammar_structure = json_string_or_empty(j, {"grammar_structure", "grammar structure", "grammar"});
            raw.length = json_string_or_empty(j, {"length", "sentence_length", "sentence length"});
            return raw;
        }
    }
    // Fallback: "key: value" lines.
    for (const auto& line : text::split_lines(reply)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        auto key = text::to_lower(text::trim(std::string_view(line).substr(0, colon)));
        std::string value(text::trim(std::string_view(line).substr(colon + 1)));
        while (!value.empty() && (value.back() == ',' || value.back() == '"')) value.pop_back();
        if (!value.empty() && value.front() == '"') value.erase(0, 1);
        std::erase(key, '"');
        std::replace(key.begin(), key.end(), ' ', '_');
        if (key == "writing_style" || key == "style") raw.writing_style = value;
        if (key == "grammar_structure" || key == "grammar") raw.grammar_structure = value;
        if (key == "length" || key == "sentence_length") raw.length = value;
    }
    return raw;
}

}  // namespace

StyleInfo parse_style_reply(std::string_view reply) {
    const auto raw = read_style_fields(reply);
    std::vector<std::string> missing;
    if (raw.writing_style.empty()) missing.emplace_back("writing_style");
    if (raw.grammar_structure.empty()) missing.emplace_back("grammar_structure");
    if (raw.length.empty()) missing.emplace_back("length");
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw FormatError("style reply is missing " + list);
    }
    StyleInfo style;
    style.writing_style = raw.writing_style;
    style.grammar_structure = raw.grammar_structure;
    if (auto l = map_sentence_length(raw.length)) {
        style.sentence_length = *l;
    } else {
        log::warn("unrecognized sentence length '" + raw.length + "', using medium");
        style.sentence_length = SentenceLength::medium;
    }
    return style;
}

StyleExtraction extract_style(ChatClient& gateway, const PromptSet& prompts, const Dataset& train,
                              std::size_t n_sentences, Rng& rng, std::string_view domain) {
    if (n_sentences == 0) throw InvalidArgument("style extraction needs at least one sentence");
    if (train.empty()) throw InvalidArgument("style extraction needs a non-empty dataset");

    std::vector<std::size_t> indices(train.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    const std::size_t n = std::min(n_sentences, indices.size());
    // Partial Fisher-Yates: the first n slots become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + uniform_index(rng, indices.size() - i);
        std::swap(indices[i], indices[j]);
    }

    StyleExtraction out;
    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = train.examples[indices[i]];
        sentences.push_back(ex.raw_text);
        out.source_ids.push_back(ex.id);
    }

    ChatRequest request;
    request.temperature = kVerifierTemperature;
    request.messages.push_back({Role::user, render_style_prompt(prompts, sentences, domain)});

    auto reply = gateway.chat(request);
    try {
        out.style = parse_style_reply(reply.content);
        return out;
    } catch (const FormatError& first) {
        request.messages.push_back({Role::assistant, reply.content});
        request.messages.push_back(
            {Role::user, std::string("Your reply could not be used (") + first.what() +
                             "). Respond only with a JSON object with the keys writing_style, grammar_structure "
                             "and length."});
        reply = gateway.chat(request);
        out.style = parse_style_reply(reply.content);
        return out;
    }
}

Policy get_policy(ChatClient& gateway, const PromptSet& prompts, const SamplingPool& pool, const Dataset& train,
                  Rng& label_rng, Rng& style_rng, std::string_view domain, std::size_t n_sentences) {
    auto labels = sample_labels(pool, label_rng);
    auto extraction = extract_style(gateway, prompts, train, n_sentences, style_rng, domain);
    Policy policy;
    policy.terms = std::move(labels.terms);
    policy.polarities = std::move(labels.polarities);
    policy.style = std::move(extraction.style);
    policy.domain = std::string(domain);
    policy.source_sentence_ids = std::move(extraction.source_ids);
    policy.validate();
    return policy;
}

}  // namespace absaforge
