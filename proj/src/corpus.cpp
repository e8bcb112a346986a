#include "absaforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "absaforge/error.hpp"
#include "absaforge/log.hpp"
#include "absaforge/rng.hpp"
#include "absaforge/text.hpp"

namespace absaforge {

using nlohmann::ordered_json;

std::optional<Polarity> try_parse_polarity(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "positive") return Polarity::positive;
    if (w == "negative") return Polarity::negative;
    if (w == "neutral") return Polarity::neutral;
    if (w == "none") return Polarity::none;
    return std::nullopt;
}

Polarity parse_polarity(std::string_view word) {
    if (auto p = try_parse_polarity(word)) return *p;
    throw FormatError("unknown polarity '" + std::string(word) + "'");
}

std::string_view to_string(Polarity p) {
    switch (p) {
        case Polarity::positive: return "positive";
        case Polarity::negative: return "negative";
        case Polarity::neutral: return "neutral";
        case Polarity::none: return "none";
    }
    return "none";
}

Task parse_task(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "ate") return Task::ATE;
    if (w == "atsc") return Task::ATSC;
    if (w == "aspe") return Task::ASPE;
    throw InvalidArgument("unknown task '" + std::string(word) + "' (expected ate, atsc or aspe)");
}

std::string_view to_string(Task t) {
    switch (t) {
        case Task::ATE: return "ate";
        case Task::ATSC: return "atsc";
        case Task::ASPE: return "aspe";
    }
    return "ate";
}

Provenance parse_provenance(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "original") return Provenance::original;
    if (w == "agentic") return Provenance::agentic;
    if (w == "prompting") return Provenance::prompting;
    throw FormatError("unknown provenance '" + std::string(word) + "'");
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::agentic: return "agentic";
        case Provenance::prompting: return "prompting";
    }
    return "original";
}

namespace {

[[noreturn]] void malformed(std::size_t index, std::string_view field, std::string_view what) {
    std::ostringstream os;
    os << "record " << index << ": field '" << field << "' " << what;
    throw FormatError(os.str());
}

std::string id_text(const ordered_json& v, std::size_t index) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    malformed(index, "ID", "must be a string or integer");
}

}  // namespace

AbsaExample parse_record(const ordered_json& record, std::size_t index) {
    if (!record.is_object()) malformed(index, "<record>", "is not an object");
    AbsaExample ex;

    auto id = record.find("ID");
    if (id == record.end()) malformed(index, "ID", "is missing");
    ex.id = id_text(*id, index);

    auto raw = record.find("raw_text");
    if (raw == record.end() || !raw->is_string()) malformed(index, "raw_text", "is missing or not a string");
    ex.raw_text = raw->get<std::string>();

    auto terms = record.find("aspectTerms");
    if (terms == record.end() || !terms->is_array()) malformed(index, "aspectTerms", "is missing or not a list");
    for (const auto& item : *terms) {
        if (!item.is_object() || !item.contains("term") || !item.contains("polarity") ||
            !item["term"].is_string() || !item["polarity"].is_string()) {
            malformed(index, "aspectTerms", "entries need string 'term' and 'polarity'");
        }
        std::string term(text::trim(item["term"].get<std::string>()));
        const auto pol_text = item["polarity"].get<std::string>();
        auto pol = try_parse_polarity(pol_text);
        if (!pol) malformed(index, "aspectTerms", "has unknown polarity '" + pol_text + "'");
        if (text::to_lower(term) == kNoAspectTerm) continue;
        if (term.empty()) malformed(index, "aspectTerms", "has an empty term");
        if (*pol == Polarity::none) malformed(index, "aspectTerms", "uses polarity 'none' on term '" + term + "'");
        AspectAnnotation ann{std::move(term), *pol};
        if (std::find(ex.annotations.begin(), ex.annotations.end(), ann) != ex.annotations.end()) {
            log::warn("record " + std::to_string(index) + ": dropping duplicate annotation (" + ann.term +
                      ", " + std::string(to_string(ann.polarity)) + ")");
            continue;
        }
        ex.annotations.push_back(std::move(ann));
    }

    if (auto cats = record.find("aspectCategories"); cats != record.end()) ex.categories = *cats;

    if (auto prov = record.find("provenance"); prov != record.end()) {
        if (!prov->is_string()) malformed(index, "provenance", "must be a string");
        try {
            ex.provenance = parse_provenance(prov->get<std::string>());
        } catch (const FormatError& e) {
            malformed(index, "provenance", e.what());
        }
    }
    return ex;
}

ordered_json to_record(const AbsaExample& example) {
    ordered_json rec;
    rec["ID"] = example.id;
    rec["raw_text"] = example.raw_text;
    auto terms = ordered_json::array();
    if (example.annotations.empty()) {
        terms.push_back({{"term", kNoAspectTerm}, {"polarity", "none"}});
    }
    for (const auto& a : example.annotations) {
        terms.push_back({{"term", a.term}, {"polarity", to_string(a.polarity)}});
    }
    rec["aspectTerms"] = std::move(terms);
    rec["aspectCategories"] = example.categories.is_null() ? ordered_json::array() : example.categories;
    rec["provenance"] = to_string(example.provenance);
    return rec;
}

std::string serialize_record(const AbsaExample& example) { return to_record(example).dump(); }

Dataset load_semeval(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    Dataset ds;
    ds.name = path.stem().string();
    ds.split = text::to_lower(ds.name).find("test") != std::string::npos ? Split::test : Split::train;

    auto add = [&](const ordered_json& rec, std::size_t index) {
        ds.examples.push_back(parse_record(rec, index));
    };

    const auto body = text::trim(content);
    if (!body.empty() && body.front() == '[') {
        ordered_json doc;
        try {
            doc = ordered_json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
        for (std::size_t i = 0; i < doc.size(); ++i) add(doc[i], i);
    } else {
        std::size_t index = 0;
        for (const auto& line : text::split_lines(content)) {
            if (text::trim(line).empty()) continue;
            ordered_json rec;
            try {
                rec = ordered_json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw FormatError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
            }
            add(rec, index++);
        }
    }

    std::set<std::string> ids;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        if (!ids.insert(ds.examples[i].id).second) {
            malformed(i, "ID", "duplicates id '" + ds.examples[i].id + "'");
        }
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset file '" + path.string() + "'");
    for (const auto& ex : dataset.examples) out << serialize_record(ex) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void append_example(const AbsaExample& example, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to dataset file '" + path.string() + "'");
    out << serialize_record(example) << '\n';
    out.flush();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

std::string join_terms(const AbsaExample& ex) {
    std::string out;
    for (std::size_t i = 0; i < ex.annotations.size(); ++i) {
        if (i) out += ", ";
        out += ex.annotations[i].term;
    }
    return out;
}

}  // namespace

std::pair<std::string, std::string> render_task(const AbsaExample& example, Task task,
                                                std::size_t annotation_index) {
    switch (task) {
        case Task::ATE:
            return {example.raw_text,
                    example.annotations.empty() ? std::string(kNoAspectTerm) : join_terms(example)};
        case Task::ATSC: {
            if (example.annotations.empty()) {
                throw InvalidArgument("ATSC needs at least one annotation (example '" + example.id + "')");
            }
            if (annotation_index >= example.annotations.size()) {
                throw InvalidArgument("annotation index out of range for example '" + example.id + "'");
            }
            const auto& a = example.annotations[annotation_index];
            return {example.raw_text + "\naspect: " + a.term, std::string(to_string(a.polarity))};
        }
        case Task::ASPE: {
            if (example.annotations.empty()) return {example.raw_text, std::string(kNoAspectTerm) + ":none"};
            std::string target;
            for (std::size_t i = 0; i < example.annotations.size(); ++i) {
                if (i) target += ", ";
                target += example.annotations[i].term + ":" + std::string(to_string(example.annotations[i].polarity));
            }
            return {example.raw_text, target};
        }
    }
    throw InvalidArgument("unknown task");
}

std::vector<TaskInstance> expand_instances(const Dataset& dataset, Task task) {
    std::vector<TaskInstance> out;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& ex = dataset.examples[i];
        if (task == Task::ATSC) {
            for (std::size_t k = 0; k < ex.annotations.size(); ++k) {
                auto [input, target] = render_task(ex, task, k);
                out.push_back({ex.id + "#" + std::to_string(k), i, k, std::move(input), std::move(target)});
            }
        } else {
            auto [input, target] = render_task(ex, task);
            out.push_back({ex.id, i, std::nullopt, std::move(input), std::move(target)});
        }
    }
    return out;
}

namespace {

void finish(std::vector<Label>& labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
}

}  // namespace

ParsedPrediction parse_prediction(std::string_view raw, Task task) {
    ParsedPrediction out;
    const auto body = text::trim(raw);
    if (body.empty()) return out;

    for (const auto& piece : text::split(body, ',')) {
        const auto item = text::trim(piece);
        if (item.empty()) {
            ++out.malformed_count;
            continue;
        }
        switch (task) {
            case Task::ATE: {
                auto key = text::term_key(item);
                if (key == kNoAspectTerm) continue;
                out.labels.push_back({std::move(key), std::nullopt});
                break;
            }
            case Task::ATSC: {
                auto p = try_parse_polarity(item);
                if (!p || *p == Polarity::none) {
                    ++out.malformed_count;
                    continue;
                }
                out.labels.push_back({"", *p});
                break;
            }
            case Task::ASPE: {
                const auto colon = item.rfind(':');
                if (colon == std::string_view::npos) {
                    ++out.malformed_count;
                    continue;
                }
                auto key = text::term_key(item.substr(0, colon));
                auto p = try_parse_polarity(item.substr(colon + 1));
                if (key == kNoAspectTerm && p == Polarity::none) continue;
                if (key.empty() || !p || *p == Polarity::none) {
                    ++out.malformed_count;
                    continue;
                }
                out.labels.push_back({std::move(key), *p});
                break;
            }
        }
    }
    finish(out.labels);
    return out;
}

std::vector<Label> gold_labels(const AbsaExample& example, Task task,
                               std::optional<std::size_t> annotation_index) {
    std::vector<Label> out;
    switch (task) {
        case Task::ATE:
            for (const auto& a : example.annotations) out.push_back({text::term_key(a.term), std::nullopt});
            break;
        case Task::ATSC:
            if (annotation_index) {
                out.push_back({"", example.annotations.at(*annotation_index).polarity});
            } else {
                for (const auto& a : example.annotations) out.push_back({"", a.polarity});
            }
            break;
        case Task::ASPE:
            for (const auto& a : example.annotations) out.push_back({text::term_key(a.term), a.polarity});
            break;
    }
    finish(out);
    return out;
}

std::size_t scaled_count(double ratio, std::size_t n) {
    if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw InvalidArgument("ratio must be a non-negative number");
    const auto micro = static_cast<unsigned long long>(std::llround(ratio * 1'000'000.0));
    return static_cast<std::size_t>((static_cast<unsigned long long>(n) * micro) / 1'000'000ULL);
}

Dataset mix(const Dataset& original, const Dataset& synthetic, double ratio, std::uint64_t seed, bool strict) {
    std::size_t wanted = scaled_count(ratio, original.size());
    if (wanted == 0) return original;
    if (synthetic.size() < wanted) {
        std::ostringstream os;
        os << "mix needs " << wanted << " synthetic examples but only " << synthetic.size() << " are available";
        if (strict) throw InvalidArgument(os.str());
        log::warn(os.str() + "; using all of them");
        wanted = synthetic.size();
    }

    Dataset out;
    out.name = original.name + "+" + synthetic.name;
    out.split = original.split;
    out.examples = original.examples;
    out.examples.reserve(original.size() + wanted);
    for (std::size_t i = 0; i < wanted; ++i) {
        AbsaExample ex = synthetic.examples[i];
        ex.id = "syn-" + ex.id;
        out.examples.push_back(std::move(ex));
    }
    auto rng = make_rng(seed);
    shuffle(out.examples, rng);
    return out;
}

}  // namespace absaforge
