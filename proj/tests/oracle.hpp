#pragma once

// Brute-force micro-F1 over random gold/prediction pairs. Independent of the
// library parser: labels are kept as structured tuples and only rendered to
// text for the code under test.

#include <cctype>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "absaforge/corpus.hpp"

namespace oracle {

using absaforge::Polarity;
using absaforge::Task;

struct Counts {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    double precision = 0, recall = 0, f1 = 0;
};

struct Instance {
    absaforge::Dataset gold;
    std::vector<std::string> predictions;
    Counts expected;
};

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline const char* pol_word(Polarity p) {
    return p == Polarity::positive ? "positive" : p == Polarity::negative ? "negative" : "neutral";
}

// Random casing and padding the scorer has to see through.
inline std::string disguise(const std::string& s, std::mt19937_64& rng) {
    std::string out;
    for (char c : s) out += (rng() % 3 == 0) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c;
    return std::string(rng() % 2, ' ') + out + std::string(rng() % 2, ' ');
}

inline Instance make(Task task, std::uint64_t seed) {
    static const std::vector<std::string> vocab = {"food",    "service", "wine list", "staff", "decor",
                                                   "prices",  "sushi",   "ambience",  "menu",  "dim sum"};
    static const Polarity pols[] = {Polarity::positive, Polarity::negative, Polarity::neutral};
    std::mt19937_64 rng(seed);
    Instance inst;
    inst.gold.name = "oracle";
    using Tuple = std::tuple<std::string, int>;  // term ("" for ATSC), polarity index
    std::uint64_t tp = 0, fp = 0, fn = 0;

    const auto n_examples = 1 + rng() % 12;
    for (std::size_t e = 0; e < n_examples; ++e) {
        absaforge::AbsaExample ex;
        ex.id = "e" + std::to_string(e);
        ex.raw_text = "Sentence " + std::to_string(e) + ".";
        const auto n_ann = rng() % 5;  // zero means no annotation
        for (std::size_t a = 0; a < n_ann; ++a) {
            ex.annotations.push_back({vocab[rng() % vocab.size()], pols[rng() % 3]});
        }
        inst.gold.examples.push_back(ex);

        // Gold sets per instance in expand_instances order.
        std::vector<std::set<Tuple>> gold_sets;
        if (task == Task::ATSC) {
            for (const auto& a : ex.annotations) gold_sets.push_back({Tuple{"", static_cast<int>(a.polarity)}});
        } else {
            std::set<Tuple> g;
            for (const auto& a : ex.annotations) {
                g.insert(Tuple{lower(a.term), task == Task::ATE ? 0 : static_cast<int>(a.polarity)});
            }
            gold_sets.push_back(g);
        }

        for (const auto& g : gold_sets) {
            std::set<Tuple> p;
            std::string text;
            const auto n_pred = rng() % 4;
            for (std::size_t k = 0; k < n_pred; ++k) {
                std::string item;
                Tuple t;
                const auto pol = pols[rng() % 3];
                // Bias towards gold labels so true positives are common.
                std::string term = !g.empty() && rng() % 2 ? std::get<0>(*std::next(g.begin(), static_cast<long>(rng() % g.size())))
                                                         : vocab[rng() % vocab.size()];
                if (task == Task::ATSC) {
                    t = {"", static_cast<int>(pol)};
                    item = disguise(pol_word(pol), rng);
                } else if (task == Task::ATE) {
                    t = {lower(term), 0};
                    item = disguise(term, rng);
                } else {
                    t = {lower(term), static_cast<int>(pol)};
                    item = disguise(term, rng) + ":" + pol_word(pol);
                }
                p.insert(t);
                if (!text.empty()) text += ",";
                text += item;
            }
            if (text.empty() && task != Task::ATSC && rng() % 2) {
                text = task == Task::ATE ? "noaspectterm" : "noaspectterm:none";
            }
            for (const auto& t : p) (g.count(t) ? tp : fp)++;
            for (const auto& t : g) fn += p.count(t) ? 0 : 1;
            inst.predictions.push_back(text);
        }
    }
    inst.expected.tp = tp;
    inst.expected.fp = fp;
    inst.expected.fn = fn;
    inst.expected.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    inst.expected.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    inst.expected.f1 = 2 * tp + fp + fn ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
    return inst;
}

}  // namespace oracle
