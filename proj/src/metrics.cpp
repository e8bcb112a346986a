#include "absaforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "absaforge/log.hpp"
#include "absaforge/text.hpp"
#include "httplib.h"

namespace absaforge {

using nlohmann::json;
using nlohmann::ordered_json;

PairCounts compare_labels(const std::vector<Label>& gold, const std::vector<Label>& predicted) {
    PairCounts c;
    std::size_t i = 0, j = 0;
    while (i < gold.size() && j < predicted.size()) {
        if (gold[i] == predicted[j]) {
            ++c.tp;
            ++i;
            ++j;
        } else if (gold[i] < predicted[j]) {
            ++c.fn;
            ++i;
        } else {
            ++c.fp;
            ++j;
        }
    }
    c.fn += gold.size() - i;
    c.fp += predicted.size() - j;
    return c;
}

F1Report F1Report::from_counts(Task task, PairCounts counts, std::size_t n_instances) {
    F1Report r;
    r.task = task;
    r.true_positives = counts.tp;
    r.false_positives = counts.fp;
    r.false_negatives = counts.fn;
    r.n_instances = n_instances;
    const auto tp = static_cast<double>(counts.tp);
    r.precision = counts.tp + counts.fp ? tp / static_cast<double>(counts.tp + counts.fp) : 0.0;
    r.recall = counts.tp + counts.fn ? tp / static_cast<double>(counts.tp + counts.fn) : 0.0;
    // Same value as 2PR/(P+R), computed from the integer counts.
    const auto denom = 2 * counts.tp + counts.fp + counts.fn;
    r.f1 = counts.tp ? 2.0 * tp / static_cast<double>(denom) : 0.0;
    return r;
}

ordered_json F1Report::to_json() const {
    ordered_json j;
    j["task"] = to_string(task);
    j["true_positives"] = true_positives;
    j["false_positives"] = false_positives;
    j["false_negatives"] = false_negatives;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["n_instances"] = n_instances;
    j["malformed_items"] = malformed_items;
    return j;
}

namespace {

std::vector<TaskInstance> aligned_instances(const Dataset& gold, const std::vector<std::string>& predictions,
                                            Task task) {
    auto instances = expand_instances(gold, task);
    if (instances.size() != predictions.size()) {
        throw AlignmentError("expected " + std::to_string(instances.size()) + " predictions for " +
                             std::string(to_string(task)) + " on '" + gold.name + "', got " +
                             std::to_string(predictions.size()));
    }
    return instances;
}

}  // namespace

F1Report score_serial(const Dataset& gold, const std::vector<std::string>& predictions, Task task) {
    const auto instances = aligned_instances(gold, predictions, task);
    PairCounts total;
    std::size_t malformed = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const auto g = gold_labels(gold.examples[inst.example_index], task, inst.annotation_index);
        const auto p = parse_prediction(predictions[i], task);
        const auto c = compare_labels(g, p.labels);
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn += c.fn;
        malformed += p.malformed_count;
    }
    auto r = F1Report::from_counts(task, total, instances.size());
    r.malformed_items = malformed;
    return r;
}

F1Report score(const Dataset& gold, const std::vector<std::string>& predictions, Task task) {
    const auto instances = aligned_instances(gold, predictions, task);
    const auto n = static_cast<std::int64_t>(instances.size());
    std::uint64_t tp = 0, fp = 0, fn = 0, malformed = 0;

#pragma omp parallel for schedule(static) reduction(+ : tp, fp, fn, malformed)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& inst = instances[static_cast<std::size_t>(i)];
        const auto g = gold_labels(gold.examples[inst.example_index], task, inst.annotation_index);
        const auto p = parse_prediction(predictions[static_cast<std::size_t>(i)], task);
        const auto c = compare_labels(g, p.labels);
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
        malformed += p.malformed_count;
    }

    auto r = F1Report::from_counts(task, {tp, fp, fn}, instances.size());
    r.malformed_items = static_cast<std::size_t>(malformed);
    return r;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

void check_alignment(const Dataset& gold, Task task, const std::vector<std::string>& manifest_ids) {
    const auto instances = expand_instances(gold, task);
    if (instances.size() != manifest_ids.size()) {
        throw AlignmentError("manifest has " + std::to_string(manifest_ids.size()) + " ids, gold has " +
                             std::to_string(instances.size()) + " instances");
    }
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].instance_id != manifest_ids[i]) {
            throw AlignmentError("manifest line " + std::to_string(i + 1) + ": expected id '" +
                                 instances[i].instance_id + "', found '" + manifest_ids[i] + "'");
        }
    }
}

ordered_json RunSummary::to_json() const {
    ordered_json j;
    j["task"] = to_string(task);
    j["runs"] = runs;
    j["mean_precision"] = mean_precision;
    j["mean_recall"] = mean_recall;
    j["mean_f1"] = mean_f1;
    j["sd_precision"] = sd_precision;
    j["sd_recall"] = sd_recall;
    j["sd_f1"] = sd_f1;
    return j;
}

RunSummary average_runs(const std::vector<F1Report>& reports) {
    if (reports.empty()) throw InvalidArgument("average_runs needs at least one report");
    RunSummary s;
    s.task = reports.front().task;
    s.runs = reports.size();
    for (const auto& r : reports) {
        if (r.task != s.task) throw InvalidArgument("cannot average reports of different tasks");
    }
    auto mean_sd = [&](auto field, double& mean, double& sd) {
        double sum = 0;
        for (const auto& r : reports) sum += r.*field;
        mean = sum / static_cast<double>(reports.size());
        if (reports.size() < 2) {
            sd = 0;
            return;
        }
        double sq = 0;
        for (const auto& r : reports) sq += (r.*field - mean) * (r.*field - mean);
        sd = std::sqrt(sq / static_cast<double>(reports.size() - 1));
    };
    mean_sd(&F1Report::precision, s.mean_precision, s.sd_precision);
    mean_sd(&F1Report::recall, s.mean_recall, s.sd_recall);
    mean_sd(&F1Report::f1, s.mean_f1, s.sd_f1);
    return s;
}

// ---------------------------------------------------------------------------

std::string EchoJudge::predict(const AbsaExample&, const TaskInstance& instance, Task) {
    return instance.target_text;
}

void ScriptedJudge::add(Task task, std::string instance_id, std::string prediction) {
    predictions_[{task, std::move(instance_id)}] = std::move(prediction);
}

ScriptedJudge ScriptedJudge::from_file(const std::filesystem::path& path) {
    ScriptedJudge judge;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        try {
            const auto j = json::parse(lines[i]);
            judge.add(parse_task(j.at("task").get<std::string>()), j.at("id").get<std::string>(),
                      j.at("prediction").get<std::string>());
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return judge;
}

std::string ScriptedJudge::predict(const AbsaExample&, const TaskInstance& instance, Task task) {
    auto it = predictions_.find({task, instance.instance_id});
    if (it == predictions_.end()) {
        throw JudgeError("no scripted prediction for " + std::string(to_string(task)) + " instance '" +
                         instance.instance_id + "'");
    }
    return it->second;
}

std::string VerifierJudge::predict(const AbsaExample& example, const TaskInstance& instance, Task) {
    if (example.annotations.empty()) return instance.target_text;
    std::vector<std::string> terms;
    std::vector<Polarity> polarities;
    for (const auto& a : example.annotations) {
        terms.push_back(a.term);
        polarities.push_back(a.polarity);
    }
    ChatRequest request;
    request.temperature = kVerifierTemperature;
    request.messages.push_back({Role::user, render_verifier_prompt(prompts_, example.raw_text, terms, polarities)});
    try {
        const auto reply = client_.chat(request);
        return parse_verdict(reply.content).ok() ? instance.target_text : std::string();
    } catch (const GatewayError& e) {
        throw JudgeError(e.what());
    } catch (const VerdictParseError&) {
        return {};
    }
}

Seq2SeqJudge::Seq2SeqJudge(std::string url, int timeout_ms) : url_(std::move(url)), timeout_ms_(timeout_ms) {
    if (url_.rfind("http://", 0) != 0) throw InvalidArgument("judge endpoint must be an http:// URL");
}

std::string Seq2SeqJudge::predict(const AbsaExample&, const TaskInstance& instance, Task task) {
    const auto slash = url_.find('/', 7);
    const std::string base = slash == std::string::npos ? url_ : url_.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : url_.substr(slash);
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
    const json body{{"task", to_string(task)}, {"input", instance.input_text}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw JudgeError("judge endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw JudgeError("judge endpoint returned HTTP " + std::to_string(res->status));
    const auto reply = json::parse(res->body, nullptr, false);
    if (!reply.is_object() || !reply.contains("prediction") || !reply["prediction"].is_string()) {
        throw JudgeError("judge reply lacks a 'prediction' string");
    }
    return reply["prediction"].get<std::string>();
}

ordered_json ConsistencyReport::to_json() const {
    auto arr = ordered_json::array();
    for (const auto& t : tasks) {
        arr.push_back(ordered_json{{"task", to_string(t.task)},
                                   {"consistent", t.consistent},
                                   {"total", t.total},
                                   {"unjudged", t.unjudged},
                                   {"percentage", t.percentage}});
    }
    return arr;
}

ConsistencyReport measure_consistency(const Dataset& synthetic, Judge& judge, const std::vector<Task>& tasks) {
    if (synthetic.empty()) throw InvalidArgument("consistency needs a non-empty dataset");
    if (tasks.empty()) throw InvalidArgument("consistency needs at least one task");
    ConsistencyReport report;
    for (auto task : tasks) {
        TaskConsistency tc;
        tc.task = task;
        const auto instances = expand_instances(synthetic, task);
        // Instances of one example are contiguous in expand_instances order.
        std::size_t i = 0;
        while (i < instances.size()) {
            const auto ex_index = instances[i].example_index;
            const auto& ex = synthetic.examples[ex_index];
            bool consistent = true;
            bool judged = true;
            for (; i < instances.size() && instances[i].example_index == ex_index; ++i) {
                if (!judged) continue;
                try {
                    const auto prediction = judge.predict(ex, instances[i], task);
                    const auto got = parse_prediction(prediction, task).labels;
                    if (got != gold_labels(ex, task, instances[i].annotation_index)) consistent = false;
                } catch (const JudgeError& e) {
                    log::warn("unjudged instance '" + instances[i].instance_id + "': " + e.what());
                    judged = false;
                }
            }
            if (!judged) {
                ++tc.unjudged;
                continue;
            }
            ++tc.total;
            if (consistent) ++tc.consistent;
        }
        tc.percentage = tc.total ? 100.0 * static_cast<double>(tc.consistent) / static_cast<double>(tc.total) : 0.0;
        report.tasks.push_back(tc);
    }
    return report;
}

// ---------------------------------------------------------------------------

bool DistributionReport::marginals_consistent() const {
    std::map<std::string, std::size_t> rows;
    std::map<Polarity, std::size_t> cols;
    for (const auto& [term, by_pol] : cross) {
        for (const auto& [pol, n] : by_pol) {
            rows[term] += n;
            cols[pol] += n;
        }
    }
    return rows == term_frequency && cols == polarity_frequency;
}

ordered_json DistributionReport::to_json() const {
    ordered_json j;
    j["examples"] = examples;
    j["annotations"] = annotations;
    ordered_json terms = ordered_json::object();
    for (const auto& [t, n] : term_frequency) terms[t] = n;
    j["term_frequency"] = std::move(terms);
    ordered_json pols = ordered_json::object();
    for (const auto& [p, n] : polarity_frequency) pols[std::string(to_string(p))] = n;
    j["polarity_frequency"] = std::move(pols);
    ordered_json cr = ordered_json::object();
    for (const auto& [t, by_pol] : cross) {
        ordered_json row = ordered_json::object();
        for (const auto& [p, n] : by_pol) row[std::string(to_string(p))] = n;
        cr[t] = std::move(row);
    }
    j["cross"] = std::move(cr);
    return j;
}

DistributionReport distribution_report(const Dataset& dataset, const TermFilter& filter) {
    DistributionReport r;
    r.examples = dataset.size();
    for (const auto& ex : dataset.examples) {
        for (const auto& a : ex.annotations) {
            const auto key = text::term_key(a.term);
            if (filter && !filter(key)) continue;
            ++r.annotations;
            ++r.term_frequency[key];
            ++r.polarity_frequency[a.polarity];
            ++r.cross[key][a.polarity];
        }
    }
    return r;
}

TermFilter load_lexicon(const std::filesystem::path& path) {
    auto terms = std::make_shared<std::set<std::string>>();
    for (const auto& line : read_lines(path)) {
        const auto key = text::term_key(line);
        if (!key.empty() && key[0] != '#') terms->insert(key);
    }
    return [terms](const std::string& term) { return terms->count(term) > 0; };
}

// ---------------------------------------------------------------------------

std::string format_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            const std::string pad(width[c] - row[c].size(), ' ');
            if (c) line += "  ";
            line += c == 0 ? row[c] + pad : pad + row[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

namespace {

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string format_f1(const F1Report& r) {
    return format_table({{"task", "instances", "tp", "fp", "fn", "precision", "recall", "f1"},
                         {std::string(to_string(r.task)), std::to_string(r.n_instances),
                          std::to_string(r.true_positives), std::to_string(r.false_positives),
                          std::to_string(r.false_negatives), fixed3(r.precision), fixed3(r.recall), fixed3(r.f1)}});
}

std::string format_summary(const RunSummary& s) {
    return format_table({{"task", "runs", "precision", "recall", "f1", "sd_f1"},
                         {std::string(to_string(s.task)), std::to_string(s.runs), fixed3(s.mean_precision),
                          fixed3(s.mean_recall), fixed3(s.mean_f1), fixed3(s.sd_f1)}});
}

std::string format_consistency(const ConsistencyReport& report) {
    std::vector<std::vector<std::string>> rows{{"task", "consistent", "total", "unjudged", "percent"}};
    for (const auto& t : report.tasks) {
        rows.push_back({std::string(to_string(t.task)), std::to_string(t.consistent), std::to_string(t.total),
                        std::to_string(t.unjudged), fixed2(t.percentage)});
    }
    return format_table(rows);
}

std::string format_distribution(const DistributionReport& r, std::size_t top) {
    std::vector<std::pair<std::string, std::size_t>> terms(r.term_frequency.begin(), r.term_frequency.end());
    std::stable_sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (top && terms.size() > top) terms.resize(top);

    const std::vector<Polarity> pols{Polarity::positive, Polarity::negative, Polarity::neutral};
    std::vector<std::vector<std::string>> rows{{"term", "positive", "negative", "neutral", "total"}};
    auto cell = [](const std::map<Polarity, std::size_t>& m, Polarity p) {
        auto it = m.find(p);
        return std::to_string(it == m.end() ? 0 : it->second);
    };
    for (const auto& [term, n] : terms) {
        const auto& by_pol = r.cross.at(term);
        rows.push_back({term, cell(by_pol, pols[0]), cell(by_pol, pols[1]), cell(by_pol, pols[2]), std::to_string(n)});
    }
    rows.push_back({"(all)", cell(r.polarity_frequency, pols[0]), cell(r.polarity_frequency, pols[1]),
                    cell(r.polarity_frequency, pols[2]), std::to_string(r.annotations)});
    return format_table(rows);
}

}  // namespace absaforge
