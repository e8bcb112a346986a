#pragma once

// Micro-F1 scoring, label-consistency measurement and distribution reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/corpus.hpp"
#include "absaforge/error.hpp"
#include "absaforge/llm_gateway.hpp"
#include "absaforge/prompts.hpp"
#include "json.hpp"

namespace absaforge {

struct PairCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

/// Set comparison of two normalized, sorted, deduplicated label lists.
PairCounts compare_labels(const std::vector<Label>& gold, const std::vector<Label>& predicted);

struct F1Report {
    Task task = Task::ASPE;
    std::uint64_t true_positives = 0;
    std::uint64_t false_positives = 0;
    std::uint64_t false_negatives = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t n_instances = 0;
    std::size_t malformed_items = 0;

    static F1Report from_counts(Task task, PairCounts counts, std::size_t n_instances);
    nlohmann::ordered_json to_json() const;
};

/// Thrown when predictions do not line up with the gold instances.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Parallel kernel. `predictions[i]` belongs to expand_instances(gold, task)[i].
F1Report score(const Dataset& gold, const std::vector<std::string>& predictions, Task task);
/// Serial reference used to check the parallel kernel.
F1Report score_serial(const Dataset& gold, const std::vector<std::string>& predictions, Task task);

/// One prediction per line; a trailing newline does not add an empty entry.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Checks that `manifest_ids` equals the instance ids of `gold` for `task`.
void check_alignment(const Dataset& gold, Task task, const std::vector<std::string>& manifest_ids);

struct RunSummary {
    Task task = Task::ASPE;
    std::size_t runs = 0;
    double mean_precision = 0, mean_recall = 0, mean_f1 = 0;
    /// Sample standard deviation (n - 1); 0 for a single run.
    double sd_precision = 0, sd_recall = 0, sd_f1 = 0;

    nlohmann::ordered_json to_json() const;
};

RunSummary average_runs(const std::vector<F1Report>& reports);

// ---------------------------------------------------------------------------
// Consistency

/// Transport failure of a judge; the instance is excluded from the count.
class JudgeError : public Error {
public:
    using Error::Error;
};

/// Predicts the label text for a rendered instance.
class Judge {
public:
    virtual ~Judge() = default;
    virtual std::string predict(const AbsaExample& example, const TaskInstance& instance, Task task) = 0;
};

/// Returns the rendered gold target.
class EchoJudge final : public Judge {
public:
    std::string predict(const AbsaExample& example, const TaskInstance& instance, Task task) override;
};

/// Predictions keyed by (task, instance id), e.g. loaded from a file of
/// {"task", "id", "prediction"} records. Missing keys raise JudgeError.
class ScriptedJudge final : public Judge {
public:
    void add(Task task, std::string instance_id, std::string prediction);
    static ScriptedJudge from_file(const std::filesystem::path& path);
    std::string predict(const AbsaExample& example, const TaskInstance& instance, Task task) override;

private:
    std::map<std::pair<Task, std::string>, std::string> predictions_;
};

/// Asks the chat model, through the verifier prompt, whether the intended
/// labels hold. OK echoes the intended target; NOT_OK predicts nothing.
class VerifierJudge final : public Judge {
public:
    VerifierJudge(ChatClient& client, PromptSet prompts) : client_(client), prompts_(std::move(prompts)) {}
    std::string predict(const AbsaExample& example, const TaskInstance& instance, Task task) override;

private:
    ChatClient& client_;
    PromptSet prompts_;
};

/// External text-to-text model: POST {"task", "input"} to `url`, read
/// {"prediction"} back.
class Seq2SeqJudge final : public Judge {
public:
    explicit Seq2SeqJudge(std::string url, int timeout_ms = 60'000);
    std::string predict(const AbsaExample& example, const TaskInstance& instance, Task task) override;

private:
    std::string url_;
    int timeout_ms_;
};

struct TaskConsistency {
    Task task = Task::ASPE;
    std::size_t consistent = 0;
    std::size_t total = 0;
    std::size_t unjudged = 0;
    /// 100 * consistent / total; 0 when nothing was judged.
    double percentage = 0;
};

struct ConsistencyReport {
    std::vector<TaskConsistency> tasks;
    nlohmann::ordered_json to_json() const;
};

/// An example is consistent for a task when the judged labels equal the
/// intended ones. For ATSC every annotation must match; examples without
/// annotations have no ATSC instance and are not counted there.
ConsistencyReport measure_consistency(const Dataset& synthetic, Judge& judge, const std::vector<Task>& tasks);

// ---------------------------------------------------------------------------
// Distribution

struct DistributionReport {
    std::size_t examples = 0;
    std::size_t annotations = 0;
    /// Keyed by normalized term.
    std::map<std::string, std::size_t> term_frequency;
    std::map<Polarity, std::size_t> polarity_frequency;
    std::map<std::string, std::map<Polarity, std::size_t>> cross;

    /// Row and column sums of `cross` equal the two frequency tables.
    bool marginals_consistent() const;
    nlohmann::ordered_json to_json() const;
};

using TermFilter = std::function<bool(const std::string& normalized_term)>;

DistributionReport distribution_report(const Dataset& dataset, const TermFilter& filter = {});

/// Filter accepting the normalized terms listed one per line in `path`.
TermFilter load_lexicon(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Text tables

std::string format_table(const std::vector<std::vector<std::string>>& rows);
std::string format_f1(const F1Report& report);
std::string format_summary(const RunSummary& summary);
std::string format_consistency(const ConsistencyReport& report);
/// `top` limits the term rows (0: all), most frequent first.
std::string format_distribution(const DistributionReport& report, std::size_t top = 0);

}  // namespace absaforge
