#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace absaforge {

enum class Polarity { positive, negative, neutral, none };

/// Case-insensitive. Throws FormatError on anything outside the four labels
/// ("conflict" included).
Polarity parse_polarity(std::string_view word);
std::optional<Polarity> try_parse_polarity(std::string_view word);
std::string_view to_string(Polarity p);

enum class Task { ATE, ATSC, ASPE };

Task parse_task(std::string_view word);
std::string_view to_string(Task t);
inline constexpr Task kAllTasks[] = {Task::ATE, Task::ATSC, Task::ASPE};

enum class Provenance { original, agentic, prompting };

Provenance parse_provenance(std::string_view word);
std::string_view to_string(Provenance p);

inline constexpr std::string_view kNoAspectTerm = "noaspectterm";

struct AspectAnnotation {
    std::string term;
    Polarity polarity = Polarity::neutral;

    friend bool operator==(const AspectAnnotation&, const AspectAnnotation&) = default;
};

struct AbsaExample {
    std::string id;
    std::string raw_text;
    std::vector<AspectAnnotation> annotations;
    /// `aspectCategories` payload, carried through untouched.
    nlohmann::ordered_json categories = nlohmann::ordered_json::array();
    Provenance provenance = Provenance::original;
};

enum class Split { train, test };

struct Dataset {
    std::string name;
    Split split = Split::train;
    std::vector<AbsaExample> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
};

/// Reads a JSON-lines file of records with fields ID, raw_text, aspectTerms,
/// aspectCategories and optional provenance. A JSON array document holding
/// the same records is accepted as well.
Dataset load_semeval(const std::filesystem::path& path);

/// Parses one record. `index` is only used in error messages.
AbsaExample parse_record(const nlohmann::ordered_json& record, std::size_t index);
nlohmann::ordered_json to_record(const AbsaExample& example);

/// One JSON object per line in canonical key order.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Appends a single record; used for checkpointed generation runs.
void append_example(const AbsaExample& example, const std::filesystem::path& path);
std::string serialize_record(const AbsaExample& example);

/// One model instance derived from an example. ATSC produces one instance per
/// annotation; ATE and ASPE produce one per example.
struct TaskInstance {
    std::string instance_id;
    std::size_t example_index = 0;
    std::optional<std::size_t> annotation_index;
    std::string input_text;
    std::string target_text;
};

/// Renders the (input, target) pair. For ATSC `annotation_index` selects the
/// focal term; it is required and must be in range.
std::pair<std::string, std::string> render_task(const AbsaExample& example, Task task,
                                                std::size_t annotation_index = 0);

std::vector<TaskInstance> expand_instances(const Dataset& dataset, Task task);

/// A predicted or gold label. ATE fills `term`; ATSC fills `polarity`;
/// ASPE fills both.
struct Label {
    std::string term;
    std::optional<Polarity> polarity;

    friend bool operator==(const Label&, const Label&) = default;
    friend auto operator<=>(const Label&, const Label&) = default;
};

struct ParsedPrediction {
    /// Normalized, deduplicated, sorted.
    std::vector<Label> labels;
    std::size_t malformed_count = 0;
};

/// Total function over arbitrary model output.
ParsedPrediction parse_prediction(std::string_view text, Task task);

/// Gold label set for one instance in the same normalized form
/// parse_prediction produces.
std::vector<Label> gold_labels(const AbsaExample& example, Task task,
                               std::optional<std::size_t> annotation_index = std::nullopt);

/// Original examples followed by the first floor(ratio*|original|) synthetic
/// ones, then shuffled with `seed`. Synthetic ids get a "syn-" prefix. With
/// `strict`, too few synthetic examples is an error; otherwise the available
/// ones are used and a warning is logged.
Dataset mix(const Dataset& original, const Dataset& synthetic, double ratio, std::uint64_t seed,
            bool strict = true);

/// floor(ratio * n) computed without binary floating-point drift for ratios
/// given with up to six decimal places.
std::size_t scaled_count(double ratio, std::size_t n);

}  // namespace absaforge
