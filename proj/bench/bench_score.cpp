// Times the serial scorer against the OpenMP kernel on generated data.
//
//   bench_score [instances=50000] [repeats=5]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/corpus.hpp"
#include "absaforge/metrics.hpp"
#include "absaforge/rng.hpp"

using namespace absaforge;

namespace {

const std::vector<std::string> kTerms = {"food",   "service", "staff", "wine list", "prices", "ambience",
                                         "dessert", "waiter",  "menu",  "udon soup", "decor",  "battery life"};
const std::vector<Polarity> kPols = {Polarity::positive, Polarity::negative, Polarity::neutral};

Dataset make_gold(std::size_t n, Rng& rng) {
    Dataset d;
    d.name = "bench";
    d.split = Split::test;
    for (std::size_t i = 0; i < n; ++i) {
        AbsaExample ex;
        ex.id = std::to_string(i);
        ex.raw_text = "sentence " + ex.id;
        const auto k = uniform_index(rng, 4);
        for (std::size_t j = 0; j < k; ++j) {
            AspectAnnotation a{kTerms[uniform_index(rng, kTerms.size())], kPols[uniform_index(rng, kPols.size())]};
            bool dup = false;
            for (const auto& b : ex.annotations) dup = dup || b.term == a.term;
            if (!dup) ex.annotations.push_back(a);
        }
        d.examples.push_back(std::move(ex));
    }
    return d;
}

std::vector<std::string> noisy_predictions(const Dataset& gold, Rng& rng) {
    std::vector<std::string> out;
    for (const auto& ex : gold.examples) {
        auto target = render_task(ex, Task::ASPE).second;
        if (uniform_index(rng, 4) == 0) target += ", " + kTerms[uniform_index(rng, kTerms.size())] + ":neutral";
        out.push_back(std::move(target));
    }
    return out;
}

template <class F>
double best_ms(int repeats, F&& f) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1 && (std::string_view(argv[1]) == "-h" || std::string_view(argv[1]) == "--help")) {
        std::printf("usage: bench_score [instances=50000] [repeats=5]\n");
        return 0;
    }
    const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 50000;
    if (n == 0) {
        std::fprintf(stderr, "instances must be a positive number\n");
        return 64;
    }
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;

    Rng rng = make_rng(42);
    const auto gold = make_gold(n, rng);
    const auto preds = noisy_predictions(gold, rng);

    F1Report serial, parallel;
    const double t_serial = best_ms(repeats, [&] { serial = score_serial(gold, preds, Task::ASPE); });
    const double t_parallel = best_ms(repeats, [&] { parallel = score(gold, preds, Task::ASPE); });

    const bool same = serial.true_positives == parallel.true_positives &&
                      serial.false_positives == parallel.false_positives &&
                      serial.false_negatives == parallel.false_negatives;
    std::printf("instances %zu  threads %d\n", n, omp_get_max_threads());
    std::printf("serial    %9.2f ms  f1 %.6f\n", t_serial, serial.f1);
    std::printf("openmp    %9.2f ms  f1 %.6f\n", t_parallel, parallel.f1);
    std::printf("speedup   %9.2fx  counts %s\n", t_serial / t_parallel, same ? "equal" : "DIFFER");
    return same ? 0 : 1;
}
