#include "doctest.h"

#include <fstream>

#include "absaforge/prompts.hpp"
#include "absaforge/rng.hpp"
#include "support.hpp"

using namespace absaforge;
using nlohmann::json;

namespace {

Policy ginger_policy() {
    Policy p;
    p.terms = {"Ginger House"};
    p.polarities = {Polarity::positive};
    p.style = {"informal", "simple sentences", SentenceLength::medium};
    p.domain = "Restaurants";
    return p;
}

bool contains(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("template placeholders and escapes") {
    PromptTemplate t("t", "Hi {name}, {{literal}} and {name} again; {Not} {a-b} {}");
    CHECK(t.placeholders() == std::set<std::string>{"name"});
    CHECK(t.render({{"name", "Bo"}, {"extra", "x"}}) == "Hi Bo, {literal} and Bo again; {Not} {a-b} {}");
    CHECK_THROWS_WITH_AS(t.render({}), doctest::Contains("{name}"), TemplateError);

    PromptTemplate json_like("j", "{{\"a\": \"{value}\"}}");
    CHECK(json_like.render({{"value", "1"}}) == "{\"a\": \"1\"}");
}

TEST_CASE("built-in templates carry the reference wording") {
    const auto& d = PromptSet::defaults();
    CHECK(d.generation.placeholders() ==
          std::set<std::string>{"aspect_term", "polarity", "writing_style", "grammar_structure", "sentence_length",
                                "domain"});
    CHECK(d.baseline.placeholders() == std::set<std::string>{"aspect_term", "polarity", "sent", "domain"});
    CHECK(d.verifier.placeholders() == std::set<std::string>{"sent", "aspect_term", "polarity"});

    CHECK(contains(d.generation.text(),
                   "You are a critic who can generate comments on the specified aspect and sentiment.\n"
                   "We would like you to complete a sentence generation task. Please follow these requirements:\n"
                   "- Generate a sentence using this aspect term: {aspect_term} with the following polarities: "
                   "{polarity}\n"
                   "- Write in the style: {writing_style}, and use a {grammar_structure} grammatical structure and "
                   "{sentence_length} sentence length.\n"));
    CHECK(contains(d.generation.text(), "Use plain apostrophes (') \xE2\x80\x94 do not escape with backslashes."));
    CHECK(contains(d.baseline.text(),
                   "- Generated sentence must have the writing style and grammar structure and length of this "
                   "sentence: {sent}\n"));
    CHECK(contains(d.baseline.text(), "The udon soup was rich and flavorful. (term incorrect)\n"));
    CHECK(contains(d.verifier.text(),
                   "- If any term is missing, incorrect, or has the wrong polarity, respond only with: NOT_OK\n"));
    CHECK(contains(d.verifier.text(),
                   "The udon soup was rich and flavorful. Terms=['soup'] Polarity=['positive'] \xE2\x86\x92 NOT_OK"));

    // Embedded copies match the files on disk.
    CHECK(d.generation.text() == testing::read_file(testing::test_dir() / "../prompts/generation.txt"));
    CHECK(d.verifier.text() == testing::read_file(testing::test_dir() / "../prompts/verifier.txt"));
}

TEST_CASE("rendered prompts") {
    const auto& d = PromptSet::defaults();
    const auto gen = render_generation_prompt(d, ginger_policy());
    CHECK(contains(gen, "this aspect term: ['Ginger House'] with the following polarities: ['positive']"));
    CHECK(contains(gen, "Write in the style: informal, and use a simple sentences grammatical structure and medium"));
    CHECK(gen == testing::golden("prompt_generation.txt", gen));

    const auto base = render_baseline_prompt(d, {"prices", "chef's special"}, {Polarity::negative, Polarity::positive},
                                             "The food was good.", "Restaurants");
    CHECK(contains(base, "length of this sentence: The food was good.\n"));
    CHECK(contains(base, "Input:\n['prices', \"chef's special\"] ['negative', 'positive']"));
    CHECK(base == testing::golden("prompt_baseline.txt", base));

    const auto ver = render_verifier_prompt(d, "  The balcony was cramped.  ", {"balcony"}, {Polarity::negative});
    CHECK(contains(ver, "Input:\nThe balcony was cramped. Terms=['balcony'] Polarity=['negative']"));
    CHECK(ver == testing::golden("prompt_verifier.txt", ver));

    const auto style = render_style_prompt(d, {"A.", "B."}, "Laptops");
    CHECK(contains(style, "1. A.\n2. B.\n"));
    CHECK(contains(style, "{\"writing_style\""));

    CHECK_THROWS_AS(render_baseline_prompt(d, {}, {}, "x", "R"), InvalidArgument);
    CHECK_THROWS_AS(render_verifier_prompt(d, " ", {"a"}, {Polarity::positive}), InvalidArgument);
    CHECK_THROWS_AS(render_verifier_prompt(d, "a", {"a"}, {}), InvalidArgument);
    auto bad = ginger_policy();
    bad.terms.clear();
    CHECK_THROWS_AS(render_generation_prompt(d, bad), InvalidArgument);
}

TEST_CASE("prompt directories override single templates") {
    testing::TempDir tmp;
    testing::write_file(tmp / "verifier.txt", "Judge {sent} with {aspect_term} and {polarity}.");
    const auto set = PromptSet::load(tmp.path());
    CHECK(render_verifier_prompt(set, "S", {"t"}, {Polarity::neutral}) == "Judge S with ['t'] and ['neutral'].");
    CHECK(set.generation.text() == PromptSet::defaults().generation.text());
    CHECK_THROWS_AS(PromptSet::load(tmp / "absent"), IoError);
}

TEST_CASE("the curated reply corpus parses field-exactly") {
    std::ifstream in(testing::fixture("generation_corpus.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto c = json::parse(line);
        INFO(c["name"].get<std::string>());
        ++n;
        ParsedGeneration g;
        REQUIRE_NOTHROW(g = parse_generation(c["reply"].get<std::string>()));
        CHECK(g.sentence == c["sentence"].get<std::string>());
        CHECK(g.terms == c["terms"].get<std::vector<std::string>>());
        std::vector<Polarity> pols;
        for (const auto& p : c["polarities"]) pols.push_back(parse_polarity(p.get<std::string>()));
        CHECK(g.polarities == pols);
    }
    CHECK(n == 50);
}

TEST_CASE("unusable replies raise GenerationParseError") {
    const char* bad[] = {
        "",
        "Just a sentence.",
        "The food.\nPolarity=['positive']",
        "The food.\nTerms=['food']",
        "Terms=['food']\nPolarity=['positive']",
        "The food.\nTerms=[]\nPolarity=[]",
        "The food.\nTerms=['food', 'service']\nPolarity=['positive']",
        "The food.\nTerms=['food']\nPolarity=['great']",
        "The food.\nTerms=['food']\nPolarity=['none']",
        "The food.\nTerms=['']\nPolarity=['positive']",
        "The food.\nPolarity=['positive']\nTerms=['food']",
    };
    for (const char* reply : bad) {
        INFO(reply);
        CHECK_THROWS_AS(parse_generation(reply), GenerationParseError);
    }
}

TEST_CASE("list literals") {
    using V = std::vector<std::string>;
    CHECK(parse_list_literal("['a', 'b']") == V{"a", "b"});
    CHECK(parse_list_literal("[\"a\",\"b\"]") == V{"a", "b"});
    CHECK(parse_list_literal("[]") == V{});
    CHECK(parse_list_literal("a, b ,c") == V{"a", "b", "c"});
    CHECK(parse_list_literal("['it\\'s']") == V{"it's"});
    CHECK(parse_list_literal("['Joe's', 'x']") == V{"Joe's", "x"});
    CHECK(parse_list_literal("['a, b']") == V{"a, b"});
    CHECK(parse_list_literal("['back\\\\slash']") == V{"back\\slash"});
    CHECK(parse_list_literal("  [ 'a' ]  ") == V{"a"});
}

TEST_CASE("render and parse are inverse on random generations") {
    auto rng = make_rng(404);
    const std::vector<std::string> words = {"food",  "wine list", "chef's table", "say \"cheese\"", "wi-fi",
                                            "café",  "staff",     "it's \"odd\"",  "a, b",          "back\\slash",
                                            "Menu",  "udon soup"};
    const Polarity pols[] = {Polarity::positive, Polarity::negative, Polarity::neutral};
    for (int i = 0; i < 1000; ++i) {
        ParsedGeneration g;
        g.sentence = "Sentence number " + std::to_string(i) + " mentions things.";
        const auto k = 1 + uniform_index(rng, 4);
        for (std::size_t j = 0; j < k; ++j) {
            g.terms.push_back(words[uniform_index(rng, words.size())]);
            g.polarities.push_back(pols[uniform_index(rng, 3)]);
        }
        const auto block = render_generation_block(g);
        INFO(block);
        CHECK(parse_generation(block) == g);
    }
}

TEST_CASE("verdicts") {
    CHECK(parse_verdict("OK").ok());
    CHECK(parse_verdict(" ok. ").ok());
    CHECK(parse_verdict("**OK**").ok());
    CHECK_FALSE(parse_verdict("NOT_OK").ok());
    CHECK_FALSE(parse_verdict("Not OK").ok());
    CHECK_FALSE(parse_verdict("`NOT_OK`\n").ok());
    CHECK(parse_verdict("NOT_OK").raw_reply == "NOT_OK");
    CHECK_THROWS_AS(parse_verdict("The sentence is fine."), VerdictParseError);
    CHECK_THROWS_AS(parse_verdict(""), VerdictParseError);
    CHECK(to_string(VerdictKind::not_ok) == "NOT_OK");
}
