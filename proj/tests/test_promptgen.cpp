#include <doctest.h>

#include <nlohmann/json.hpp>

#include "cityflow/error.hpp"
#include "cityflow/binary_io.hpp"
#include "cityflow/promptgen.hpp"
#include "prompt_oracles.hpp"

using namespace cityflow;

namespace {

DescriptorLibrary demo_library() {
  return {{{"function", {"residential", "industrial"}},
           {"wall", {"brick", "glass curtain wall"}},
           {"roof", {"flat", "gabled"}}},
          "A {function} building with {wall} facades and a {roof} roof."};
}

}  // namespace

TEST_CASE("demo library with the industrial glass exclusion") {
  const auto lib = demo_library();
  const std::vector<CompatibilityRule> rules{{"function", "industrial", "wall", "glass curtain wall"}};
  const auto records = enumerate_prompts(lib, rules);
  CHECK(records.size() == 6);
  CHECK(records.front().rendered == "A residential building with brick facades and a flat roof.");
  for (const auto& r : records) {
    CHECK_FALSE((r.assignment[0] == "industrial" && r.assignment[1] == "glass curtain wall"));
    CHECK(r.rendered == render_prompt(lib, r.assignment));
  }
  CHECK(enumerate_prompts(lib, {}).size() == 8);
}

TEST_CASE("shipped library file yields 6 of 8") {
  const auto spec = parse_prompt_spec(nlohmann::json::parse(io::read_file(std::string(CITYFLOW_REPO_DATA) + "/prompt_library.json")));
  CHECK(spec.library.combinations() == 8);
  const auto records = generate_prompts(spec.library, spec.rules);
  CHECK(records.size() == 6);
  const auto jsonl = records_to_jsonl(spec.library, records);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 6);
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  CHECK(first.contains("prompt"));
  CHECK(first["assignment"]["function"] == "residential");
}

TEST_CASE("total exclusion") {
  DescriptorLibrary lib{{{"a", {"x"}}, {"b", {"y"}}}, "{a} {b}"};
  CHECK(enumerate_prompts(lib, {{"a", "x", "b", "y"}}).empty());
}

TEST_CASE("check_compat") {
  const std::vector<CompatibilityRule> rules{{"function", "industrial", "wall", "glass curtain wall"}};
  CHECK(check_compat({}, rules));
  CHECK_FALSE(check_compat({{"function", "industrial"}, {"wall", "glass curtain wall"}}, rules));
  CHECK(check_compat({{"function", "industrial"}}, rules));
  CHECK(check_compat({{"function", "industrial"}, {"wall", "brick"}}, rules));
}

TEST_CASE("rule and library validation") {
  const auto lib = demo_library();
  CHECK_THROWS_AS(validate_rules(lib, {{"function", "office", "wall", "brick"}}), ValidationError);
  CHECK_THROWS_AS(validate_rules(lib, {{"colour", "red", "wall", "brick"}}), ValidationError);
  CHECK_THROWS_AS(validate_rules(lib, {{"wall", "brick", "wall", "glass curtain wall"}}), ValidationError);
  CHECK_THROWS_AS(enumerate_prompts(lib, {{"function", "office", "wall", "brick"}}), ValidationError);

  DescriptorLibrary dup{{{"a", {"x", "x"}}}, "{a}"};
  CHECK_THROWS_AS(dup.validate(), ValidationError);
  DescriptorLibrary missing_slot{{{"a", {"x"}}, {"b", {"y"}}}, "{a}"};
  CHECK_THROWS_AS(missing_slot.validate(), ValidationError);
  DescriptorLibrary no_options{{{"a", {}}}, "{a}"};
  CHECK_THROWS_AS(no_options.validate(), ValidationError);
}

TEST_CASE("dedup and canonical keys") {
  CHECK(canonical_prompt_key("  A  Red\tHouse ") == "a red house");
  auto rec = [](std::string text) { return PromptRecord{{}, text, canonical_prompt_key(text)}; };
  const auto out = dedup({rec("A red house"), rec("a  RED house"), rec("b")});
  REQUIRE(out.size() == 2);
  CHECK(out[0].rendered == "A red house");

  std::vector<PromptRecord> many{rec("x"), rec("y"), rec("z")};
  CHECK(dedup(many).size() == 3);
  for (int k = 0; k < 4; ++k) many.push_back(rec("y"));
  CHECK(dedup(many).size() == 3);  // n = 7 with k = 5 copies: 7 - 5 + 1

  const auto lib = demo_library();
  auto reject_flat = [](const PromptRecord& r) { return r.assignment[2] != "flat"; };
  CHECK(generate_prompts(lib, {}, reject_flat).size() == 4);
}

TEST_CASE("pruned DFS equals the filtered product on random libraries") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = testing::random_prompt_case(rng);
    const auto expected = testing::brute_force_prompts(c);
    const auto got = enumerate_prompts(c.library, c.rules);
    std::set<std::vector<std::string>> got_set;
    for (const auto& r : got) got_set.insert(r.assignment);
    CHECK(got_set.size() == got.size());
    CHECK(got_set == expected);

    auto reversed = c.rules;
    std::reverse(reversed.begin(), reversed.end());
    const auto again = enumerate_prompts(c.library, reversed);
    REQUIRE(again.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(again[i].assignment == got[i].assignment);
  }
}

TEST_CASE("prompt spec parsing errors") {
  CHECK_THROWS_AS(parse_prompt_spec(nlohmann::json::parse(R"({"categories": 3})")), ValidationError);
  const auto spec = parse_prompt_spec(nlohmann::json::parse(
      R"({"categories": [{"name": "a", "options": ["x", "y"]}, {"name": "b", "options": ["z"]}]})"));
  CHECK(spec.library.template_text == "{a}, {b}");
  CHECK(generate_prompts(spec.library, spec.rules).front().rendered == "x, z");
}
