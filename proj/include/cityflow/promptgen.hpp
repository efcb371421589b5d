#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cityflow {

struct DescriptorCategory {
  std::string name;
  std::vector<std::string> options;
};

// Ordered categories plus a sentence template holding one "{name}" slot per
// category.
struct DescriptorLibrary {
  std::vector<DescriptorCategory> categories;
  std::string template_text;

  void validate() const;
  std::size_t combinations() const;
  int category_index(const std::string& name) const;  // -1 when absent
};

// Forbids category_a = option_a together with category_b = option_b.
struct CompatibilityRule {
  std::string category_a;
  std::string option_a;
  std::string category_b;
  std::string option_b;
};

struct PromptRecord {
  std::vector<std::string> assignment;  // one option per category, library order
  std::string rendered;
  std::string canonical_key;
};

using PartialAssignment = std::map<std::string, std::string>;

// False iff both sides of some rule are present.
bool check_compat(const PartialAssignment& assignment, const std::vector<CompatibilityRule>& rules);

// Throws ValidationError for rules naming unknown categories or options, or
// pairing a category with itself.
void validate_rules(const DescriptorLibrary& library, const std::vector<CompatibilityRule>& rules);

std::string render_prompt(const DescriptorLibrary& library, const std::vector<std::string>& assignment);

// Lowercased, whitespace collapsed and trimmed.
std::string canonical_prompt_key(const std::string& text);

// Depth-first over categories in order, options in listed order, cutting any
// branch whose partial assignment already breaks a rule.
std::vector<PromptRecord> enumerate_prompts(const DescriptorLibrary& library,
                                            const std::vector<CompatibilityRule>& rules);

// Keeps the first record per canonical key.
std::vector<PromptRecord> dedup(const std::vector<PromptRecord>& records);

using PromptValidator = std::function<bool(const PromptRecord&)>;

bool accept_all(const PromptRecord&);

// enumerate -> validator filter -> dedup.
std::vector<PromptRecord> generate_prompts(const DescriptorLibrary& library,
                                           const std::vector<CompatibilityRule>& rules,
                                           const PromptValidator& validator = accept_all);

struct PromptSpec {
  DescriptorLibrary library;
  std::vector<CompatibilityRule> rules;
};

// {"categories": [{"name", "options"}], "rules": [{"a": [cat, opt], "b": [cat, opt]}], "template"}
PromptSpec parse_prompt_spec(const nlohmann::json& doc);

std::string records_to_jsonl(const DescriptorLibrary& library, const std::vector<PromptRecord>& records);

}  // namespace cityflow
