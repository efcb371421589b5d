#include "cityflow/promptgen.hpp"

#include <cctype>
#include <set>
#include <unordered_set>

#include "cityflow/error.hpp"

namespace cityflow {

namespace {

constexpr const char* kModule = "promptgen";

struct ResolvedRule {
  int cat_a, opt_a, cat_b, opt_b;
};

int option_index(const DescriptorCategory& cat, const std::string& option) {
  for (std::size_t i = 0; i < cat.options.size(); ++i) {
    if (cat.options[i] == option) return static_cast<int>(i);
  }
  return -1;
}

std::vector<ResolvedRule> resolve(const DescriptorLibrary& library, const std::vector<CompatibilityRule>& rules) {
  validate_rules(library, rules);
  std::vector<ResolvedRule> out;
  for (const auto& r : rules) {
    const int a = library.category_index(r.category_a);
    const int b = library.category_index(r.category_b);
    out.push_back({a, option_index(library.categories[a], r.option_a), b,
                   option_index(library.categories[b], r.option_b)});
  }
  return out;
}

}  // namespace

void DescriptorLibrary::validate() const {
  if (categories.empty()) throw ValidationError(kModule, "library has no categories");
  std::set<std::string> names;
  for (const auto& c : categories) {
    if (!names.insert(c.name).second) throw ValidationError(kModule, "duplicate category \"" + c.name + "\"");
    if (c.options.empty()) throw ValidationError(kModule, "category \"" + c.name + "\" has no options");
    std::set<std::string> opts(c.options.begin(), c.options.end());
    if (opts.size() != c.options.size()) {
      throw ValidationError(kModule, "category \"" + c.name + "\" repeats an option");
    }
    const std::string slot = "{" + c.name + "}";
    const auto first = template_text.find(slot);
    if (first == std::string::npos || template_text.find(slot, first + 1) != std::string::npos) {
      throw ValidationError(kModule, "template must hold exactly one " + slot + " slot");
    }
  }
  // Any other "{...}" would survive rendering verbatim.
  for (std::size_t pos = template_text.find('{'); pos != std::string::npos; pos = template_text.find('{', pos + 1)) {
    const auto close = template_text.find('}', pos);
    if (close == std::string::npos || !names.count(template_text.substr(pos + 1, close - pos - 1))) {
      throw ValidationError(kModule, "template has an unknown slot at offset " + std::to_string(pos));
    }
  }
}

std::size_t DescriptorLibrary::combinations() const {
  std::size_t n = 1;
  for (const auto& c : categories) n *= c.options.size();
  return n;
}

int DescriptorLibrary::category_index(const std::string& name) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

bool check_compat(const PartialAssignment& assignment, const std::vector<CompatibilityRule>& rules) {
  for (const auto& r : rules) {
    auto a = assignment.find(r.category_a);
    auto b = assignment.find(r.category_b);
    if (a != assignment.end() && b != assignment.end() && a->second == r.option_a && b->second == r.option_b) {
      return false;
    }
  }
  return true;
}

void validate_rules(const DescriptorLibrary& library, const std::vector<CompatibilityRule>& rules) {
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    const std::string where = "rule " + std::to_string(i) + ": ";
    if (r.category_a == r.category_b) throw ValidationError(kModule, where + "both sides name \"" + r.category_a + "\"");
    for (const auto& [cat, opt] : {std::pair{r.category_a, r.option_a}, std::pair{r.category_b, r.option_b}}) {
      const int c = library.category_index(cat);
      if (c < 0) throw ValidationError(kModule, where + "unknown category \"" + cat + "\"");
      if (option_index(library.categories[c], opt) < 0) {
        throw ValidationError(kModule, where + "unknown option \"" + opt + "\" in \"" + cat + "\"");
      }
    }
  }
}

std::string render_prompt(const DescriptorLibrary& library, const std::vector<std::string>& assignment) {
  if (assignment.size() != library.categories.size()) {
    throw ArgumentError(kModule, "assignment does not cover every category");
  }
  std::string out = library.template_text;
  for (std::size_t c = 0; c < assignment.size(); ++c) {
    const std::string slot = "{" + library.categories[c].name + "}";
    const auto pos = out.find(slot);
    if (pos != std::string::npos) out.replace(pos, slot.size(), assignment[c]);
  }
  return out;
}

std::string canonical_prompt_key(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

std::vector<PromptRecord> enumerate_prompts(const DescriptorLibrary& library,
                                            const std::vector<CompatibilityRule>& rules) {
  library.validate();
  const auto resolved = resolve(library, rules);
  const int depth = static_cast<int>(library.categories.size());

  // Rules checked when their later category gets assigned.
  std::vector<std::vector<ResolvedRule>> closing(depth);
  for (auto r : resolved) {
    if (r.cat_a > r.cat_b) {
      std::swap(r.cat_a, r.cat_b);
      std::swap(r.opt_a, r.opt_b);
    }
    closing[r.cat_b].push_back(r);
  }

  std::vector<PromptRecord> out;
  std::vector<int> choice(depth, 0);
  std::function<void(int)> descend = [&](int level) {
    if (level == depth) {
      PromptRecord rec;
      for (int c = 0; c < depth; ++c) rec.assignment.push_back(library.categories[c].options[choice[c]]);
      rec.rendered = render_prompt(library, rec.assignment);
      rec.canonical_key = canonical_prompt_key(rec.rendered);
      out.push_back(std::move(rec));
      return;
    }
    const int options = static_cast<int>(library.categories[level].options.size());
    for (int o = 0; o < options; ++o) {
      choice[level] = o;
      bool ok = true;
      for (const auto& r : closing[level]) {
        if (r.opt_b == o && choice[r.cat_a] == r.opt_a) {
          ok = false;
          break;
        }
      }
      if (ok) descend(level + 1);
    }
  };
  descend(0);
  return out;
}

std::vector<PromptRecord> dedup(const std::vector<PromptRecord>& records) {
  std::unordered_set<std::string> seen;
  std::vector<PromptRecord> out;
  for (const auto& r : records) {
    if (seen.insert(r.canonical_key).second) out.push_back(r);
  }
  return out;
}

bool accept_all(const PromptRecord&) { return true; }

std::vector<PromptRecord> generate_prompts(const DescriptorLibrary& library,
                                           const std::vector<CompatibilityRule>& rules,
                                           const PromptValidator& validator) {
  std::vector<PromptRecord> kept;
  for (auto& r : enumerate_prompts(library, rules)) {
    if (validator(r)) kept.push_back(std::move(r));
  }
  return dedup(kept);
}

PromptSpec parse_prompt_spec(const nlohmann::json& doc) {
  PromptSpec spec;
  try {
    for (const auto& c : doc.at("categories")) {
      spec.library.categories.push_back(
          {c.at("name").get<std::string>(), c.at("options").get<std::vector<std::string>>()});
    }
    if (doc.contains("template")) {
      spec.library.template_text = doc.at("template").get<std::string>();
    } else {
      for (std::size_t i = 0; i < spec.library.categories.size(); ++i) {
        spec.library.template_text += (i ? ", {" : "{") + spec.library.categories[i].name + "}";
      }
    }
    if (doc.contains("rules")) {
      for (const auto& r : doc.at("rules")) {
        const auto a = r.at("a").get<std::vector<std::string>>();
        const auto b = r.at("b").get<std::vector<std::string>>();
        if (a.size() != 2 || b.size() != 2) throw ValidationError(kModule, "rule sides must be [category, option]");
        spec.rules.push_back({a[0], a[1], b[0], b[1]});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(kModule, std::string("malformed library: ") + e.what());
  }
  spec.library.validate();
  validate_rules(spec.library, spec.rules);
  return spec;
}

std::string records_to_jsonl(const DescriptorLibrary& library, const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < r.assignment.size(); ++c) assignment[library.categories[c].name] = r.assignment[c];
    nlohmann::ordered_json line = {{"assignment", assignment}, {"prompt", r.rendered}, {"key", r.canonical_key}};
    out += line.dump() + "\n";
  }
  return out;
}

}  // namespace cityflow
