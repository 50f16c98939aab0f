#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"

namespace annoloop::prompting {

// The two fixed instruction texts: encoding turns a record into a summary,
// decoding turns a summary back into a record.
struct InstructionSet {
  std::string encoding;
  std::string decoding;
};

struct TemplateOrigin {
  enum class Kind { human_seed, iteration };
  Kind kind = Kind::human_seed;
  int iteration = 0;  // meaningful only when kind == iteration

  bool operator==(const TemplateOrigin&) const = default;
};

// The one-shot exemplar: a (record text, summary text) pair embedded in
// every prompt.  This is the only object the tuning loop changes.
struct Template {
  std::string record_text;
  std::string summary_text;
  TemplateOrigin origin;

  bool operator==(const Template&) const = default;
};

using Prompt = std::vector<backend::ChatMessage>;

// [system: encoding] [assistant: t.record_text] [assistant: t.summary_text]
// [user: x.canonical_text].  Without a template (zero-shot) the two
// assistant messages are omitted.  Throws EmptyPart on any empty part.
Prompt build_generation_prompt(const InstructionSet& instr,
                               const std::optional<Template>& t,
                               const dataset::Record& x);

// [system: decoding] [assistant: t.summary_text] [assistant: t.record_text]
// [user: s].  The exemplar order is reversed to demonstrate the
// summary -> data direction.  Throws EmptyPart.
Prompt build_recovery_prompt(const InstructionSet& instr,
                             const std::optional<Template>& t,
                             std::string_view summary);

// ceil(UTF-8 bytes / 4); a documented approximation used only for budget
// warnings, never for truncation.
std::size_t estimate_tokens(std::string_view text);

struct BudgetLimits {
  std::size_t instruction = 500;
  std::size_t exemplar = 3000;  // the template part of the prompt
};

// One warning string per prompt part (named "instruction" or "template")
// whose token estimate exceeds its limit.  Advisory only.
std::vector<std::string> check_budget(const Prompt& messages,
                                      const BudgetLimits& limits = {});

// Plain-text file loaders; trimmed of surrounding whitespace.  Throw IoError
// on unreadable files and EmptyPart when the file holds only whitespace.
InstructionSet load_instructions(const std::string& encode_path,
                                 const std::string& decode_path);
Template load_template(const std::string& record_path,
                       const std::string& summary_path);

}  // namespace annoloop::prompting
