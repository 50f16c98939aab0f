#include "annoloop/prompting.hpp"

#include <fstream>
#include <sstream>

#include "annoloop/errors.hpp"
#include "text_util.hpp"

namespace annoloop::prompting {

namespace {

void require_non_empty(std::string_view text, const char* part) {
  if (detail::trim_view(text).empty()) throw EmptyPart(part);
}

}  // namespace

Prompt build_generation_prompt(const InstructionSet& instr,
                               const std::optional<Template>& t,
                               const dataset::Record& x) {
  require_non_empty(instr.encoding, "encoding instruction");
  require_non_empty(x.canonical_text, "query record");
  Prompt prompt;
  prompt.push_back({backend::Role::system, instr.encoding});
  if (t) {
    require_non_empty(t->record_text, "template record");
    require_non_empty(t->summary_text, "template summary");
    prompt.push_back({backend::Role::assistant, t->record_text});
    prompt.push_back({backend::Role::assistant, t->summary_text});
  }
  prompt.push_back({backend::Role::user, x.canonical_text});
  return prompt;
}

Prompt build_recovery_prompt(const InstructionSet& instr,
                             const std::optional<Template>& t,
                             std::string_view summary) {
  require_non_empty(instr.decoding, "decoding instruction");
  require_non_empty(summary, "query summary");
  Prompt prompt;
  prompt.push_back({backend::Role::system, instr.decoding});
  if (t) {
    require_non_empty(t->record_text, "template record");
    require_non_empty(t->summary_text, "template summary");
    // Reversed relative to generation: demonstrate summary -> data.
    prompt.push_back({backend::Role::assistant, t->summary_text});
    prompt.push_back({backend::Role::assistant, t->record_text});
  }
  prompt.push_back({backend::Role::user, std::string(summary)});
  return prompt;
}

std::size_t estimate_tokens(std::string_view text) {
  return (text.size() + 3) / 4;
}

std::vector<std::string> check_budget(const Prompt& messages,
                                      const BudgetLimits& limits) {
  std::size_t instruction_tokens = 0;
  std::size_t template_tokens = 0;
  for (const backend::ChatMessage& m : messages) {
    if (m.role == backend::Role::system) {
      instruction_tokens += estimate_tokens(m.content);
    } else if (m.role == backend::Role::assistant) {
      template_tokens += estimate_tokens(m.content);
    }
  }
  std::vector<std::string> warnings;
  if (instruction_tokens > limits.instruction) {
    warnings.push_back("instruction part is ~" +
                       std::to_string(instruction_tokens) +
                       " tokens, over the limit of " +
                       std::to_string(limits.instruction));
  }
  if (template_tokens > limits.exemplar) {
    warnings.push_back("template part is ~" + std::to_string(template_tokens) +
                       " tokens, over the limit of " +
                       std::to_string(limits.exemplar));
  }
  return warnings;
}

namespace {

std::string read_text_file(const std::string& path, const char* part) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + std::string(part) + " file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = detail::trim_copy(buf.str());
  if (text.empty()) throw EmptyPart(std::string(part) + " file " + path);
  return text;
}

}  // namespace

InstructionSet load_instructions(const std::string& encode_path,
                                 const std::string& decode_path) {
  return {read_text_file(encode_path, "encoding instruction"),
          read_text_file(decode_path, "decoding instruction")};
}

Template load_template(const std::string& record_path,
                       const std::string& summary_path) {
  Template t;
  t.record_text = read_text_file(record_path, "template record");
  t.summary_text = read_text_file(summary_path, "template summary");
  t.origin = {TemplateOrigin::Kind::human_seed, 0};
  return t;
}

}  // namespace annoloop::prompting
