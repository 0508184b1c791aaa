// SPDX-License-Identifier: Apache-2.0
#include <string>

#include "dsa/choice_model.hpp"
#include "dsa/error.hpp"

namespace dsa {

namespace {

std::string background_block(const SurveySchema& schema, const BackgroundProfile& profile) {
  std::string out;
  for (std::size_t i = 0; i < schema.num_backgrounds(); ++i) {
    const auto& q = schema.background(i);
    if (i) out += '\n';
    out += "Q: " + (q.text.empty() ? q.id : q.text) + '\n';
    out += "A: " + q.options[profile[i]];
  }
  return out;
}

std::string core_block(const SurveySchema& schema) {
  const auto& core = schema.core();
  std::string out = core.text.empty() ? core.id : core.text;
  out += "\nOptions:";
  for (const auto& o : core.options) out += "\n- " + o.label;
  return out;
}

}  // namespace

std::string render_prompt(const SurveySchema& schema, const BackgroundProfile& profile,
                          std::string_view template_name) {
  schema.validate(profile);
  auto it = schema.prompt_templates().find(std::string(template_name));
  if (it == schema.prompt_templates().end()) {
    fail(ErrorCode::UnknownTemplate, "no prompt template named '" + std::string(template_name) + "'");
  }
  const std::string& tpl = it->second;
  for (const char* required : {"{{background_qa}}", "{{core_question}}"}) {
    if (tpl.find(required) == std::string::npos) {
      fail(ErrorCode::UnboundPlaceholder,
           "template '" + std::string(template_name) + "' does not contain " + required);
    }
  }

  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    std::size_t open = tpl.find("{{", pos);
    if (open == std::string::npos) {
      out.append(tpl, pos, std::string::npos);
      break;
    }
    out.append(tpl, pos, open - pos);
    std::size_t close = tpl.find("}}", open + 2);
    if (close == std::string::npos) fail(ErrorCode::UnboundPlaceholder, "unterminated placeholder in template");
    std::string name = tpl.substr(open + 2, close - open - 2);
    if (name == "background_qa") {
      out += background_block(schema, profile);
    } else if (name == "core_question") {
      out += core_block(schema);
    } else if (name == "instruction") {
      out += kDirectInstruction;
    } else {
      fail(ErrorCode::UnboundPlaceholder, "unknown placeholder {{" + name + "}}");
    }
    pos = close + 2;
  }
  return out;
}

}  // namespace dsa
