#pragma once

#include "mote/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mote {

/// One attribute axis: a name plus the token sequence each value expands
/// to. A value may expand to no tokens at all (e.g. an absent marker).
struct Axis {
  std::string name;
  std::vector<TokenSeq> values;
};

/// A slot in the prompt pattern: either a fixed token or a reference to
/// an attribute axis.
struct PatternSlot {
  enum Kind { Literal, AxisRef } kind = Literal;
  TokenId literal = 0;
  int axis = 0;

  static PatternSlot lit(TokenId t) { return {Literal, t, 0}; }
  static PatternSlot ref(int axis) { return {AxisRef, 0, axis}; }
};

/// Parameterized prompt pattern. The Cartesian product of the axis values
/// is the dataset; `classes` maps every combination (lexicographic in
/// axis order, last axis fastest) to its target behavior class.
struct PromptTemplate {
  std::string name;
  std::vector<Axis> axes;
  std::vector<PatternSlot> pattern;
  std::vector<BehaviorClass> classes;

  int combo_count() const;
  int combo_index(const std::vector<int>& combo) const;
  BehaviorClass class_of(const std::vector<int>& combo) const;
  void validate() const;
};

struct LabeledPrompt {
  int prompt_id = 0;
  std::vector<int> combo;  // axis value indices
  TokenSeq tokens;
  BehaviorClass expected = BehaviorClass::Unknown;
  TokenSeq answer;  // [class marker, EOS]
};

/// Full Cartesian expansion of the template, deterministic order.
std::vector<LabeledPrompt> generate_dataset(const PromptTemplate& tmpl);

/// Same expansion, restricted to templates whose classes are the two
/// language classes.
std::vector<LabeledPrompt> generate_language_dataset(
    const PromptTemplate& tmpl);

/// Class of a model completion, decided by its leading marker token.
/// Anything else is Unknown; callers must keep Unknown separate.
BehaviorClass classify_response(const TokenSeq& completion);

// Built-in toy templates. The behavior template is a 16x16 (time, place)
// grid with two always-refused places, a refused (recent, place-3) band,
// an aligned recency band and a reasoned default, so refusal stays a
// minority class with both place-driven and interaction-driven cells.
PromptTemplate toy_behavior_template();
// Arithmetic prompts in two phrasings with an optional language marker:
// marked prompts answer in the marked language, unmarked ones default to
// language A (400 A / 200 B over 600 prompts).
PromptTemplate toy_language_template();

/// Deterministic split of whole attribute combinations, for holding part
/// of the template out of expert identification.
struct TemplateSplit {
  std::vector<LabeledPrompt> fit;
  std::vector<LabeledPrompt> heldout;
};
TemplateSplit split_prompts(const std::vector<LabeledPrompt>& prompts,
                            Real heldout_fraction, std::uint64_t seed);

// Template JSON and dataset JSONL round-trips.
std::string template_to_json(const PromptTemplate& tmpl);
PromptTemplate template_from_json(const std::string& text);
PromptTemplate load_template(const std::string& path);
void save_template(const PromptTemplate& tmpl, const std::string& path);

std::string prompts_to_jsonl(const std::vector<LabeledPrompt>& prompts,
                             const std::vector<std::string>* splits = nullptr);
std::vector<LabeledPrompt> prompts_from_jsonl(
    const std::string& text, std::vector<std::string>* splits = nullptr);
void save_prompts(const std::vector<LabeledPrompt>& prompts,
                  const std::string& path,
                  const std::vector<std::string>* splits = nullptr);
std::vector<LabeledPrompt> load_prompts(
    const std::string& path, std::vector<std::string>* splits = nullptr);

}  // namespace mote
