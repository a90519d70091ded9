#include "mote/dataset.hpp"

#include "mote/io.hpp"
#include "mote/vocab.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace mote {

using nlohmann::json;
using nlohmann::ordered_json;

BehaviorClass behavior_class_from_string(const std::string& name) {
  for (int i = 0; i < kNumBehaviorClasses; ++i) {
    auto c = static_cast<BehaviorClass>(i);
    if (name == to_string(c)) return c;
  }
  throw DataError("unknown behavior class: " + name);
}

int PromptTemplate::combo_count() const {
  int n = 1;
  for (const auto& a : axes) n *= static_cast<int>(a.values.size());
  return n;
}

int PromptTemplate::combo_index(const std::vector<int>& combo) const {
  int idx = 0;
  for (std::size_t a = 0; a < axes.size(); ++a)
    idx = idx * static_cast<int>(axes[a].values.size()) + combo[a];
  return idx;
}

BehaviorClass PromptTemplate::class_of(const std::vector<int>& combo) const {
  return classes.at(combo_index(combo));
}

void PromptTemplate::validate() const {
  if (axes.empty()) throw ConfigError("template '" + name + "': no axes");
  for (const auto& a : axes)
    if (a.values.empty())
      throw ConfigError("template '" + name + "': axis '" + a.name +
                        "' has no values");
  if (static_cast<int>(classes.size()) != combo_count())
    throw ConfigError("template '" + name +
                      "': class table does not cover the Cartesian product");
  for (const auto& s : pattern)
    if (s.kind == PatternSlot::AxisRef &&
        (s.axis < 0 || s.axis >= static_cast<int>(axes.size())))
      throw ConfigError("template '" + name + "': pattern references axis " +
                        std::to_string(s.axis));
}

std::vector<LabeledPrompt> generate_dataset(const PromptTemplate& tmpl) {
  tmpl.validate();
  const int n_axes = static_cast<int>(tmpl.axes.size());
  const int total = tmpl.combo_count();

  std::vector<LabeledPrompt> out;
  out.reserve(total);
  std::vector<int> combo(n_axes, 0);
  for (int idx = 0; idx < total; ++idx) {
    LabeledPrompt p;
    p.prompt_id = idx;
    p.combo = combo;
    for (const auto& slot : tmpl.pattern) {
      if (slot.kind == PatternSlot::Literal) {
        p.tokens.push_back(slot.literal);
      } else {
        const auto& val = tmpl.axes[slot.axis].values[combo[slot.axis]];
        p.tokens.insert(p.tokens.end(), val.begin(), val.end());
      }
    }
    p.expected = tmpl.classes[idx];
    if (auto marker = vocab::class_marker(p.expected))
      p.answer = {*marker, vocab::EOS};
    out.push_back(std::move(p));

    // lexicographic increment, last axis fastest
    for (int a = n_axes - 1; a >= 0; --a) {
      if (++combo[a] < static_cast<int>(tmpl.axes[a].values.size())) break;
      combo[a] = 0;
    }
  }
  return out;
}

std::vector<LabeledPrompt> generate_language_dataset(
    const PromptTemplate& tmpl) {
  for (const auto& c : tmpl.classes)
    if (c != BehaviorClass::LangA && c != BehaviorClass::LangB)
      throw ConfigError(
          "generate_language_dataset: template has non-language classes");
  return generate_dataset(tmpl);
}

BehaviorClass classify_response(const TokenSeq& completion) {
  if (completion.empty())
    throw DataError("classify_response: empty completion");
  return vocab::marker_class(completion.front());
}

PromptTemplate toy_behavior_template() {
  using namespace vocab;
  PromptTemplate t;
  t.name = "toy-behavior-v1";

  Axis time{"time", {}};
  for (int i = 0; i < kNumTimes; ++i) time.values.push_back({time_token(i)});
  Axis place{"place", {}};
  for (int i = 0; i < kNumPlaces; ++i)
    place.values.push_back({place_token(i)});
  t.axes = {time, place};
  t.pattern = {PatternSlot::lit(BOS), PatternSlot::ref(0), PatternSlot::ref(1),
               PatternSlot::lit(QUERY)};

  // Sensitivity rule. Places 9 and 14 are always refused, place 3 is
  // refused for recent times only, other recent questions get a direct
  // aligned answer and everything else goes through reasoning.
  const auto is_refused_place = [](int p) { return p == 9 || p == 14; };
  const auto is_recent = [](int ti) { return ti >= 12; };
  t.classes.reserve(kNumTimes * kNumPlaces);
  for (int ti = 0; ti < kNumTimes; ++ti) {
    for (int pl = 0; pl < kNumPlaces; ++pl) {
      BehaviorClass c;
      if (is_refused_place(pl) || (is_recent(ti) && pl == 3))
        c = BehaviorClass::Refused;
      else if (is_recent(ti))
        c = BehaviorClass::Aligned;
      else
        c = BehaviorClass::Reasoned;
      t.classes.push_back(c);
    }
  }
  return t;
}

PromptTemplate toy_language_template() {
  using namespace vocab;
  PromptTemplate t;
  t.name = "toy-language-v1";

  Axis a{"number_a", {}}, b{"number_b", {}};
  for (int i = 0; i < kNumNumbers; ++i) {
    a.values.push_back({number_token(i)});
    b.values.push_back({number_token(i)});
  }
  Axis phrasing{"phrasing", {{QUERY}, {QUERY_ALT}}};
  Axis marker{"marker", {{}, {MARK_A}, {MARK_B}}};
  t.axes = {a, b, phrasing, marker};
  t.pattern = {PatternSlot::lit(BOS), PatternSlot::ref(0),
               PatternSlot::lit(PLUS), PatternSlot::ref(1),
               PatternSlot::ref(2),   PatternSlot::ref(3)};

  // Marked prompts answer in the marked language; unmarked prompts
  // default to language A. 400 A / 200 B over the 600 combinations.
  const int total = t.combo_count();
  t.classes.reserve(total);
  for (int ai = 0; ai < kNumNumbers; ++ai)
    for (int bi = 0; bi < kNumNumbers; ++bi)
      for (int ph = 0; ph < 2; ++ph)
        for (int mk = 0; mk < 3; ++mk)
          t.classes.push_back(mk == 2 ? BehaviorClass::LangB
                                      : BehaviorClass::LangA);
  return t;
}

TemplateSplit split_prompts(const std::vector<LabeledPrompt>& prompts,
                            Real heldout_fraction, std::uint64_t seed) {
  if (heldout_fraction <= 0.0 || heldout_fraction >= 1.0)
    throw ConfigError("split_prompts: heldout_fraction must be in (0, 1)");
  const int n = static_cast<int>(prompts.size());
  const int n_heldout = static_cast<int>(heldout_fraction * n);
  if (n_heldout == 0 || n_heldout == n)
    throw ConfigError("split_prompts: split leaves an empty side");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  TemplateSplit s;
  for (int i = 0; i < n; ++i) {
    if (i < n_heldout)
      s.heldout.push_back(prompts[order[i]]);
    else
      s.fit.push_back(prompts[order[i]]);
  }
  auto by_id = [](const LabeledPrompt& x, const LabeledPrompt& y) {
    return x.prompt_id < y.prompt_id;
  };
  std::sort(s.fit.begin(), s.fit.end(), by_id);
  std::sort(s.heldout.begin(), s.heldout.end(), by_id);
  return s;
}

std::string template_to_json(const PromptTemplate& tmpl) {
  ordered_json j;
  j["name"] = tmpl.name;
  j["axes"] = json::array();
  for (const auto& a : tmpl.axes) {
    ordered_json ja;
    ja["name"] = a.name;
    ja["values"] = a.values;
    j["axes"].push_back(ja);
  }
  j["pattern"] = json::array();
  for (const auto& s : tmpl.pattern) {
    ordered_json js;
    if (s.kind == PatternSlot::Literal)
      js["token"] = s.literal;
    else
      js["axis"] = s.axis;
    j["pattern"].push_back(js);
  }
  j["classes"] = json::array();
  for (const auto& c : tmpl.classes) j["classes"].push_back(to_string(c));
  return j.dump(2) + "\n";
}

PromptTemplate template_from_json(const std::string& text) {
  json j = json::parse(text);
  PromptTemplate t;
  t.name = j.at("name").get<std::string>();
  for (const auto& ja : j.at("axes")) {
    Axis a;
    a.name = ja.at("name").get<std::string>();
    for (const auto& v : ja.at("values")) a.values.push_back(v.get<TokenSeq>());
    t.axes.push_back(std::move(a));
  }
  for (const auto& js : j.at("pattern")) {
    if (js.contains("token"))
      t.pattern.push_back(PatternSlot::lit(js.at("token").get<TokenId>()));
    else
      t.pattern.push_back(PatternSlot::ref(js.at("axis").get<int>()));
  }
  for (const auto& c : j.at("classes"))
    t.classes.push_back(behavior_class_from_string(c.get<std::string>()));
  t.validate();
  return t;
}

PromptTemplate load_template(const std::string& path) {
  return template_from_json(io::read_file(path));
}

void save_template(const PromptTemplate& tmpl, const std::string& path) {
  io::write_file_atomic(path, template_to_json(tmpl));
}

std::string prompts_to_jsonl(const std::vector<LabeledPrompt>& prompts,
                             const std::vector<std::string>* splits) {
  if (splits && splits->size() != prompts.size())
    throw ConfigError("prompts_to_jsonl: split labels do not match prompts");
  std::ostringstream os;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    ordered_json j;
    j["prompt_id"] = p.prompt_id;
    j["combo"] = p.combo;
    j["tokens"] = p.tokens;
    j["expected_class"] = to_string(p.expected);
    j["answer"] = p.answer;
    if (splits) j["split"] = (*splits)[i];
    os << j.dump() << "\n";
  }
  return os.str();
}

std::vector<LabeledPrompt> prompts_from_jsonl(
    const std::string& text, std::vector<std::string>* splits) {
  std::vector<LabeledPrompt> out;
  if (splits) splits->clear();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    LabeledPrompt p;
    p.prompt_id = j.at("prompt_id").get<int>();
    p.combo = j.at("combo").get<std::vector<int>>();
    p.tokens = j.at("tokens").get<TokenSeq>();
    p.expected =
        behavior_class_from_string(j.at("expected_class").get<std::string>());
    p.answer = j.at("answer").get<TokenSeq>();
    out.push_back(std::move(p));
    if (splits)
      splits->push_back(j.value("split", std::string("fit")));
  }
  if (out.empty()) throw DataError("prompts jsonl: no records");
  return out;
}

void save_prompts(const std::vector<LabeledPrompt>& prompts,
                  const std::string& path,
                  const std::vector<std::string>* splits) {
  io::write_file_atomic(path, prompts_to_jsonl(prompts, splits));
}

std::vector<LabeledPrompt> load_prompts(const std::string& path,
                                        std::vector<std::string>* splits) {
  return prompts_from_jsonl(io::read_file(path), splits);
}

std::string vocab::token_name(TokenId t) {
  using namespace vocab;
  switch (t) {
    case PAD: return "PAD";
    case BOS: return "BOS";
    case EOS: return "EOS";
    case QUERY: return "QUERY";
    case QUERY_ALT: return "QUERY_ALT";
    case PLUS: return "PLUS";
    case MARK_A: return "MARK_A";
    case MARK_B: return "MARK_B";
    case REFUSE: return "REFUSE";
    case ALIGN: return "ALIGN";
    case THINK: return "THINK";
    case ANS_A: return "ANS_A";
    case ANS_B: return "ANS_B";
    default: break;
  }
  if (t >= TIME0 && t < TIME0 + kNumTimes)
    return "TIME_" + std::to_string(t - TIME0);
  if (t >= PLACE0 && t < PLACE0 + kNumPlaces)
    return "PLACE_" + std::to_string(t - PLACE0);
  if (t >= NUM0 && t < NUM0 + kNumNumbers)
    return "NUM_" + std::to_string(t - NUM0);
  return "TOK_" + std::to_string(t);
}

}  // namespace mote
