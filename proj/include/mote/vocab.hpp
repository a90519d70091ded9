#pragma once

#include "mote/types.hpp"

#include <optional>
#include <string>

namespace mote::vocab {

// Fixed toy vocabulary. Attribute values are single tokens and each
// behavior is a dedicated leading answer token, so response
// classification is an exact marker lookup.
inline constexpr TokenId PAD = 0;
inline constexpr TokenId BOS = 1;
inline constexpr TokenId EOS = 2;
inline constexpr TokenId QUERY = 3;      // "?" in phrasing A
inline constexpr TokenId QUERY_ALT = 4;  // "?" in phrasing B
inline constexpr TokenId PLUS = 5;
inline constexpr TokenId MARK_A = 6;  // "answer in language A" prompt marker
inline constexpr TokenId MARK_B = 7;
inline constexpr TokenId REFUSE = 8;  // leading answer token, class 0-REFUSED
inline constexpr TokenId ALIGN = 9;   // leading answer token, class 1-ALIGNED
inline constexpr TokenId THINK = 10;  // leading answer token, class 2-REASONED
inline constexpr TokenId ANS_A = 11;  // leading answer token, language A
inline constexpr TokenId ANS_B = 12;  // leading answer token, language B

inline constexpr int kNumTimes = 16;
inline constexpr int kNumPlaces = 16;
inline constexpr int kNumNumbers = 10;

inline constexpr TokenId TIME0 = 13;
inline constexpr TokenId PLACE0 = TIME0 + kNumTimes;
inline constexpr TokenId NUM0 = PLACE0 + kNumPlaces;

inline constexpr int kVocabSize = NUM0 + kNumNumbers;  // 55

inline constexpr TokenId time_token(int i) { return TIME0 + i; }
inline constexpr TokenId place_token(int i) { return PLACE0 + i; }
inline constexpr TokenId number_token(int i) { return NUM0 + i; }

/// Class marker emitted as the first answer token of a behavior class.
inline std::optional<TokenId> class_marker(BehaviorClass c) {
  switch (c) {
    case BehaviorClass::Refused: return REFUSE;
    case BehaviorClass::Aligned: return ALIGN;
    case BehaviorClass::Reasoned: return THINK;
    case BehaviorClass::LangA: return ANS_A;
    case BehaviorClass::LangB: return ANS_B;
    case BehaviorClass::Unknown: return std::nullopt;
  }
  return std::nullopt;
}

/// Inverse of class_marker. Non-marker tokens map to Unknown.
inline BehaviorClass marker_class(TokenId t) {
  switch (t) {
    case REFUSE: return BehaviorClass::Refused;
    case ALIGN: return BehaviorClass::Aligned;
    case THINK: return BehaviorClass::Reasoned;
    case ANS_A: return BehaviorClass::LangA;
    case ANS_B: return BehaviorClass::LangB;
    default: return BehaviorClass::Unknown;
  }
}

std::string token_name(TokenId t);

}  // namespace mote::vocab
