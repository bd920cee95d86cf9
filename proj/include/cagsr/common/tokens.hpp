#pragma once

namespace cagsr {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecialTokens = 4;

inline constexpr bool is_special_token(int id) { return id >= 0 && id < kNumSpecialTokens; }

}  // namespace cagsr
