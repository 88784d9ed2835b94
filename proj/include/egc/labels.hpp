#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace egc {

// Side of the square grayscale face crop every classifier consumes.
inline constexpr int kFaceSize = 48;
inline constexpr int kEmotionClasses = 7;
inline constexpr int kGenderClasses = 2;

enum class EmotionLabel { Angry = 0, Disgust, Fear, Happy, Sad, Surprise, Neutral };

// 0 = female, 1 = male, following the IMDB metadata convention.
enum class GenderLabel { Female = 0, Male = 1 };

inline constexpr std::array<std::string_view, kEmotionClasses> kEmotionNames = {
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};
inline constexpr std::array<std::string_view, kGenderClasses> kGenderNames = {"female", "male"};

constexpr std::string_view to_string(EmotionLabel e) { return kEmotionNames[static_cast<int>(e)]; }
constexpr std::string_view to_string(GenderLabel g) { return kGenderNames[static_cast<int>(g)]; }

inline std::optional<EmotionLabel> emotion_from_index(int i) {
  if (i < 0 || i >= kEmotionClasses) return std::nullopt;
  return static_cast<EmotionLabel>(i);
}

inline std::optional<EmotionLabel> emotion_from_name(std::string_view name) {
  for (int i = 0; i < kEmotionClasses; ++i)
    if (kEmotionNames[i] == name) return static_cast<EmotionLabel>(i);
  return std::nullopt;
}

}  // namespace egc
