#pragma once

#include <array>
#include <string>
#include <string_view>

namespace ser {

// The fixed three-class label set. Integer values double as row/column
// indices into confusion matrices and as class ids in training targets.
enum class Label : int {
  kNeutral = 0,
  kNonNeutralMale = 1,
  kNonNeutralFemale = 2,
};

inline constexpr int kNumClasses = 3;

inline constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "neutral",
    "non_neutral_male",
    "non_neutral_female",
};

std::string label_name(Label label);

// Throws LabelError for anything outside the three known names.
Label label_from_name(std::string_view name);

}  // namespace ser
