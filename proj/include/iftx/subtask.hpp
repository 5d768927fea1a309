#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace iftx {

enum class SubtaskId : std::size_t {
  TriggerChannel = 0,
  TriggerFunction = 1,
  ActionChannel = 2,
  ActionFunction = 3,
};

inline constexpr std::size_t kNumSubtasks = 4;
inline constexpr std::array<SubtaskId, 4> kAllSubtasks = {SubtaskId::TriggerChannel, SubtaskId::TriggerFunction,
                                                         SubtaskId::ActionChannel, SubtaskId::ActionFunction};

constexpr std::size_t index_of(SubtaskId s) { return static_cast<std::size_t>(s); }
constexpr SubtaskId subtask_at(std::size_t i) { return static_cast<SubtaskId>(i); }
constexpr bool is_channel_subtask(SubtaskId s) {
  return s == SubtaskId::TriggerChannel || s == SubtaskId::ActionChannel;
}

// Short names used in files and logs: tc, tf, ac, af.
constexpr std::string_view short_name(SubtaskId s) {
  constexpr std::array<std::string_view, 4> names = {"tc", "tf", "ac", "af"};
  return names[index_of(s)];
}

}  // namespace iftx
