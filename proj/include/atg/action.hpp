#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace atg {

// Index order is the serialization order (checkpoints, traces, policy head).
enum class Action : std::uint8_t {
  TurnLeft = 0,
  TurnRight = 1,
  TurnLeftMove = 2,
  TurnRightMove = 3,
  MoveForward = 4,
  NoOp = 5,
};

inline constexpr std::size_t kNumActions = 6;

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::TurnLeft,     Action::TurnRight,   Action::TurnLeftMove,
    Action::TurnRightMove, Action::MoveForward, Action::NoOp};

constexpr std::size_t action_index(Action a) noexcept {
  return static_cast<std::size_t>(a);
}

// Wire names used by traces and the environment server.
std::string_view action_name(Action a) noexcept;
std::optional<Action> parse_action(std::string_view name) noexcept;

// Left/right mirror of an action. Involution.
constexpr Action flip_action(Action a) noexcept {
  switch (a) {
    case Action::TurnLeft: return Action::TurnRight;
    case Action::TurnRight: return Action::TurnLeft;
    case Action::TurnLeftMove: return Action::TurnRightMove;
    case Action::TurnRightMove: return Action::TurnLeftMove;
    default: return a;
  }
}

constexpr bool action_turns_left(Action a) noexcept {
  return a == Action::TurnLeft || a == Action::TurnLeftMove;
}
constexpr bool action_turns_right(Action a) noexcept {
  return a == Action::TurnRight || a == Action::TurnRightMove;
}
constexpr bool action_moves(Action a) noexcept {
  return a == Action::TurnLeftMove || a == Action::TurnRightMove ||
         a == Action::MoveForward;
}

}  // namespace atg
