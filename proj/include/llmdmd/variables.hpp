#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "llmdmd/skeleton.hpp"

namespace llmdmd {

enum class SignalKind { State, Algebraic, Input };

std::string_view to_string(SignalKind kind);
SignalKind signal_kind_from_string(std::string_view s);

struct SignalInfo {
  std::string name;
  std::string unit;
  std::string description;
  SignalKind kind = SignalKind::Algebraic;

  bool operator==(const SignalInfo&) const = default;
};

/// The admitted algebraic/input variables of one loop. Entries are only
/// ever appended.
class VariableLibrary {
 public:
  VariableLibrary() = default;
  explicit VariableLibrary(TargetKind loop) : loop_(loop) {}

  TargetKind loop() const { return loop_; }
  const std::vector<SignalInfo>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  bool contains(std::string_view name) const;
  std::optional<SignalInfo> find(std::string_view name) const;
  /// Returns false (and leaves the library unchanged) if the name exists.
  bool add(SignalInfo entry);
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  TargetKind loop_ = TargetKind::Differential;
  std::vector<SignalInfo> entries_;
};

}  // namespace llmdmd
