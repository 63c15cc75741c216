#include "llmdmd/variables.hpp"

#include <algorithm>
#include <stdexcept>

namespace llmdmd {

std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::State: return "state";
    case SignalKind::Algebraic: return "algebraic";
    case SignalKind::Input: return "input";
  }
  return "algebraic";
}

SignalKind signal_kind_from_string(std::string_view s) {
  if (s == "state") return SignalKind::State;
  if (s == "algebraic") return SignalKind::Algebraic;
  if (s == "input") return SignalKind::Input;
  throw std::invalid_argument("unknown signal kind '" + std::string(s) + "'");
}

std::vector<std::string> VariableLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

bool VariableLibrary::contains(std::string_view name) const { return find(name).has_value(); }

std::optional<SignalInfo> VariableLibrary::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const SignalInfo& e) { return e.name == name; });
  if (it == entries_.end()) return std::nullopt;
  return *it;
}

bool VariableLibrary::add(SignalInfo entry) {
  if (entry.name.empty()) throw std::invalid_argument("library entry needs a name");
  if (contains(entry.name)) return false;
  entries_.push_back(std::move(entry));
  return true;
}

}  // namespace llmdmd
