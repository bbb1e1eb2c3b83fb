#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>

namespace posinduce {

// Dense integer handle tagged by the kind of thing it indexes, so a word id
// cannot be passed where a cluster id is expected.
template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}
  constexpr explicit Id(std::size_t v) : value(static_cast<std::uint32_t>(v)) {}
  constexpr explicit Id(int v) : value(static_cast<std::uint32_t>(v)) {}

  constexpr std::size_t index() const { return value; }
  friend constexpr auto operator<=>(Id, Id) = default;
  friend std::ostream& operator<<(std::ostream& os, Id id) { return os << id.value; }
};

using SymbolId = Id<struct SymbolTag>;
using TagId = Id<struct TagTag>;
using ClusterId = Id<struct ClusterTag>;

}  // namespace posinduce

template <class Tag>
struct std::hash<posinduce::Id<Tag>> {
  std::size_t operator()(posinduce::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
