#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace nsg {

/// IPv4 address held as a host-order 32-bit value.
struct Ipv4 {
  std::uint32_t value = 0;

  static Ipv4 parse(std::string_view text);
  std::string str() const;

  auto operator<=>(const Ipv4&) const = default;
};

/// Network prefix such as 192.168.1.0/24. The base address is normalized
/// (host bits cleared) on construction.
struct Cidr {
  Ipv4 base;
  int prefix_len = 32;

  Cidr() = default;
  Cidr(Ipv4 address, int length);

  static Cidr parse(std::string_view text);
  std::string str() const;

  std::uint32_t mask() const;
  bool contains(Ipv4 ip) const { return (ip.value & mask()) == base.value; }
  /// Number of addresses in the block.
  std::uint64_t size() const { return std::uint64_t{1} << (32 - prefix_len); }
  Ipv4 at(std::uint32_t offset) const { return Ipv4{base.value + offset}; }

  auto operator<=>(const Cidr&) const = default;
};

}  // namespace nsg

template <>
struct std::hash<nsg::Ipv4> {
  std::size_t operator()(const nsg::Ipv4& ip) const noexcept {
    return std::hash<std::uint32_t>{}(ip.value);
  }
};
