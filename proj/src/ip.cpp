#include "nsg/ip.hpp"

#include <charconv>
#include <stdexcept>

namespace nsg {

namespace {

unsigned parse_number(std::string_view text, unsigned max, std::string_view whole) {
  unsigned value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end || value > max) {
    throw std::invalid_argument("malformed address: " + std::string(whole));
  }
  return value;
}

}  // namespace

Ipv4 Ipv4::parse(std::string_view text) {
  std::uint32_t value = 0;
  std::size_t start = 0;
  for (int octet = 0; octet < 4; ++octet) {
    const std::size_t dot = text.find('.', start);
    const bool last = octet == 3;
    if (last != (dot == std::string_view::npos)) {
      throw std::invalid_argument("malformed address: " + std::string(text));
    }
    const auto part = text.substr(start, last ? std::string_view::npos : dot - start);
    value = (value << 8) | parse_number(part, 255, text);
    start = dot + 1;
  }
  return Ipv4{value};
}

std::string Ipv4::str() const {
  return std::to_string(value >> 24) + '.' + std::to_string((value >> 16) & 0xff) + '.' +
         std::to_string((value >> 8) & 0xff) + '.' + std::to_string(value & 0xff);
}

Cidr::Cidr(Ipv4 address, int length) : prefix_len(length) {
  if (length < 0 || length > 32) throw std::invalid_argument("prefix length out of range");
  base = Ipv4{address.value & mask()};
}

std::uint32_t Cidr::mask() const {
  return prefix_len == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix_len);
}

Cidr Cidr::parse(std::string_view text) {
  const std::size_t slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw std::invalid_argument("malformed prefix: " + std::string(text));
  }
  const auto length = parse_number(text.substr(slash + 1), 32, text);
  return Cidr(Ipv4::parse(text.substr(0, slash)), static_cast<int>(length));
}

std::string Cidr::str() const { return base.str() + '/' + std::to_string(prefix_len); }

}  // namespace nsg
