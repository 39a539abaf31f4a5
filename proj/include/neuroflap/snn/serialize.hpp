#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "neuroflap/snn/network.hpp"

namespace neuroflap::snn {

inline constexpr int kNetworkFormatVersion = 1;

/// Line-oriented text format. Every real value is written as a hexadecimal
/// float literal, so save -> load is lossless. Runtime state is not stored.
void save_network(const NetworkSpec& spec, std::ostream& out);
NetworkSpec load_network(std::istream& in);

std::string network_to_string(const NetworkSpec& spec);
NetworkSpec network_from_string(const std::string& text);

void save_network_file(const NetworkSpec& spec, const std::filesystem::path& path);
NetworkSpec load_network_file(const std::filesystem::path& path);

/// FNV-1a 64-bit digest of the canonical serialization, as 16 hex digits.
std::string network_hash(const NetworkSpec& spec);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace neuroflap::snn
