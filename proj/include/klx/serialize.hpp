#pragma once

#include <iosfwd>
#include <string>
#include <variant>

#include "klx/instance.hpp"

namespace klx {

// Line-oriented text format, header "klx-instance 1". Doubles use 17 significant
// digits so a save/load round trip reproduces every table bit for bit.
inline constexpr int kInstanceFormatVersion = 1;

void save_instance(std::ostream& os, const AlignmentInstance& inst);
void save_instance(std::ostream& os, const TokenMdp& mdp);

using AnyInstance = std::variant<AlignmentInstance, TokenMdp>;
AnyInstance load_instance(std::istream& is);

void save_instance_file(const std::string& path, const AnyInstance& inst);
AnyInstance load_instance_file(const std::string& path);

}  // namespace klx
