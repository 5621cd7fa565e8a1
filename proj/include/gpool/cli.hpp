#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gpool::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3 };

/// Runs one `gpool` invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write leaves no partial output.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace gpool::cli
