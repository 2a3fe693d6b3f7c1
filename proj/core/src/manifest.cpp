#include "voxbuild/manifest.hpp"

#include <fstream>
#include <sstream>

#include "voxbuild/error.hpp"

namespace voxbuild {

std::string manifest_to_string(const Manifest& m) {
  std::ostringstream os;
  os << "command=" << m.command << "\n";
  for (const auto& [k, v] : m.notes) os << "note." << k << "=" << v << "\n";
  {
    std::istringstream cfg(m.config_text);
    std::string line;
    while (std::getline(cfg, line)) {
      if (!line.empty()) os << "config." << line << "\n";
    }
  }
  for (const auto& [k, v] : m.inputs) os << "input." << k << "=" << v << "\n";
  for (const auto& [k, v] : m.artifacts) {
    os << "artifact." << k << "=" << v << "\n";
  }
  return os.str();
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << manifest_to_string(m);
}

}  // namespace voxbuild
