#ifndef VOXBUILD_MANIFEST_HPP_
#define VOXBUILD_MANIFEST_HPP_

#include <map>
#include <string>

namespace voxbuild {

// Run manifest: the resolved configuration, input hashes, and artifact
// hashes that make a run reproducible. Plain sorted key=value lines so
// manifests diff cleanly; no timestamps, so identical reruns produce
// byte-identical manifests.
struct Manifest {
  std::string command;
  std::string config_text;                      // canonical key=value lines
  std::map<std::string, std::string> inputs;    // name -> content hash
  std::map<std::string, std::string> artifacts; // relative path -> hash
  std::map<std::string, std::string> notes;     // free-form provenance
};

std::string manifest_to_string(const Manifest& m);
void save_manifest(const Manifest& m, const std::string& path);

}  // namespace voxbuild

#endif  // VOXBUILD_MANIFEST_HPP_
