#ifndef FDF_MANIFEST_HPP
#define FDF_MANIFEST_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fdf {

// FNV-1a 64-bit over a file's bytes; fingerprint for manifests, not crypto.
std::uint64_t fnv1a_file(const std::string& path);
std::string fnv1a_hex(std::uint64_t h);

// Every result-writing command emits one of these next to its outputs: the
// resolved config, root seed, tool version, input checksums, output list,
// and wall-clock timings.
struct RunManifest {
    std::string command;
    std::string tool_version;
    std::string config_snapshot;  // resolved config as JSON text
    std::uint64_t root_seed = 0;
    int workers = 1;
    std::map<std::string, std::string> input_checksums;  // path -> fnv1a hex
    std::vector<std::string> output_files;
    std::map<std::string, double> timings_sec;

    void add_input(const std::string& path);
    std::string to_json() const;
    void write(const std::string& path) const;
};

}  // namespace fdf

#endif
