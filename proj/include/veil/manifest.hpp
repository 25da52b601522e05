#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace veil {

constexpr const char* kToolVersion = "0.1.0";

// Everything needed to reproduce a run: the resolved parameters (including
// seeds) plus hashes of all inputs and outputs. The id hashes the command,
// so two runs with the same parameters share an id; the timestamp is
// informational only and takes no part in it.
struct RunManifest {
    std::string run_id;
    std::string created_utc;
    std::string subcommand;
    nlohmann::json args;
    std::vector<std::string> model_fingerprints;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    void write(const std::string& path) const;
    static RunManifest load(const std::string& path);

    void finalize_id();
    void add_input(const std::string& path);
    void add_output(const std::string& path);
};

std::string manifest_path_for(const std::string& artifact_path);

}  // namespace veil
