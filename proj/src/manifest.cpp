#include "veil/manifest.hpp"

#include <ctime>

#include "veil/util.hpp"

namespace veil {

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["schema"] = "veil-manifest-v1";
    j["tool_version"] = kToolVersion;
    j["run_id"] = run_id;
    j["created_utc"] = created_utc;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["model_fingerprints"] = model_fingerprints;
    j["input_hashes"] = input_hashes;
    j["output_hashes"] = output_hashes;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "veil-manifest-v1")
        throw IoError("unknown manifest schema");
    RunManifest m;
    m.run_id = j.value("run_id", "");
    m.created_utc = j.value("created_utc", "");
    m.subcommand = j.at("subcommand").get<std::string>();
    m.args = j.at("args");
    if (j.contains("model_fingerprints"))
        m.model_fingerprints =
            j["model_fingerprints"].get<std::vector<std::string>>();
    if (j.contains("input_hashes"))
        m.input_hashes =
            j["input_hashes"].get<std::map<std::string, std::string>>();
    if (j.contains("output_hashes"))
        m.output_hashes =
            j["output_hashes"].get<std::map<std::string, std::string>>();
    return m;
}

void RunManifest::write(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const std::string& path) {
    const auto bytes = read_file(path);
    return from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
}

void RunManifest::finalize_id() {
    uint64_t h = fnv1a(subcommand);
    h = fnv1a(args.dump(), h);
    for (const auto& fp : model_fingerprints) h = fnv1a(fp, h);
    run_id = hex64(h);
    if (created_utc.empty()) {
        char buf[32];
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        created_utc = buf;
    }
}

void RunManifest::add_input(const std::string& path) {
    input_hashes[path] = hex64(hash_file(path));
}

void RunManifest::add_output(const std::string& path) {
    output_hashes[path] = hex64(hash_file(path));
}

std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

}  // namespace veil
