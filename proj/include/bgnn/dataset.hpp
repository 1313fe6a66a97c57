#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bgnn/dynamics.hpp"

namespace bgnn {

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DynamicsError("unknown split label: " + s);
}

struct DatasetEntry {
    std::string path; // trajectory directory
    Trajectory trajectory;
    int mesh_index = 0;
    Split split = Split::Train;
};

struct Dataset {
    std::vector<TriMesh> meshes;
    std::vector<DatasetEntry> entries;

    const TriMesh& mesh_of(const DatasetEntry& entry) const { return meshes[entry.mesh_index]; }
    const TriMesh& mesh_of(std::size_t entry) const { return meshes[entries[entry].mesh_index]; }
};

// Manifest: {"trajectories": [{"path": ..., "split": ...}, ...]}. Paths are
// relative to the manifest location; each trajectory's meta names its mesh.
inline void save_manifest(const std::vector<std::pair<std::string, Split>>& trajectories,
                          const std::string& manifest_path) {
    nlohmann::json j;
    j["trajectories"] = nlohmann::json::array();
    for (const auto& [path, split] : trajectories)
        j["trajectories"].push_back({{"path", path}, {"split", to_string(split)}});
    std::ofstream out(manifest_path);
    if (!out) throw DynamicsError("cannot write manifest: " + manifest_path);
    out << j.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) throw DynamicsError("cannot open manifest: " + manifest_path);
    const nlohmann::json j = nlohmann::json::parse(in);
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset dataset;
    std::map<std::string, int> mesh_cache;
    for (const auto& item : j.at("trajectories")) {
        DatasetEntry entry;
        entry.path = (base / item.at("path").get<std::string>()).string();
        entry.split = split_from_string(item.value("split", std::string("train")));
        entry.trajectory = load_trajectory(entry.path);

        const std::string mesh_path = (fs::path(entry.path) / entry.trajectory.mesh_file).lexically_normal().string();
        auto it = mesh_cache.find(mesh_path);
        if (it == mesh_cache.end()) {
            dataset.meshes.push_back(load_obj_file(mesh_path));
            it = mesh_cache.emplace(mesh_path, static_cast<int>(dataset.meshes.size()) - 1).first;
        }
        entry.mesh_index = it->second;
        dataset.entries.push_back(std::move(entry));
    }
    return dataset;
}

} // namespace bgnn
