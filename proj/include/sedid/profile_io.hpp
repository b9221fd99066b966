#pragma once

#include <string>
#include <vector>

#include "sedid/archive.hpp"
#include "sedid/core.hpp"
#include "sedid/detector.hpp"

namespace sedid {

struct ProfileRecord {
    std::string id;
    int label = -1;
    NoiseProfile profile;
};

// Batch profiling artifacts: archive entries profile{i}.x_tilde / .x_recon /
// .residual plus a scores CSV (id,label,score) carrying the error values.
// x_up is transient and not persisted.
inline void write_profiles(const std::string& archive_path, const std::string& csv_path,
                           const std::vector<ProfileRecord>& records) {
    std::vector<ArchiveEntry> entries;
    std::vector<ScoredSample> scores;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::string base = "profile" + std::to_string(i);
        entries.push_back({base + ".x_tilde", Dtype::f64, r.profile.x_tilde_t});
        entries.push_back({base + ".x_recon", Dtype::f64, r.profile.x_recon});
        entries.push_back({base + ".residual", Dtype::f64, r.profile.residual});
        scores.push_back({r.id, r.profile.error, r.label});
    }
    archive_write(archive_path, entries);
    write_scores_csv(csv_path, scores);
}

inline std::vector<ProfileRecord> read_profiles(const std::string& archive_path,
                                                const std::string& csv_path) {
    auto entries = archive_read(archive_path);
    auto scores = read_scores_csv(csv_path);
    std::vector<ProfileRecord> out;
    out.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        std::string base = "profile" + std::to_string(i);
        ProfileRecord r;
        r.id = scores[i].id;
        r.label = scores[i].label;
        r.profile.x_tilde_t = archive_get(entries, base + ".x_tilde");
        r.profile.x_recon = archive_get(entries, base + ".x_recon");
        r.profile.residual = archive_get(entries, base + ".residual");
        r.profile.error = scores[i].score;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace sedid
