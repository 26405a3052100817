#pragma once

#include <string>
#include <vector>

#include "xavdt/errors.hpp"

namespace xavdt {

// One corpus entry. On disk: one tab-separated line per record, fields in
// declaration order, "-" standing in for empty optionals, preceded by a
// schema-version header line.
struct ManifestRecord {
    std::string clip_id;
    std::string video_path;
    std::string audio_path;   // optional
    int label = 0;            // 0 real, 1 fake
    std::string generator;    // synthesis family tag; optional for reals
    std::string split;        // "train" or "test"
    std::string paired_real;  // fakes: clip_id of the matching real
    std::string roi_path;     // mask sidecar, optional

    std::string line() const;
    static ManifestRecord parse(const std::string& line);
};

struct Manifest {
    std::vector<ManifestRecord> records;

    // Field sanity, unique ids, every fake resolving to a real, and
    // train/test generator-tag disjointness (over fake records: the same
    // source reals legitimately appear in both splits).
    void validate() const;

    const ManifestRecord* find(const std::string& clip_id) const;
    std::vector<ManifestRecord> split(const std::string& name) const;

    void save(const std::string& path) const;  // validates first
    static Manifest load(const std::string& path);
};

// Curation gates applied by build_manifest. The corpus metadata carries the
// measurements; thresholds default to >= 2 s and >= 512 px short side.
struct FilterSpec {
    double min_duration_s = 2.0;
    int64_t min_short_side = 512;
    bool require_face = true;
};

struct ManifestBuild {
    Manifest manifest;
    // (clip_id, reason) for every candidate that was turned away
    std::vector<std::pair<std::string, std::string>> rejected;

    std::string rejection_log() const;  // one "clip_id\treason" line each
};

// Scans root/<clip_id>/meta.json entries (lexicographic order), applies the
// filters, and assembles validated records. A fake whose paired real was
// itself filtered out is rejected in cascade, not an error; a fake naming a
// real that never existed is one.
ManifestBuild build_manifest(const std::string& root, const FilterSpec& filter = {});

}  // namespace xavdt
