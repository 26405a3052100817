#include "xavdt/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace xavdt {

namespace {

constexpr const char* kHeader = "#xavdt-manifest\tv1";

std::string packed(const std::string& field) { return field.empty() ? "-" : field; }

std::string unpacked(const std::string& field) { return field == "-" ? "" : field; }

bool clean_id(const std::string& id) {
    if (id.empty()) return false;
    for (const char c : id)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') return false;
    return true;
}

void check_field(const std::string& rec_id, const char* name, const std::string& value) {
    if (value.find('\t') != std::string::npos || value.find('\n') != std::string::npos)
        throw DataError("record '" + rec_id + "': " + name + " contains a tab or newline");
}

}  // namespace

std::string ManifestRecord::line() const {
    std::ostringstream os;
    os << clip_id << '\t' << video_path << '\t' << packed(audio_path) << '\t' << label << '\t' << packed(generator)
       << '\t' << split << '\t' << packed(paired_real) << '\t' << packed(roi_path);
    return os.str();
}

ManifestRecord ManifestRecord::parse(const std::string& line) {
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (cols.size() != 8)
        throw DataError("manifest line has " + std::to_string(cols.size()) + " fields, expected 8: " + line);
    ManifestRecord r;
    r.clip_id = cols[0];
    r.video_path = cols[1];
    r.audio_path = unpacked(cols[2]);
    if (cols[3] == "0")
        r.label = 0;
    else if (cols[3] == "1")
        r.label = 1;
    else
        throw DataError("record '" + r.clip_id + "': label '" + cols[3] + "' is not 0 or 1");
    r.generator = unpacked(cols[4]);
    r.split = cols[5];
    r.paired_real = unpacked(cols[6]);
    r.roi_path = unpacked(cols[7]);
    return r;
}

void Manifest::validate() const {
    std::unordered_map<std::string, const ManifestRecord*> by_id;
    for (const auto& r : records) {
        if (!clean_id(r.clip_id))
            throw DataError("clip id '" + r.clip_id + "' is empty or holds characters outside [A-Za-z0-9._-]");
        if (!by_id.emplace(r.clip_id, &r).second) throw DataError("duplicate clip id '" + r.clip_id + "'");
        if (r.video_path.empty()) throw DataError("record '" + r.clip_id + "': no video path");
        const std::pair<const char*, const std::string*> fields[] = {{"video path", &r.video_path},
                                                                     {"audio path", &r.audio_path},
                                                                     {"generator", &r.generator},
                                                                     {"roi path", &r.roi_path}};
        for (const auto& [name, value] : fields) check_field(r.clip_id, name, *value);
        if (r.label != 0 && r.label != 1)
            throw DataError("record '" + r.clip_id + "': label " + std::to_string(r.label) + " is not 0 or 1");
        if (r.split != "train" && r.split != "test")
            throw DataError("record '" + r.clip_id + "': split '" + r.split + "' is not train or test");
        if (r.label == 1) {
            if (r.paired_real.empty()) throw DataError("fake '" + r.clip_id + "' names no paired real");
            if (r.generator.empty()) throw DataError("fake '" + r.clip_id + "' carries no generator tag");
        } else if (!r.paired_real.empty()) {
            throw DataError("real '" + r.clip_id + "' claims a paired real '" + r.paired_real + "'");
        }
    }
    // every fake resolves to a real; the check is exhaustive, not sampled
    for (const auto& r : records) {
        if (r.label != 1) continue;
        const auto it = by_id.find(r.paired_real);
        if (it == by_id.end())
            throw DataError("fake '" + r.clip_id + "' pairs with unknown clip '" + r.paired_real + "'");
        if (it->second->label != 0)
            throw DataError("fake '" + r.clip_id + "' pairs with '" + r.paired_real + "', which is not a real");
    }
    // generator disjointness across splits, over fakes: reals (and their
    // source tag) legitimately appear on both sides
    std::set<std::string> train_tags, test_tags;
    for (const auto& r : records)
        if (r.label == 1) (r.split == "train" ? train_tags : test_tags).insert(r.generator);
    for (const auto& tag : train_tags)
        if (test_tags.count(tag))
            throw DataError("generator '" + tag + "' appears in both train and test fakes");
}

const ManifestRecord* Manifest::find(const std::string& clip_id) const {
    for (const auto& r : records)
        if (r.clip_id == clip_id) return &r;
    return nullptr;
}

std::vector<ManifestRecord> Manifest::split(const std::string& name) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
        if (r.split == name) out.push_back(r);
    return out;
}

void Manifest::save(const std::string& path) const {
    validate();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write manifest '" + path + "'");
    f << kHeader << '\n';
    for (const auto& r : records) f << r.line() << '\n';
    if (!f.good()) throw DataError("short write on manifest '" + path + "'");
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read manifest '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("manifest '" + path + "' is empty");
    if (line != kHeader)
        throw DataError("manifest '" + path + "' has unsupported header '" + line + "'");
    Manifest m;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        m.records.push_back(ManifestRecord::parse(line));
    }
    m.validate();
    return m;
}

std::string ManifestBuild::rejection_log() const {
    std::string out;
    for (const auto& [id, reason] : rejected) {
        out += id;
        out += '\t';
        out += reason;
        out += '\n';
    }
    return out;
}

namespace {

struct Candidate {
    ManifestRecord rec;
    double duration_s = 0.0;
    int64_t short_side = 0;
    bool face_ok = true;
};

Candidate read_meta(const fs::path& dir) {
    const fs::path meta_path = dir / "meta.json";
    std::ifstream f(meta_path);
    if (!f) throw DataError("cannot read '" + meta_path.string() + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed '" + meta_path.string() + "': " + e.what());
    }
    Candidate c;
    try {
        c.rec.clip_id = j.at("clip_id").get<std::string>();
        c.rec.label = j.at("label").get<int>();
        c.rec.split = j.at("split").get<std::string>();
        c.rec.generator = j.value("generator", std::string());
        c.rec.paired_real = j.value("paired_real", std::string());
        c.duration_s = j.value("duration_s", 0.0);
        c.short_side = j.value("short_side", int64_t{0});
        c.face_ok = j.value("face_ok", true);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + meta_path.string() + "' is missing required fields: " + e.what());
    }
    if (c.rec.clip_id != dir.filename().string())
        throw DataError("'" + meta_path.string() + "' names clip '" + c.rec.clip_id + "' but lives in '" +
                        dir.filename().string() + "'");
    c.rec.video_path = (dir / "frames.xavf").string();
    if (fs::exists(dir / "audio.wav")) c.rec.audio_path = (dir / "audio.wav").string();
    if (fs::exists(dir / "roi.xavf")) c.rec.roi_path = (dir / "roi.xavf").string();
    return c;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

ManifestBuild build_manifest(const std::string& root, const FilterSpec& filter) {
    if (filter.min_duration_s < 0.0 || filter.min_short_side < 0)
        throw ConfigError("filter thresholds must be non-negative");
    if (!fs::is_directory(root)) throw DataError("corpus root '" + root + "' is not a directory");

    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());

    ManifestBuild out;
    std::vector<Candidate> accepted;
    std::unordered_set<std::string> all_ids, accepted_ids;
    for (const auto& dir : dirs) {
        Candidate c = read_meta(dir);
        all_ids.insert(c.rec.clip_id);
        if (c.duration_s < filter.min_duration_s) {
            out.rejected.emplace_back(c.rec.clip_id, "duration " + fmt(c.duration_s) + "s below " +
                                                         fmt(filter.min_duration_s) + "s");
        } else if (c.short_side < filter.min_short_side) {
            out.rejected.emplace_back(c.rec.clip_id, "short side " + std::to_string(c.short_side) + "px below " +
                                                         std::to_string(filter.min_short_side) + "px");
        } else if (filter.require_face && !c.face_ok) {
            out.rejected.emplace_back(c.rec.clip_id, "face tracking failed");
        } else {
            accepted_ids.insert(c.rec.clip_id);
            accepted.push_back(std::move(c));
        }
    }

    for (auto& c : accepted) {
        if (c.rec.label == 1) {
            if (c.rec.paired_real.empty()) throw DataError("fake '" + c.rec.clip_id + "' names no paired real");
            if (!all_ids.count(c.rec.paired_real))
                throw DataError("fake '" + c.rec.clip_id + "' references unknown real '" + c.rec.paired_real + "'");
            if (!accepted_ids.count(c.rec.paired_real)) {
                // the real existed but was filtered away: cascade, don't fail
                out.rejected.emplace_back(c.rec.clip_id, "paired real '" + c.rec.paired_real + "' filtered out");
                continue;
            }
        }
        out.manifest.records.push_back(std::move(c.rec));
    }
    out.manifest.validate();
    return out;
}

}  // namespace xavdt
