#include "csav/sim/recording.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "csav/error.hpp"

namespace csav::sim {

using nlohmann::json;
using nlohmann::ordered_json;

std::string recording_version(const Recording& rec) {
    bool obs = false, clusters = false;
    for (const auto& e : rec.extras) {
        obs = obs || e.contains("obs");
        clusters = clusters || e.contains("clusters");
    }
    if (clusters) return kRecFullVersion;
    if (obs) return kRecObsVersion;
    return kRecVersion;
}

void write_recording(std::ostream& out, const Recording& rec) {
    const std::string version = recording_version(rec);
    ordered_json header;
    header["version"] = version;
    header["config"] = to_json(rec.config);
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < rec.frames.size(); ++i) {
        ordered_json line;
        line["version"] = version;
        const ordered_json frame = to_json(rec.frames[i]);
        for (auto& [k, v] : frame.items()) line[k] = v;
        if (i < rec.extras.size() && rec.extras[i].is_object())
            for (auto& [k, v] : rec.extras[i].items()) line[k] = v;
        out << line.dump() << '\n';
    }
}

void save_recording(const std::filesystem::path& path, const Recording& rec) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    write_recording(f, rec);
    if (!f) throw Error("write failed for " + path.string());
}

namespace {

bool known_version(const std::string& v) { return v == kRecVersion || v == kRecObsVersion || v == kRecFullVersion; }

} // namespace

Recording read_recording(std::istream& in) {
    Recording rec;
    std::string line;
    int lineno = 0;
    bool have_header = false;
    bool any_extra = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(where + "invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("version") || !j["version"].is_string())
            throw FormatError(where + "missing version field");
        const std::string version = j["version"].get<std::string>();
        if (!known_version(version)) throw FormatError(where + "unsupported recording version '" + version + "'");
        if (!have_header) {
            if (!j.contains("config")) throw FormatError(where + "first line must be the recording header");
            try {
                rec.config = config_from_json(j["config"]);
            } catch (const ConfigError& e) {
                throw FormatError(where + e.what());
            }
            have_header = true;
            continue;
        }
        try {
            rec.frames.push_back(frame_from_json(j));
        } catch (const FormatError& e) {
            throw FormatError(where + e.what());
        }
        ordered_json extra = ordered_json::object();
        for (const char* key : {"obs", "clusters"})
            if (j.contains(key)) {
                extra[key] = ordered_json::parse(j[key].dump());
                any_extra = true;
            }
        rec.extras.push_back(std::move(extra));
    }
    if (!have_header) throw FormatError("empty recording");
    if (!any_extra) rec.extras.clear();
    return rec;
}

Recording load_recording(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    try {
        return read_recording(f);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace csav::sim
