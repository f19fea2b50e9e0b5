#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "csav/sim/world.hpp"

namespace csav::sim {

inline constexpr const char* kRecVersion = "rec-v1";
inline constexpr const char* kRecObsVersion = "rec-obs-v1";
inline constexpr const char* kRecFullVersion = "rec-full-v1";

// rec-v1 without extras, rec-obs-v1 with "obs", rec-full-v1 with "clusters" too.
std::string recording_version(const Recording& rec);

// JSON Lines: a header {"version", "config"} then one frame object per line.
void write_recording(std::ostream& out, const Recording& rec);
void save_recording(const std::filesystem::path& path, const Recording& rec);

// Throws FormatError naming the offending line.
Recording read_recording(std::istream& in);
Recording load_recording(const std::filesystem::path& path);

} // namespace csav::sim
