#pragma once

#include <filesystem>
#include <string>

namespace hamflow {

/// Writes via a temporary sibling file renamed into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// UTC time as 2024-01-31T12:00:00Z.
std::string iso_timestamp();

/// Resolves a configured output directory. When HAMFLOW_OUT is set, relative
/// directories are placed under it and absolute ones keep only their last
/// component under it.
std::filesystem::path resolve_output_dir(const std::string& configured);

/// Keeps freed matrix buffers in the heap instead of returning them to the
/// kernel (glibc only; a no-op elsewhere). Training allocates and frees
/// the same large blocks every step.
void retain_heap_memory();

/// %.17g, enough digits to round-trip a double.
std::string format_double(double v);

}  // namespace hamflow
