#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "skillgraft/graft.hpp"
#include "skillgraft/metrics.hpp"
#include "skillgraft/net.hpp"

namespace sg {

using Json = nlohmann::json;  // std::map-backed: keys serialize sorted

// Checkpoint blob: "GRFT", u32 version, u64 count, count IEEE-754 doubles,
// all little-endian. The segment table lives in a <path>.json sidecar.
// Region blob: "GMSK", u32 version, u64 total_params, u64 count, count u64
// indices. Both loaders re-validate every invariant before returning.

/// Refuses non-finite values. Writes blob and manifest sidecar atomically.
void save_checkpoint(const ParameterVector& params, const std::filesystem::path& path);
ParameterVector load_checkpoint(const std::filesystem::path& path);

void save_region(const GraftRegion& region, const std::filesystem::path& path);
GraftRegion load_region(const std::filesystem::path& path);

/// Canonical serialization: sorted keys, 2-space indent, trailing newline,
/// written via temp-file rename. Creates missing parent directories.
/// Non-finite numbers anywhere in the document are refused.
void write_json(const Json& doc, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// Write via a .tmp sibling and rename; creates parent directories.
void atomic_write_text(const std::filesystem::path& path, const std::string& bytes);

/// %.17g: shortest decimal that round-trips a double.
std::string format_g17(double v);

Json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& doc);

Json curve_to_json(const SweepCurve& curve);
SweepCurve curve_from_json(const Json& doc);

/// Comma-separated, header row, 17 significant digits.
void write_curve_csv(const SweepCurve& curve, const std::filesystem::path& path);
void write_interpolation_csv(const InterpolationCurve& curve, const std::filesystem::path& path);

}  // namespace sg
