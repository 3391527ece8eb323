#include "skillgraft/store.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace sg {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& buf, size_t at) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[at + i])) << (8 * i);
    return v;
}

uint64_t get_u64(const std::string& buf, size_t at) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[at + i])) << (8 * i);
    return v;
}

constexpr uint32_t kFormatVersion = 1;

}  // namespace

void atomic_write_text(const fs::path& path, const std::string& bytes) {
    if (!path.parent_path().empty()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) fail_io("cannot create directory " + path.parent_path().string());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail_io("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            fail_io("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail_io("cannot move " + tmp.string() + " into place");
    }
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail_io("read failure on " + path.string());
    return bytes;
}

ParamKind kind_from_string(const std::string& s) {
    if (s == "weight") return ParamKind::weight;
    if (s == "bias") return ParamKind::bias;
    if (s == "layernorm_scale") return ParamKind::layernorm_scale;
    if (s == "layernorm_shift") return ParamKind::layernorm_shift;
    if (s == "head") return ParamKind::head;
    fail_data("manifest: unknown parameter kind '" + s + "'");
}

void check_header(const std::string& bytes, const fs::path& path, const char* magic) {
    if (bytes.size() < 8) fail_io("truncated file " + path.string());
    if (bytes.compare(0, 4, magic) != 0)
        fail_data(path.string() + " is not a " + magic + " file");
    uint32_t version = get_u32(bytes, 4);
    if (version != kFormatVersion)
        fail_data(path.string() + ": unsupported format version " + std::to_string(version));
}

}  // namespace

void save_checkpoint(const ParameterVector& params, const fs::path& path) {
    params.validate();
    for (double v : params.values)
        if (!std::isfinite(v)) fail_numerical("refusing to save non-finite parameter values");

    std::string bytes;
    bytes.reserve(16 + 8 * params.size());
    bytes += "GRFT";
    put_u32(bytes, kFormatVersion);
    put_u64(bytes, params.size());
    for (double v : params.values) put_u64(bytes, std::bit_cast<uint64_t>(v));
    atomic_write_text(path, bytes);

    Json manifest;
    Json segs = Json::array();
    for (const Segment& s : params.segments) {
        Json seg;
        seg["name"] = s.name;
        seg["offset"] = s.offset;
        seg["length"] = s.length;
        seg["kind"] = to_string(s.kind);
        seg["layer"] = s.layer;
        segs.push_back(seg);
    }
    manifest["segments"] = segs;
    fs::path sidecar = path;
    sidecar += ".json";
    write_json(manifest, sidecar);
}

ParameterVector load_checkpoint(const fs::path& path) {
    std::string bytes = read_file(path);
    check_header(bytes, path, "GRFT");
    if (bytes.size() < 16) fail_io("truncated file " + path.string());
    uint64_t count = get_u64(bytes, 8);
    if (bytes.size() < 16 + 8 * count) fail_io("truncated file " + path.string());
    if (bytes.size() > 16 + 8 * count) fail_data(path.string() + ": trailing bytes");

    ParameterVector params;
    params.values.resize(count);
    for (uint64_t i = 0; i < count; ++i)
        params.values[i] = std::bit_cast<double>(get_u64(bytes, 16 + 8 * i));
    for (double v : params.values)
        if (!std::isfinite(v)) fail_numerical(path.string() + ": non-finite parameter values");

    fs::path sidecar = path;
    sidecar += ".json";
    Json manifest = read_json(sidecar);
    if (!manifest.contains("segments") || !manifest["segments"].is_array())
        fail_data(sidecar.string() + ": missing segment table");
    for (const Json& seg : manifest["segments"]) {
        Segment s;
        s.name = seg.at("name").get<std::string>();
        s.offset = seg.at("offset").get<size_t>();
        s.length = seg.at("length").get<size_t>();
        s.kind = kind_from_string(seg.at("kind").get<std::string>());
        s.layer = seg.at("layer").get<int>();
        params.segments.push_back(s);
    }
    try {
        params.validate();
    } catch (const Error& e) {
        fail_data(path.string() + ": " + e.what());
    }
    return params;
}

void save_region(const GraftRegion& region, const fs::path& path) {
    region.validate();
    std::string bytes;
    bytes.reserve(24 + 8 * region.indices.size());
    bytes += "GMSK";
    put_u32(bytes, kFormatVersion);
    put_u64(bytes, region.total_params);
    put_u64(bytes, region.indices.size());
    for (uint64_t i : region.indices) put_u64(bytes, i);
    atomic_write_text(path, bytes);
}

GraftRegion load_region(const fs::path& path) {
    std::string bytes = read_file(path);
    check_header(bytes, path, "GMSK");
    if (bytes.size() < 24) fail_io("truncated file " + path.string());
    GraftRegion region;
    region.total_params = get_u64(bytes, 8);
    uint64_t count = get_u64(bytes, 16);
    if (bytes.size() < 24 + 8 * count) fail_io("truncated file " + path.string());
    if (bytes.size() > 24 + 8 * count) fail_data(path.string() + ": trailing bytes");
    region.indices.resize(count);
    for (uint64_t i = 0; i < count; ++i) region.indices[i] = get_u64(bytes, 24 + 8 * i);
    try {
        region.validate();
    } catch (const Error& e) {
        fail_data(path.string() + ": " + e.what());
    }
    return region;
}

namespace {

void check_finite(const Json& doc) {
    if (doc.is_number_float() && !std::isfinite(doc.get<double>()))
        fail_numerical("refusing to serialize non-finite number");
    if (doc.is_object() || doc.is_array())
        for (const Json& child : doc) check_finite(child);
}

}  // namespace

void write_json(const Json& doc, const fs::path& path) {
    check_finite(doc);
    atomic_write_text(path, doc.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
    std::string text = read_file(path);
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) fail_data(path.string() + ": malformed document");
    return doc;
}

Json eval_report_to_json(const EvalReport& report) {
    Json doc;
    doc["accuracy"] = report.accuracy;
    doc["ece"] = report.ece;
    doc["num_bins"] = report.num_bins;
    Json bins = Json::array();
    for (const BinStat& b : report.bin_stats) {
        Json bin;
        bin["count"] = b.count;
        bin["mean_confidence"] = b.mean_confidence;
        bin["accuracy"] = b.accuracy;
        bins.push_back(bin);
    }
    doc["bin_stats"] = bins;
    if (report.agreement_with) {
        doc["agreement_with"] = Json{{"model", report.agreement_with->first},
                                     {"fraction", report.agreement_with->second}};
    }
    return doc;
}

EvalReport eval_report_from_json(const Json& doc) {
    EvalReport report;
    try {
        report.accuracy = doc.at("accuracy").get<double>();
        report.ece = doc.at("ece").get<double>();
        report.num_bins = doc.at("num_bins").get<size_t>();
        for (const Json& bin : doc.at("bin_stats")) {
            BinStat b;
            b.count = bin.at("count").get<size_t>();
            b.mean_confidence = bin.at("mean_confidence").get<double>();
            b.accuracy = bin.at("accuracy").get<double>();
            report.bin_stats.push_back(b);
        }
        if (doc.contains("agreement_with"))
            report.agreement_with = {doc["agreement_with"].at("model").get<std::string>(),
                                     doc["agreement_with"].at("fraction").get<double>()};
    } catch (const Json::exception& e) {
        fail_data(std::string("evaluation report: ") + e.what());
    }
    if (report.bin_stats.size() != report.num_bins)
        fail_data("evaluation report: bin count does not match num_bins");
    return report;
}

Json curve_to_json(const SweepCurve& curve) {
    Json points = Json::array();
    for (const SweepPoint& p : curve.points) {
        Json pt;
        pt["x"] = p.x;
        pt["y_mean"] = p.y_mean;
        pt["y_std"] = p.y_std;
        pt["n_seeds"] = p.n_seeds;
        points.push_back(pt);
    }
    return Json{{"points", points}};
}

SweepCurve curve_from_json(const Json& doc) {
    SweepCurve curve;
    try {
        for (const Json& pt : doc.at("points"))
            curve.points.push_back({pt.at("x").get<double>(), pt.at("y_mean").get<double>(),
                                    pt.at("y_std").get<double>(), pt.at("n_seeds").get<size_t>()});
    } catch (const Json::exception& e) {
        fail_data(std::string("sweep curve: ") + e.what());
    }
    curve.validate();
    return curve;
}

void write_curve_csv(const SweepCurve& curve, const fs::path& path) {
    std::string text = "x,y_mean,y_std,n_seeds\n";
    for (const SweepPoint& p : curve.points)
        text += format_g17(p.x) + "," + format_g17(p.y_mean) + "," + format_g17(p.y_std) + "," +
                std::to_string(p.n_seeds) + "\n";
    atomic_write_text(path, text);
}

void write_interpolation_csv(const InterpolationCurve& curve, const fs::path& path) {
    std::string text = "alpha,id_accuracy,ood_accuracy\n";
    for (const InterpolationPoint& p : curve.points)
        text += format_g17(p.alpha) + "," + format_g17(p.id_accuracy) + "," +
                format_g17(p.ood_accuracy) + "\n";
    atomic_write_text(path, text);
}

}  // namespace sg
