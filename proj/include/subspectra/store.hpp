#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "error.hpp"
#include "fmat.hpp"
#include "hash.hpp"
#include "subspace.hpp"
#include "toynets.hpp"

namespace subspectra {

namespace fs = std::filesystem;

//
// checkpoint files
//
//   "CKPT" | u16 version=1 | u32 meta_len | meta JSON | u64 count | f64 LE × count
//

inline constexpr std::uint16_t ckpt_version = 1;

inline std::string encode_checkpoint(const Checkpoint & c)
{
    json meta = {{"run_id", c.run_id}, {"epoch", c.epoch}, {"rng_state", c.rng_state}};
    meta["iteration"] = c.iteration ? json(*c.iteration) : json(nullptr);
    const std::string m = meta.dump();
    std::string out = "CKPT";
    detail::put_le(out, ckpt_version, 2);
    detail::put_le(out, m.size(), 4);
    out += m;
    detail::put_le(out, c.parameters.size(), 8);
    for (double v : c.parameters)
        detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

inline Checkpoint decode_checkpoint(const std::string & in, const std::string & name)
{
    const auto fail = [&](const std::string & what) { return FormatError(name + ": " + what); };
    if (in.size() < 10 || in.compare(0, 4, "CKPT") != 0)
        throw fail("bad magic at offset 0 (expected 'CKPT')");
    if (detail::get_le(in, 4, 2) != ckpt_version)
        throw fail("unsupported checkpoint version at offset 4");
    const std::size_t mlen = detail::get_le(in, 6, 4);
    if (in.size() < 10 + mlen + 8)
        throw fail("truncated checkpoint header");
    Checkpoint c;
    try {
        const json meta = json::parse(in.substr(10, mlen));
        c.run_id = meta.at("run_id").get<std::string>();
        c.epoch = meta.at("epoch").get<std::size_t>();
        if (!meta.at("iteration").is_null())
            c.iteration = meta["iteration"].get<std::size_t>();
        c.rng_state = meta.at("rng_state").get<std::string>();
    } catch (const json::exception & e) {
        throw fail(std::string("bad checkpoint metadata: ") + e.what());
    }
    const std::size_t count = detail::get_le(in, 10 + mlen, 8);
    const std::size_t start = 18 + mlen;
    if (in.size() - start != count * 8)
        throw fail("truncated payload: expected " + std::to_string(count * 8) + " bytes, got " +
                   std::to_string(in.size() - start));
    c.parameters.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        c.parameters[i] = std::bit_cast<double>(detail::get_le(in, start + 8 * i, 8));
    return c;
}

inline std::string checkpoint_filename(const Checkpoint & c)
{
    char buf[64];
    if (c.iteration)
        std::snprintf(buf, sizeof buf, "e%04zu_i%05zu.ckpt", c.epoch, *c.iteration);
    else
        std::snprintf(buf, sizeof buf, "e%04zu.ckpt", c.epoch);
    return buf;
}

inline std::string content_hash(const std::string & bytes) { return fnv1a_hex(bytes); }

//
// run manifests: runs/<run_id>/{manifest.json, ckpt/, features/}
//

inline json manifest_json(const TrainedRun & run)
{
    json j;
    j["run_id"] = run.run_id;
    j["dataset_id"] = run.dataset_id;
    j["spec"] = spec_to_json(run.spec);
    j["config"] = config_to_json(run.config);
    j["status"] = to_string(run.status);
    j["diagnostic"] = run.diagnostic;
    j["iteration_losses"] = run.iteration_losses;
    j["epoch_losses"] = run.epoch_losses;
    j["train_accuracy"] = run.train_accuracy;
    json idx = json::array();
    for (const auto & c : run.checkpoints) {
        json e = {{"epoch", c.epoch}, {"path", "ckpt/" + checkpoint_filename(c)},
                  {"hash", content_hash(encode_checkpoint(c))}};
        e["iteration"] = c.iteration ? json(*c.iteration) : json(nullptr);
        idx.push_back(e);
    }
    j["checkpoints"] = idx;
    if (run.status == RunStatus::completed)
        j["well_trained"] = "ckpt/" + checkpoint_filename(run.well_trained());
    return j;
}

/// Persists a run under root/<run_id>/. An existing, valid manifest for the
/// same run is left untouched.
inline fs::path save_run(const TrainedRun & run, const fs::path & root)
{
    const fs::path dir = root / run.run_id;
    const json manifest = manifest_json(run);
    const fs::path mpath = dir / "manifest.json";
    if (fs::exists(mpath)) {
        try {
            if (json::parse(read_file_bytes(mpath)) == manifest)
                return dir;
        } catch (const json::exception &) {
        }
        throw IoError("refusing to overwrite a different manifest at " + mpath.string());
    }
    for (const auto & c : run.checkpoints)
        write_file_atomic(dir / "ckpt" / checkpoint_filename(c), encode_checkpoint(c));
    fs::create_directories(dir / "features");
    write_file_atomic(mpath, manifest.dump(2) + "\n");
    return dir;
}

/// Loads a run; every checkpoint must exist and match its recorded hash.
inline TrainedRun load_run(const fs::path & dir)
{
    const fs::path mpath = dir / "manifest.json";
    json j;
    try {
        j = json::parse(read_file_bytes(mpath));
    } catch (const json::exception & e) {
        throw FormatError(mpath.string() + ": " + e.what());
    }
    TrainedRun run;
    try {
        run.run_id = j.at("run_id").get<std::string>();
        run.dataset_id = j.at("dataset_id").get<std::string>();
        run.spec = spec_from_json(j.at("spec"));
        run.config = config_from_json(j.at("config"));
        run.status = j.at("status").get<std::string>() == "completed" ? RunStatus::completed : RunStatus::diverged;
        run.diagnostic = j.value("diagnostic", std::string());
        run.iteration_losses = j.at("iteration_losses").get<std::vector<double>>();
        run.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
        run.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
    } catch (const json::exception & e) {
        throw FormatError(mpath.string() + ": malformed manifest: " + e.what());
    } catch (const ValidationError & e) {
        throw FormatError(mpath.string() + ": malformed manifest: " + e.what());
    }
    if (compute_run_id(run.spec, run.config, run.dataset_id) != run.run_id)
        throw FormatError(mpath.string() + ": run_id does not match hash(spec, config, dataset_id)");
    for (const auto & e : j.at("checkpoints")) {
        const fs::path p = dir / e.at("path").get<std::string>();
        if (!fs::exists(p))
            throw IoError("checkpoint listed in manifest is missing: " + p.string());
        const std::string bytes = read_file_bytes(p);
        if (content_hash(bytes) != e.at("hash").get<std::string>())
            throw FormatError(p.string() + ": content hash does not match the manifest");
        run.checkpoints.push_back(decode_checkpoint(bytes, p.string()));
    }
    if (run.checkpoints.empty())
        throw FormatError(mpath.string() + ": no checkpoints listed");
    return run;
}

//
// report emission
//

enum class ReportFormat { csv, json, svg };

inline ReportFormat report_format_from_string(const std::string & s)
{
    if (s == "csv")
        return ReportFormat::csv;
    if (s == "json")
        return ReportFormat::json;
    if (s == "svg")
        return ReportFormat::svg;
    throw ValidationError("unknown format '" + s + "' (expected csv|json|svg)");
}

inline ReportFormat report_format_for(const fs::path & p, std::optional<std::string> explicit_format)
{
    if (explicit_format)
        return report_format_from_string(*explicit_format);
    const std::string ext = p.extension().string();
    return report_format_from_string(ext.empty() ? "json" : ext.substr(1));
}

namespace detail {

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string opt_num(const std::optional<std::size_t> & v) { return v ? std::to_string(*v) : std::string(); }

inline std::string csv_field(const std::string & s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::string xml_escape(const std::string & s)
{
    std::string o;
    for (char c : s) {
        switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
        }
    }
    return o;
}

inline std::string f2(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Minimal deterministic SVG canvas with a plot area and axis labels.
class SvgPlot
{
public:
    static constexpr double width = 640, height = 480, left = 70, right = 20, top = 40, bottom = 60;

    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
    {
        body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
        body_ += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
        body_ += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + xml_escape(title) + "</text>\n";
        body_ += "<text class=\"xlabel\" x=\"" + f2(left + plot_w() / 2) + "\" y=\"470\" text-anchor=\"middle\" font-size=\"13\">" +
                 xml_escape(xlabel) + "</text>\n";
        body_ += "<text class=\"ylabel\" x=\"16\" y=\"" + f2(top + plot_h() / 2) +
                 "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " + f2(top + plot_h() / 2) +
                 ")\">" + xml_escape(ylabel) + "</text>\n";
    }

    static double plot_w() { return width - left - right; }
    static double plot_h() { return height - top - bottom; }

    void set_range(double x0, double x1, double y0, double y1)
    {
        if (!(x1 > x0)) {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if (!(y1 > y0)) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        x0_ = x0, x1_ = x1, y0_ = y0, y1_ = y1;
    }

    double px(double x) const { return left + (x - x0_) / (x1_ - x0_) * plot_w(); }
    double py(double y) const { return top + plot_h() - (y - y0_) / (y1_ - y0_) * plot_h(); }

    void axes(const std::string & x_fmt_prefix = "", const std::string & y_fmt_prefix = "")
    {
        body_ += "<rect x=\"" + f2(left) + "\" y=\"" + f2(top) + "\" width=\"" + f2(plot_w()) + "\" height=\"" +
                 f2(plot_h()) + "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double xv = x0_ + (x1_ - x0_) * i / 4.0, yv = y0_ + (y1_ - y0_) * i / 4.0;
            body_ += "<text x=\"" + f2(px(xv)) + "\" y=\"" + f2(top + plot_h() + 18) +
                     "\" text-anchor=\"middle\" font-size=\"11\">" + x_fmt_prefix + num(round4(xv)) + "</text>\n";
            body_ += "<text x=\"" + f2(left - 6) + "\" y=\"" + f2(py(yv) + 4) +
                     "\" text-anchor=\"end\" font-size=\"11\">" + y_fmt_prefix + num(round4(yv)) + "</text>\n";
        }
    }

    void raw(const std::string & s) { body_ += s; }

    std::string finish() { return body_ + "</svg>\n"; }

private:
    static double round4(double v) { return std::round(v * 1e4) / 1e4; }

    std::string body_;
    double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
};

inline const char * palette(std::size_t i)
{
    static const char * colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    return colors[i % 7];
}

inline void write_text(const fs::path & path, const std::string & text) { write_file_atomic(path, text); }

inline json point_json(const TrajectoryPoint & p)
{
    json j = {{"epoch", p.epoch}, {"degrees", p.degrees}, {"cosine_abs", p.cosine_abs}, {"degenerate", p.degenerate}};
    j["iteration"] = p.iteration ? json(*p.iteration) : json(nullptr);
    return j;
}

} // namespace detail

//
// trajectories
//

inline json to_json(const AngleTrajectory & t)
{
    json pts = json::array();
    for (const auto & p : t.points)
        pts.push_back(detail::point_json(p));
    return {{"run_id", t.run_id}, {"reference", t.reference}, {"split", to_string(t.split)},
            {"k", t.k},           {"points", pts},            {"gaps", t.gaps},
            {"flagged", t.flagged()}};
}

inline std::string trajectories_csv(std::span<const AngleTrajectory> ts)
{
    std::string s = "run_id,reference,split,k,epoch,iteration,degrees,cosine_abs,degenerate\n";
    for (const auto & t : ts)
        for (const auto & p : t.points)
            s += detail::csv_field(t.run_id) + "," + detail::csv_field(t.reference) + "," + to_string(t.split) + "," +
                 std::to_string(t.k) + "," + std::to_string(p.epoch) + "," + detail::opt_num(p.iteration) + "," +
                 detail::num(p.degrees) + "," + detail::num(p.cosine_abs) + "," + (p.degenerate ? "1" : "0") + "\n";
    return s;
}

/// Line chart over epochs. The first epoch is drawn at its maximal
/// per-iteration angle; the raw iterations stay in CSV/JSON.
inline std::string trajectories_svg(std::span<const AngleTrajectory> ts, const std::string & title)
{
    detail::SvgPlot plot(title, "epoch", "angle (degrees)");
    std::size_t max_epoch = 1;
    for (const auto & t : ts)
        for (const auto & p : t.points)
            max_epoch = std::max(max_epoch, p.epoch);
    plot.set_range(0, static_cast<double>(max_epoch), 0, 90);
    plot.axes();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        std::map<std::size_t, double> by_epoch;
        for (const auto & p : ts[i].points) {
            const std::size_t e = p.iteration ? 0 : p.epoch;
            auto it = by_epoch.find(e);
            if (it == by_epoch.end() || (e == 0 && p.degrees > it->second))
                by_epoch[e] = p.degrees;
        }
        std::string pts;
        for (const auto & [e, d] : by_epoch)
            pts += detail::f2(plot.px(static_cast<double>(e))) + "," + detail::f2(plot.py(d)) + " ";
        if (!pts.empty())
            pts.pop_back();
        plot.raw("<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(detail::palette(i)) +
                 "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n");
        plot.raw("<text x=\"" + detail::f2(detail::SvgPlot::left + 8) + "\" y=\"" +
                 detail::f2(detail::SvgPlot::top + 16 + 14 * static_cast<double>(i)) + "\" font-size=\"11\" fill=\"" +
                 detail::palette(i) + "\">" + detail::xml_escape(ts[i].run_id + " k=" + std::to_string(ts[i].k)) +
                 "</text>\n");
    }
    return plot.finish();
}

inline void emit_report(std::span<const AngleTrajectory> ts, const fs::path & path, ReportFormat fmt)
{
    switch (fmt) {
    case ReportFormat::csv: detail::write_text(path, trajectories_csv(ts)); return;
    case ReportFormat::json: {
        json a = json::array();
        for (const auto & t : ts)
            a.push_back(to_json(t));
        detail::write_text(path, a.dump(2) + "\n");
        return;
    }
    case ReportFormat::svg: detail::write_text(path, trajectories_svg(ts, "angle trajectory")); return;
    }
}

inline void emit_report(const AngleTrajectory & t, const fs::path & path, ReportFormat fmt)
{
    emit_report(std::span<const AngleTrajectory>(&t, 1), path, fmt);
}

//
// cosine grids
//

struct GridReport
{
    std::vector<std::string> labels;
    DenseMatrix cosines;
};

inline std::string grid_csv(const GridReport & g)
{
    std::string s = "model";
    for (const auto & l : g.labels)
        s += "," + detail::csv_field(l);
    s += "\n";
    for (std::size_t i = 0; i < g.cosines.rows(); ++i) {
        s += detail::csv_field(g.labels[i]);
        for (std::size_t j = 0; j < g.cosines.cols(); ++j)
            s += "," + detail::num(g.cosines(i, j));
        s += "\n";
    }
    return s;
}

/// One <rect class="cell"> per grid entry; darker = larger cosine.
inline std::string grid_svg(const GridReport & g, const std::string & title)
{
    const std::size_t n = g.cosines.rows();
    detail::SvgPlot plot(title, "model", "model");
    const double cw = detail::SvgPlot::plot_w() / static_cast<double>(n);
    const double ch = detail::SvgPlot::plot_h() / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = std::clamp(g.cosines(i, j), 0.0, 1.0);
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
            char fill[16];
            std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
            plot.raw("<rect class=\"cell\" x=\"" + detail::f2(detail::SvgPlot::left + cw * static_cast<double>(j)) +
                     "\" y=\"" + detail::f2(detail::SvgPlot::top + ch * static_cast<double>(i)) + "\" width=\"" +
                     detail::f2(cw) + "\" height=\"" + detail::f2(ch) + "\" fill=\"" + fill + "\"/>\n");
            if (n <= 12)
                plot.raw("<text x=\"" + detail::f2(detail::SvgPlot::left + cw * (static_cast<double>(j) + 0.5)) +
                         "\" y=\"" + detail::f2(detail::SvgPlot::top + ch * (static_cast<double>(i) + 0.5) + 4) +
                         "\" text-anchor=\"middle\" font-size=\"10\">" + detail::f2(g.cosines(i, j)) + "</text>\n");
        }
    for (std::size_t i = 0; i < n && n <= 12; ++i) {
        plot.raw("<text x=\"" + detail::f2(detail::SvgPlot::left + cw * (static_cast<double>(i) + 0.5)) + "\" y=\"" +
                 detail::f2(detail::SvgPlot::top + detail::SvgPlot::plot_h() + 16) +
                 "\" text-anchor=\"middle\" font-size=\"9\">" + detail::xml_escape(g.labels[i].substr(0, 10)) +
                 "</text>\n");
    }
    return plot.finish();
}

inline void emit_report(const GridReport & g, const fs::path & path, ReportFormat fmt)
{
    detail::require(g.labels.size() == g.cosines.rows() && g.cosines.rows() == g.cosines.cols(),
                    "grid report: labels and matrix disagree");
    switch (fmt) {
    case ReportFormat::csv: detail::write_text(path, grid_csv(g)); return;
    case ReportFormat::json: {
        json rows = json::array();
        for (std::size_t i = 0; i < g.cosines.rows(); ++i)
            rows.push_back(std::vector<double>(g.cosines.row(i).begin(), g.cosines.row(i).end()));
        detail::write_text(path, json({{"labels", g.labels}, {"cosine_abs", rows}}).dump(2) + "\n");
        return;
    }
    case ReportFormat::svg: detail::write_text(path, grid_svg(g, "cosine between P-vectors")); return;
    }
}

//
// correlation
//

inline json to_json(const CorrelationReport & r)
{
    return {{"x_name", r.x_name},   {"y_name", r.y_name},       {"x", r.x},
            {"y", r.y},             {"spearman_rho", r.spearman_rho}, {"spearman_p", r.spearman_p},
            {"p_method", r.p_method}, {"pearson_r", r.pearson_r}, {"n", r.n},
            {"log_log", r.log_log}, {"pooling", r.pooling},     {"flagged", r.flagged}};
}

inline std::string correlation_svg(const CorrelationReport & r)
{
    std::vector<double> xs = r.x, ys = r.y;
    if (r.log_log) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            detail::require(xs[i] > 0.0 && ys[i] > 0.0, "log-log scatter needs positive values (point " +
                                                            std::to_string(i) + ")");
            xs[i] = std::log10(xs[i]);
            ys[i] = std::log10(ys[i]);
        }
    }
    const std::string prefix = r.log_log ? "log10 " : "";
    detail::SvgPlot plot("spearman rho=" + detail::num(std::round(r.spearman_rho * 1e4) / 1e4) +
                             " p=" + detail::num(r.spearman_p),
                         prefix + r.x_name, prefix + r.y_name);
    const auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
    const auto [ylo, yhi] = std::minmax_element(ys.begin(), ys.end());
    const double xp = 0.05 * (*xhi - *xlo), yp = 0.05 * (*yhi - *ylo);
    plot.set_range(*xlo - xp, *xhi + xp, *ylo - yp, *yhi + yp);
    plot.axes();
    for (std::size_t i = 0; i < xs.size(); ++i)
        plot.raw("<circle class=\"point\" cx=\"" + detail::f2(plot.px(xs[i])) + "\" cy=\"" +
                 detail::f2(plot.py(ys[i])) + "\" r=\"4\" fill=\"#1f77b4\"/>\n");
    return plot.finish();
}

inline void emit_report(const CorrelationReport & r, const fs::path & path, ReportFormat fmt)
{
    switch (fmt) {
    case ReportFormat::csv: {
        std::string s = detail::csv_field(r.x_name) + "," + detail::csv_field(r.y_name) + "\n";
        for (std::size_t i = 0; i < r.x.size(); ++i)
            s += detail::num(r.x[i]) + "," + detail::num(r.y[i]) + "\n";
        detail::write_text(path, s);
        return;
    }
    case ReportFormat::json: detail::write_text(path, to_json(r).dump(2) + "\n"); return;
    case ReportFormat::svg: detail::write_text(path, correlation_svg(r)); return;
    }
}

//
// gap prediction
//

inline json to_json(const GapPredictionReport & r)
{
    json rows = json::array();
    for (const auto & row : r.rows) {
        json j = {{"model_id", row.model_id}, {"measures", row.measures}, {"degenerate", row.degenerate}};
        j["gap"] = row.gap ? json(*row.gap) : json(nullptr);
        rows.push_back(j);
    }
    return {{"rows", rows},
            {"rankings", r.rankings},
            {"mi_scores", r.mi_scores},
            {"aggregation_weight", r.aggregation_weight},
            {"mi_bins", r.mi_bins},
            {"gap_definition", r.gap_definition},
            {"mi_note", "unconditional plug-in MI with equal-frequency bins"}};
}

inline void emit_report(const GapPredictionReport & r, const fs::path & path, ReportFormat fmt)
{
    switch (fmt) {
    case ReportFormat::csv: {
        std::vector<std::string> names;
        if (!r.rows.empty())
            for (const auto & [k, v] : r.rows.front().measures)
                names.push_back(k);
        std::string s = "model_id";
        for (const auto & n : names)
            s += "," + n;
        s += ",gap,degenerate\n";
        for (const auto & row : r.rows) {
            s += detail::csv_field(row.model_id);
            for (const auto & n : names)
                s += "," + detail::num(row.measures.at(n));
            s += "," + (row.gap ? detail::num(*row.gap) : std::string()) + "," + (row.degenerate ? "1" : "0") + "\n";
        }
        detail::write_text(path, s);
        return;
    }
    case ReportFormat::json: detail::write_text(path, to_json(r).dump(2) + "\n"); return;
    case ReportFormat::svg: throw ValidationError("gap prediction reports have no SVG form; use csv or json");
    }
}

//
// spectrum and histogram
//

inline json to_json(const SpectrumSummary & s)
{
    return {{"singular_values", s.singular_values},
            {"explained_variance_ratios", s.explained_variance_ratios},
            {"cumulative_ratios", s.cumulative_ratios},
            {"reconstruction_errors", s.reconstruction_errors},
            {"total_sq_frobenius", s.total_sq_frobenius},
            {"method", to_string(s.method)}};
}

inline void emit_report(const SpectrumSummary & s, const fs::path & path, ReportFormat fmt)
{
    switch (fmt) {
    case ReportFormat::csv: {
        std::string t = "k,sigma,explained_variance_ratio,cumulative_ratio,reconstruction_error\n";
        for (std::size_t i = 0; i < s.singular_values.size(); ++i)
            t += std::to_string(i + 1) + "," + detail::num(s.singular_values[i]) + "," +
                 detail::num(s.explained_variance_ratios[i]) + "," + detail::num(s.cumulative_ratios[i]) + "," +
                 detail::num(s.reconstruction_errors[i]) + "\n";
        detail::write_text(path, t);
        return;
    }
    case ReportFormat::json: detail::write_text(path, to_json(s).dump(2) + "\n"); return;
    case ReportFormat::svg: {
        detail::SvgPlot plot("explained variance ratio", "k", "sigma_k^2 / ||X||_F^2");
        plot.set_range(1, static_cast<double>(s.singular_values.size()), 0, 1);
        plot.axes();
        std::string pts;
        for (std::size_t i = 0; i < s.explained_variance_ratios.size(); ++i)
            pts += detail::f2(plot.px(static_cast<double>(i + 1))) + "," +
                   detail::f2(plot.py(s.explained_variance_ratios[i])) + " ";
        if (!pts.empty())
            pts.pop_back();
        plot.raw("<polyline class=\"series\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + pts +
                 "\"/>\n");
        detail::write_text(path, plot.finish());
        return;
    }
    }
}

inline json to_json(const Histogram & h)
{
    json j = {{"bin_edges", h.bin_edges}, {"counts", h.counts}, {"warning", h.warning}};
    j["smoothed_density"] = h.smoothed_density ? json(*h.smoothed_density) : json(nullptr);
    j["bandwidth"] = h.bandwidth ? json(*h.bandwidth) : json(nullptr);
    return j;
}

inline void emit_report(const Histogram & h, const fs::path & path, ReportFormat fmt)
{
    switch (fmt) {
    case ReportFormat::csv: {
        std::string t = "bin_lo,bin_hi,count,density\n";
        for (std::size_t i = 0; i < h.counts.size(); ++i)
            t += detail::num(h.bin_edges[i]) + "," + detail::num(h.bin_edges[i + 1]) + "," +
                 std::to_string(h.counts[i]) + "," +
                 (h.smoothed_density ? detail::num((*h.smoothed_density)[i]) : std::string()) + "\n";
        detail::write_text(path, t);
        return;
    }
    case ReportFormat::json: detail::write_text(path, to_json(h).dump(2) + "\n"); return;
    case ReportFormat::svg: {
        const double lo = h.bin_edges.front(), hi = h.bin_edges.back();
        const std::size_t top = *std::max_element(h.counts.begin(), h.counts.end());
        detail::SvgPlot plot("P-vector value histogram", "value", "count");
        plot.set_range(lo, hi, 0, static_cast<double>(top));
        plot.axes();
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const double x0 = plot.px(h.bin_edges[i]), x1 = plot.px(h.bin_edges[i + 1]);
            const double y = plot.py(static_cast<double>(h.counts[i]));
            plot.raw("<rect class=\"bar\" x=\"" + detail::f2(x0) + "\" y=\"" + detail::f2(y) + "\" width=\"" +
                     detail::f2(std::max(0.0, x1 - x0)) + "\" height=\"" +
                     detail::f2(plot.py(0) - y) + "\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n");
        }
        detail::write_text(path, plot.finish());
        return;
    }
    }
}

//
// P-vectors as JSON documents
//

inline json to_json(const PVector & p)
{
    json j = {{"values", p.values},
              {"kind", to_string(p.kind)},
              {"source", provenance_to_json(p.source)},
              {"svd_method", to_string(p.svd_method)},
              {"trivial", p.trivial},
              {"degenerate", p.degenerate},
              {"centered", p.centered},
              {"sigma1", p.sigma1}};
    j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    return j;
}

inline PVector pvector_from_json(const json & j)
{
    PVector p;
    try {
        p.values = j.at("values").get<std::vector<double>>();
        p.kind = j.value("kind", std::string("model")) == "data" ? PVectorKind::data : PVectorKind::model;
        if (j.contains("source"))
            p.source = provenance_from_json(j["source"]);
        p.svd_method = j.value("svd_method", std::string("exact")) == "randomized" ? SvdMethod::randomized
                                                                                    : SvdMethod::exact;
        if (j.contains("seed") && !j["seed"].is_null())
            p.seed = j["seed"].get<std::uint64_t>();
        p.trivial = j.value("trivial", false);
        p.degenerate = j.value("degenerate", false);
        p.centered = j.value("centered", false);
        p.sigma1 = j.value("sigma1", 0.0);
    } catch (const json::exception & e) {
        throw FormatError(std::string("malformed P-vector document: ") + e.what());
    }
    return p;
}

inline void write_pvector(const PVector & p, const fs::path & path) { write_file_atomic(path, to_json(p).dump() + "\n"); }

inline PVector read_pvector(const fs::path & path)
{
    json j;
    try {
        j = json::parse(read_file_bytes(path));
    } catch (const json::exception & e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return pvector_from_json(j);
}

} // namespace subspectra
