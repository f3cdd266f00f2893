// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <sstream>

#include "lsplit/error.hpp"

namespace lsplit {

namespace {

constexpr double kMb = 1e6;

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "Method",
        "Computation layer ratio (Local : Cloud)",
        "Transmission data",
        "Uplink (MB)",
        "Downlink (MB)",
        "Total (MB)",
        "Communication latency (s)",
        "Local computation latency (s)",
        "Cloud computation latency (s)",
        "Total latency (s)",
        "Average generation throughput (token/s)",
        "uplink_payload_bytes",
        "uplink_overhead_bytes",
        "downlink_payload_bytes",
        "downlink_overhead_bytes",
        "uplink_messages",
        "downlink_messages",
        "tokens",
        "matches_monolithic",
        "error",
    };
    return cols;
}

std::string to_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_escape(cols[i]);
    out << '\n';
    for (const auto& r : rows) {
        const auto& t = r.report;
        const std::vector<std::string> cells = {
            r.method,
            r.ratio,
            r.transmission,
            fixed(t.uplink.total_bytes() / kMb, 6),
            fixed(t.downlink.total_bytes() / kMb, 6),
            fixed(t.total_bytes() / kMb, 6),
            fixed(t.comm_latency_s, 6),
            fixed(t.local_compute_s, 6),
            fixed(t.cloud_compute_s, 6),
            fixed(t.total_latency_s(), 6),
            fixed(t.throughput(), 3),
            std::to_string(t.uplink.payload_bytes),
            std::to_string(t.uplink.overhead_bytes),
            std::to_string(t.downlink.payload_bytes),
            std::to_string(t.downlink.overhead_bytes),
            std::to_string(t.uplink.message_total()),
            std::to_string(t.downlink.message_total()),
            std::to_string(r.tokens.size()),
            r.matches_monolithic ? "true" : "false",
            r.error,
        };
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_escape(cells[i]);
        out << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const std::vector<ReportRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"method", r.method},
                       {"ratio", r.ratio},
                       {"transmission", r.transmission},
                       {"report", to_json(r.report)},
                       {"tokens", r.tokens},
                       {"matches_monolithic", r.matches_monolithic},
                       {"error", r.error}});
    }
    return arr;
}

std::vector<ReportRow> run_benchmark(const Settings& settings) {
    const auto n = settings.llm.n_blocks;
    auto cloud = std::make_shared<CloudNode>(llm::build_toy_llm(settings.llm), ldm::build_toy_ldm(settings.ldm),
                                             settings.session_idle_s);
    LocalNode local(settings, cloud);

    Experiment base = settings.defaults;
    base.kind = ModelKind::llm;
    base.stop_at_eos = false;
    base.plan.reset();

    const auto reference = llm::generate_monolithic(cloud->model(), llm::tokenize(base.prompt, settings.llm.vocab),
                                                    base.l_out, false);

    struct Cell {
        std::string method, transmission;
        Experiment e;
    };
    std::vector<Cell> cells;
    {
        Experiment e = base;
        e.mode = Mode::cloud_only;
        cells.push_back({"Cloud-only", "Text", e});
    }
    for (bool caching : {false, true}) {
        for (auto m : settings.bench_local_layers) {
            Experiment e = base;
            e.mode = Mode::lambda_split;
            e.caching = caching;
            e.local_layers = m;
            cells.push_back({caching ? "Lambda-Split w/ caching" : "Lambda-Split w/o caching",
                             caching ? "Latest part of hidden state" : "Hidden state", e});
        }
    }
    {
        Experiment e = base;
        e.mode = Mode::local_only;
        cells.push_back({"Local-only", "-", e});
    }

    std::vector<ReportRow> rows;
    for (const auto& cell : cells) {
        ReportRow row;
        row.method = cell.method;
        row.transmission = cell.transmission;
        try {
            const auto plan = cell.e.resolve_plan(n);
            row.ratio = plan.ratio();
            const Outcome o = local.generate(cell.e);
            row.report = o.report;
            row.tokens = o.tokens;
            row.error = o.error;
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        row.matches_monolithic = row.error.empty() && row.tokens == reference;
        rows.push_back(std::move(row));
    }
    return rows;
}

SweepSummary run_ldm_sweep(const Settings& settings, const std::vector<int>& bits, const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& image_dir) {
    const auto pipeline = ldm::build_toy_ldm(settings.ldm);
    const auto t_steps = settings.defaults.t_steps;
    const auto& prompt = settings.defaults.prompt;
    std::vector<wire::WireFormat> formats;
    for (int b : bits) formats.push_back(wire::wire_format_from_bits(b));
    if (!image_dir.empty()) std::filesystem::create_directories(image_dir);

    SweepSummary summary;
    for (auto seed : seeds) {
        const Image baseline = ldm::generate_monolithic_ldm(pipeline, prompt, PrngSeed{seed}, t_steps);
        std::vector<SweepRow> per_seed;
        for (auto f : formats) {
            SweepRow row;
            row.bits = wire::wire_bits(f);
            row.seed = seed;
            ldm::LdmSplitOptions opts;
            opts.wire = f;
            opts.sync = settings.defaults.sync;
            const auto run = ldm::generate_split_ldm(pipeline, prompt, PrngSeed{seed}, t_steps, opts, settings.channel);
            row.error = run.error;
            if (run.error.empty()) {
                row.psnr = psnr(baseline, run.image);
                row.ssim = ssim(baseline, run.image);
                if (!image_dir.empty()) {
                    write_ppm(run.image, image_dir / ("seed" + std::to_string(seed) + "_" + wire::wire_format_name(f) + ".ppm"));
                }
            }
            for (const auto& rec : run.capture.records()) {
                if (rec.direction != Direction::downlink) continue;
                const auto decoded = wire::decode_frame(rec.bytes);
                if (!decoded || decoded.frame().type != wire::MsgType::noise) continue;
                row.noise_payload_bytes += decoded.frame().payload.size();
                row.noise_overhead_bytes += rec.bytes.size() - decoded.frame().payload.size();
            }
            per_seed.push_back(row);
        }
        // Check the ordering from the widest format to the narrowest.
        std::vector<const SweepRow*> ordered;
        for (const auto& r : per_seed) ordered.push_back(&r);
        std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->bits > b->bits; });
        for (std::size_t i = 1; i < ordered.size(); ++i) {
            const auto* wide = ordered[i - 1];
            const auto* narrow = ordered[i];
            if (!wide->error.empty() || !narrow->error.empty()) continue;
            if (narrow->psnr > wide->psnr || narrow->ssim > wide->ssim) {
                summary.monotone = false;
                summary.violations.push_back("seed " + std::to_string(seed) + ": " + std::to_string(narrow->bits) +
                                             " bits beats " + std::to_string(wide->bits) + " bits");
            }
        }
        for (auto& r : per_seed) summary.rows.push_back(std::move(r));
    }
    return summary;
}

std::string to_csv(const SweepSummary& s) {
    std::ostringstream out;
    out << "bits,seed,psnr_db,ssim,noise_payload_bytes,noise_overhead_bytes,error\n";
    for (const auto& r : s.rows) {
        out << r.bits << ',' << r.seed << ',' << fixed(r.psnr, 4) << ',' << fixed(r.ssim, 6) << ',' << r.noise_payload_bytes
            << ',' << r.noise_overhead_bytes << ',' << csv_escape(r.error) << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const SweepSummary& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : s.rows) {
        rows.push_back({{"bits", r.bits},
                        {"seed", r.seed},
                        {"psnr_db", r.psnr},
                        {"ssim", r.ssim},
                        {"noise_payload_bytes", r.noise_payload_bytes},
                        {"noise_overhead_bytes", r.noise_overhead_bytes},
                        {"error", r.error}});
    }
    return {{"rows", rows}, {"monotone", s.monotone}, {"violations", s.violations}};
}

}  // namespace lsplit
