// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsplit/config.hpp"
#include "lsplit/node.hpp"

namespace lsplit {

/// One line of the LLM comparison table.
struct ReportRow {
    std::string method;          // "Cloud-only", "Lambda-Split w/o caching", ...
    std::string ratio;           // "local:cloud"
    std::string transmission;    // "Text", "Hidden state", "Latest part of hidden state", "-"
    TrafficReport report;
    std::vector<llm::TokenId> tokens;
    bool matches_monolithic = false;
    std::string error;           // empty unless the cell failed
};

/// Column names of the CSV, in order. The first eleven follow the published
/// table; the rest are exact byte counts and bookkeeping.
const std::vector<std::string>& report_columns();

std::string to_csv(const std::vector<ReportRow>& rows);
nlohmann::json to_json(const std::vector<ReportRow>& rows);

/// Cloud-only, split without caching and with caching for every entry of
/// settings.bench_local_layers, then local-only. Cells run one after another
/// against an in-process cloud node; a failing cell becomes an error row.
/// EOS is ignored so every row generates exactly l_out tokens.
std::vector<ReportRow> run_benchmark(const Settings& settings);

struct SweepRow {
    int bits = 32;
    std::uint64_t seed = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::uint64_t noise_payload_bytes = 0;   // downlink NOISE payload, all steps
    std::uint64_t noise_overhead_bytes = 0;  // headers and quantization blocks of those frames
    std::string error;
};

struct SweepSummary {
    std::vector<SweepRow> rows;
    /// Per seed, PSNR and SSIM never increase as bits drop (ties allowed).
    bool monotone = true;
    std::vector<std::string> violations;
};

/// Split LDM runs per bit width and seed, compared with the FP32 monolithic
/// image. 32 stands for FP32 and 16 for FP16. Images are written to
/// `image_dir` as seed<k>_<format>.ppm when it is non-empty.
SweepSummary run_ldm_sweep(const Settings& settings, const std::vector<int>& bits, const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& image_dir = {});

std::string to_csv(const SweepSummary& s);
nlohmann::json to_json(const SweepSummary& s);

}  // namespace lsplit
