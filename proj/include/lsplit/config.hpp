// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsplit/ldm.hpp"
#include "lsplit/llm.hpp"
#include "lsplit/netsim.hpp"

namespace lsplit {

enum class ModelKind { llm, ldm };
enum class Mode { cloud_only, local_only, lambda_split };

const char* model_kind_name(ModelKind k) noexcept;
ModelKind parse_model_kind(std::string_view s);
const char* mode_name(Mode m) noexcept;
Mode parse_mode(std::string_view s);

/// One generation request: what to run, where, and how the channel is used.
struct Experiment {
    ModelKind kind = ModelKind::llm;
    Mode mode = Mode::lambda_split;
    std::optional<llm::PartitionPlan> plan;  // explicit (X, Y); otherwise derived from local_layers
    std::size_t local_layers = 2;
    bool caching = true;
    wire::WireFormat wire = wire::WireFormat::fp32;
    ldm::CloudSync sync = ldm::CloudSync::own_fp32;
    std::string prompt = "What is the difference between AI, ML and DL?";
    std::size_t l_out = 32;
    bool stop_at_eos = true;
    std::size_t t_steps = 10;
    std::uint64_t seed = 42;

    /// The plan this experiment uses for a model with n blocks.
    llm::PartitionPlan resolve_plan(std::size_t n) const;
    void validate(const llm::LlmConfig& llm) const;
};

nlohmann::json to_json(const Experiment& e);
/// Fields missing from `j` keep the values of `defaults`.
Experiment experiment_from_json(const nlohmann::json& j, const Experiment& defaults);

/// Node and benchmark settings, read from a key = value file.
struct Settings {
    llm::LlmConfig llm;
    ldm::LdmConfig ldm;
    ChannelConfig channel;
    Experiment defaults;
    std::vector<std::size_t> bench_local_layers{2, 4, 6};
    std::string cloud_bind = "127.0.0.1:7070";
    std::string local_bind = "127.0.0.1:8080";
    std::string cloud_addr = "127.0.0.1:7070";
    double session_idle_s = 60.0;
    std::string csv_path;
    std::string json_path;
    std::string output_dir;
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys are errors.
Settings parse_settings(std::string_view text);
Settings load_settings(const std::filesystem::path& path);

/// LSPLIT_CLOUD_BIND, LSPLIT_LOCAL_BIND and LSPLIT_CLOUD_ADDR replace the file values.
void apply_env_overrides(Settings& s);

nlohmann::json to_json(const Settings& s);

}  // namespace lsplit
