// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lsplit/error.hpp"

namespace lsplit {

const char* model_kind_name(ModelKind k) noexcept { return k == ModelKind::llm ? "llm" : "ldm"; }

ModelKind parse_model_kind(std::string_view s) {
    if (s == "llm") return ModelKind::llm;
    if (s == "ldm") return ModelKind::ldm;
    throw Error(Errc::parameter, "unknown model kind '" + std::string(s) + "'");
}

const char* mode_name(Mode m) noexcept {
    switch (m) {
        case Mode::cloud_only: return "cloud-only";
        case Mode::local_only: return "local-only";
        case Mode::lambda_split: return "lambda-split";
    }
    return "lambda-split";
}

Mode parse_mode(std::string_view s) {
    if (s == "cloud-only") return Mode::cloud_only;
    if (s == "local-only") return Mode::local_only;
    if (s == "lambda-split" || s == "split") return Mode::lambda_split;
    throw Error(Errc::parameter, "unknown mode '" + std::string(s) + "'");
}

llm::PartitionPlan Experiment::resolve_plan(std::size_t n) const {
    if (plan) return *plan;
    switch (mode) {
        case Mode::cloud_only: return {n, 0, n};
        case Mode::local_only: return {n, n, n};
        case Mode::lambda_split: return llm::plan_partition(n, local_layers);
    }
    return {n, 0, n};
}

void Experiment::validate(const llm::LlmConfig& llm) const {
    if (kind == ModelKind::llm) {
        if (mode == Mode::lambda_split) {
            const auto p = resolve_plan(llm.n_blocks);
            p.validate();
            if (p.n != llm.n_blocks) throw Error(Errc::plan, "plan N does not match the model");
            if (wire != wire::WireFormat::fp32 && wire != wire::WireFormat::fp16) {
                throw Error(Errc::parameter, "LLM hidden states travel as fp32 or fp16");
            }
        }
        if (prompt.empty()) throw Error(Errc::parameter, "prompt must not be empty");
        if (prompt.size() + l_out > llm.max_len) {
            throw Error(Errc::overflow, "prompt length + l_out = " + std::to_string(prompt.size() + l_out) +
                                            " exceeds max_len " + std::to_string(llm.max_len));
        }
        if (mode == Mode::cloud_only && llm.vocab > 256) {
            throw Error(Errc::parameter, "cloud-only text mode needs vocab <= 256");
        }
    } else if (t_steps < 1) {
        throw Error(Errc::parameter, "t_steps must be at least 1");
    }
}

nlohmann::json to_json(const Experiment& e) {
    nlohmann::json j = {{"kind", model_kind_name(e.kind)},
                        {"mode", mode_name(e.mode)},
                        {"local_layers", e.local_layers},
                        {"caching", e.caching},
                        {"wire", wire::wire_format_name(e.wire)},
                        {"cloud_sync", ldm::cloud_sync_name(e.sync)},
                        {"prompt", e.prompt},
                        {"l_out", e.l_out},
                        {"stop_at_eos", e.stop_at_eos},
                        {"t_steps", e.t_steps},
                        {"seed", e.seed}};
    if (e.plan) j["plan"] = {{"n", e.plan->n}, {"x", e.plan->x}, {"y", e.plan->y}};
    return j;
}

Experiment experiment_from_json(const nlohmann::json& j, const Experiment& defaults) {
    if (!j.is_object()) throw Error(Errc::parameter, "request body must be a JSON object");
    Experiment e = defaults;
    try {
        // Flat fields, optionally grouped under "params".
        nlohmann::json flat = j;
        if (j.contains("params")) {
            if (!j["params"].is_object()) throw Error(Errc::parameter, "params must be an object");
            for (const auto& [k, v] : j["params"].items()) flat[k] = v;
        }
        if (flat.contains("kind")) e.kind = parse_model_kind(flat["kind"].get<std::string>());
        if (flat.contains("mode")) e.mode = parse_mode(flat["mode"].get<std::string>());
        if (flat.contains("local_layers")) {
            e.local_layers = flat["local_layers"].get<std::size_t>();
            e.plan.reset();
        }
        if (flat.contains("plan")) {
            const auto& p = flat["plan"];
            e.plan = llm::PartitionPlan{p.at("n").get<std::size_t>(), p.at("x").get<std::size_t>(),
                                        p.at("y").get<std::size_t>()};
        }
        if (flat.contains("caching")) e.caching = flat["caching"].get<bool>();
        if (flat.contains("wire")) e.wire = wire::parse_wire_format(flat["wire"].get<std::string>());
        if (flat.contains("bits")) e.wire = wire::wire_format_from_bits(flat["bits"].get<int>());
        if (flat.contains("cloud_sync")) e.sync = ldm::parse_cloud_sync(flat["cloud_sync"].get<std::string>());
        if (flat.contains("prompt")) e.prompt = flat["prompt"].get<std::string>();
        if (flat.contains("l_out")) e.l_out = flat["l_out"].get<std::size_t>();
        if (flat.contains("stop_at_eos")) e.stop_at_eos = flat["stop_at_eos"].get<bool>();
        if (flat.contains("t_steps")) e.t_steps = flat["t_steps"].get<std::size_t>();
        if (flat.contains("seed")) e.seed = flat["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::parameter, std::string("bad request field: ") + ex.what());
    }
    return e;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw Error(Errc::parameter, "bad value for " + key + ": '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(Errc::parameter, "bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
    return out;
}

llm::PartitionPlan parse_split(const std::string& key, const std::string& v, std::size_t n) {
    const auto parts = parse_list(key, v);
    if (parts.size() != 2) throw Error(Errc::parameter, key + " must be 'X,Y'");
    return {n, parts[0], parts[1]};
}

}  // namespace

Settings parse_settings(std::string_view text) {
    Settings s;
    std::optional<std::string> split_text;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"n_blocks", [&](auto& k, auto& v) { s.llm.n_blocks = parse_number<std::size_t>(k, v); }},
        {"d_model", [&](auto& k, auto& v) { s.llm.d_model = parse_number<std::size_t>(k, v); }},
        {"heads", [&](auto& k, auto& v) { s.llm.heads = parse_number<std::size_t>(k, v); }},
        {"vocab", [&](auto& k, auto& v) { s.llm.vocab = parse_number<std::size_t>(k, v); }},
        {"max_len", [&](auto& k, auto& v) { s.llm.max_len = parse_number<std::size_t>(k, v); }},
        {"model_seed", [&](auto& k, auto& v) {
             s.llm.seed = PrngSeed{parse_number<std::uint64_t>(k, v)};
             s.ldm.seed = s.llm.seed;
         }},
        {"latent_channels", [&](auto& k, auto& v) { s.ldm.channels = parse_number<std::size_t>(k, v); }},
        {"latent_height", [&](auto& k, auto& v) { s.ldm.height = parse_number<std::size_t>(k, v); }},
        {"latent_width", [&](auto& k, auto& v) { s.ldm.width = parse_number<std::size_t>(k, v); }},
        {"embed_dim", [&](auto& k, auto& v) { s.ldm.embed_dim = parse_number<std::size_t>(k, v); }},
        {"unet_hidden", [&](auto& k, auto& v) { s.ldm.hidden = parse_number<std::size_t>(k, v); }},
        {"bandwidth_mbps", [&](auto& k, auto& v) { s.channel.bandwidth_bits_per_s = parse_number<double>(k, v) * 1e6; }},
        {"rtt_ms", [&](auto& k, auto& v) { s.channel.rtt_s = parse_number<double>(k, v) / 1e3; }},
        {"kind", [&](auto&, auto& v) { s.defaults.kind = parse_model_kind(v); }},
        {"mode", [&](auto&, auto& v) { s.defaults.mode = parse_mode(v); }},
        {"local_layers", [&](auto& k, auto& v) { s.defaults.local_layers = parse_number<std::size_t>(k, v); }},
        {"split", [&](auto&, auto& v) { split_text = v; }},
        {"caching", [&](auto& k, auto& v) { s.defaults.caching = parse_bool(k, v); }},
        {"wire", [&](auto&, auto& v) { s.defaults.wire = wire::parse_wire_format(v); }},
        {"cloud_sync", [&](auto&, auto& v) { s.defaults.sync = ldm::parse_cloud_sync(v); }},
        {"prompt", [&](auto&, auto& v) { s.defaults.prompt = v; }},
        {"l_out", [&](auto& k, auto& v) { s.defaults.l_out = parse_number<std::size_t>(k, v); }},
        {"stop_at_eos", [&](auto& k, auto& v) { s.defaults.stop_at_eos = parse_bool(k, v); }},
        {"t_steps", [&](auto& k, auto& v) {
             s.defaults.t_steps = parse_number<std::size_t>(k, v);
             s.ldm.t_steps = s.defaults.t_steps;
         }},
        {"seed", [&](auto& k, auto& v) { s.defaults.seed = parse_number<std::uint64_t>(k, v); }},
        {"bench_local_layers", [&](auto& k, auto& v) { s.bench_local_layers = parse_list(k, v); }},
        {"cloud_bind", [&](auto&, auto& v) { s.cloud_bind = v; }},
        {"local_bind", [&](auto&, auto& v) { s.local_bind = v; }},
        {"cloud_addr", [&](auto&, auto& v) { s.cloud_addr = v; }},
        {"session_idle_s", [&](auto& k, auto& v) { s.session_idle_s = parse_number<double>(k, v); }},
        {"csv", [&](auto&, auto& v) { s.csv_path = v; }},
        {"json", [&](auto&, auto& v) { s.json_path = v; }},
        {"output_dir", [&](auto&, auto& v) { s.output_dir = v; }},
    };

    std::stringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = line;
        if (const auto hash = body.find('#'); hash != std::string::npos) body.resize(hash);
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw Error(Errc::parameter, "line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const auto key = trim(std::string_view(body).substr(0, eq));
        const auto value = trim(std::string_view(body).substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) throw Error(Errc::parameter, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(key, value);
    }
    if (split_text) s.defaults.plan = parse_split("split", *split_text, s.llm.n_blocks);
    s.llm.validate();
    s.ldm.validate();
    if (s.channel.bandwidth_bits_per_s <= 0.0) throw Error(Errc::parameter, "bandwidth must be positive");
    if (s.channel.rtt_s < 0.0) throw Error(Errc::parameter, "rtt must be non-negative");
    for (auto m : s.bench_local_layers) {
        if (m > s.llm.n_blocks) throw Error(Errc::plan, "bench_local_layers entry exceeds n_blocks");
    }
    return s;
}

Settings load_settings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::parameter, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_settings(ss.str());
}

void apply_env_overrides(Settings& s) {
    if (const char* v = std::getenv("LSPLIT_CLOUD_BIND"); v && *v) s.cloud_bind = v;
    if (const char* v = std::getenv("LSPLIT_LOCAL_BIND"); v && *v) s.local_bind = v;
    if (const char* v = std::getenv("LSPLIT_CLOUD_ADDR"); v && *v) s.cloud_addr = v;
}

nlohmann::json to_json(const Settings& s) {
    return {{"llm",
             {{"n_blocks", s.llm.n_blocks},
              {"d_model", s.llm.d_model},
              {"heads", s.llm.heads},
              {"vocab", s.llm.vocab},
              {"max_len", s.llm.max_len},
              {"seed", s.llm.seed.value}}},
            {"ldm",
             {{"latent_shape", s.ldm.latent_shape()},
              {"t_steps", s.ldm.t_steps},
              {"embed_dim", s.ldm.embed_dim},
              {"hidden", s.ldm.hidden},
              {"seed", s.ldm.seed.value}}},
            {"channel", {{"bandwidth_bits_per_s", s.channel.bandwidth_bits_per_s}, {"rtt_s", s.channel.rtt_s}}},
            {"defaults", to_json(s.defaults)},
            {"bench_local_layers", s.bench_local_layers},
            {"cloud_bind", s.cloud_bind},
            {"local_bind", s.local_bind},
            {"cloud_addr", s.cloud_addr},
            {"session_idle_s", s.session_idle_s}};
}

}  // namespace lsplit
