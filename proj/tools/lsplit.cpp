// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

// lsplit: command line front end for the split-computing nodes and benchmarks.

#include <CLI11.hpp>
#include <httplib.h>

#include <fstream>
#include <iostream>
#include <set>

#include "lsplit/bench.hpp"
#include "lsplit/config.hpp"
#include "lsplit/error.hpp"
#include "lsplit/node.hpp"
#include "lsplit/tcp.hpp"

using namespace lsplit;

namespace {

Settings settings_from(const std::string& path) {
    Settings s = path.empty() ? Settings{} : load_settings(path);
    apply_env_overrides(s);
    return s;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::parameter, "cannot write " + path);
    out << text;
}

std::vector<int> parse_bits(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Triadic split computing for toy generative models"};
    app.require_subcommand(1);

    std::string config_path;
    auto add_config = [&](CLI::App* cmd) { cmd->add_option("--config", config_path, "key = value settings file"); };

    // bench
    auto* bench = app.add_subcommand("bench", "Run the LLM placement benchmark (8 rows)");
    add_config(bench);
    std::string csv_path, json_path;
    bench->add_option("--csv", csv_path, "CSV output path (default: settings csv, else stdout)");
    bench->add_option("--json", json_path, "JSON output path (default: settings json)");

    // serve-cloud
    auto* serve_cloud = app.add_subcommand("serve-cloud", "Serve body sub-models over TCP");
    add_config(serve_cloud);
    std::string cloud_bind;
    serve_cloud->add_option("--bind", cloud_bind, "host:port (default: settings cloud_bind)");

    // serve-local
    auto* serve_local = app.add_subcommand("serve-local", "Serve the JSON control API");
    add_config(serve_local);
    std::string cloud_addr, local_bind;
    bool in_process = false;
    serve_local->add_option("--cloud", cloud_addr, "cloud node host:port (default: settings cloud_addr)");
    serve_local->add_option("--bind", local_bind, "host:port for the control API (default: settings local_bind)");
    serve_local->add_flag("--in-process", in_process, "simulate the cloud inside this process");

    // ldm-sweep
    auto* sweep = app.add_subcommand("ldm-sweep", "Quantization sweep of the split LDM");
    add_config(sweep);
    std::string bits_text = "32,16,8,6,4,2";
    std::size_t seed_count = 10;
    std::uint64_t first_seed = 0;
    std::string sweep_out;
    sweep->add_option("--bits", bits_text, "comma separated widths; 32 = fp32, 16 = fp16");
    sweep->add_option("--seeds", seed_count, "number of seeds");
    sweep->add_option("--first-seed", first_seed, "first seed");
    sweep->add_option("--out", sweep_out, "directory for images, sweep.csv and sweep.json");

    // generate
    auto* gen = app.add_subcommand("generate", "Run one generation (in-process cloud unless --cloud is given)");
    add_config(gen);
    std::string g_kind = "llm", g_mode = "lambda-split", g_prompt, g_wire, g_sync, g_cloud, g_capture_out, g_image_out;
    std::optional<std::size_t> g_local_layers, g_l_out, g_t_steps;
    std::optional<std::uint64_t> g_seed;
    bool g_no_cache = false, g_no_eos = false;
    gen->add_option("--kind", g_kind, "llm | ldm");
    gen->add_option("--mode", g_mode, "cloud-only | local-only | lambda-split");
    gen->add_option("--prompt", g_prompt, "prompt text");
    gen->add_option("--local-layers", g_local_layers, "local layer budget m");
    gen->add_option("--l-out", g_l_out, "tokens to generate");
    gen->add_option("--t-steps", g_t_steps, "denoising steps");
    gen->add_option("--seed", g_seed, "sampling seed");
    gen->add_option("--wire", g_wire, "fp32 | fp16 | int8 | int6 | int4 | int2");
    gen->add_option("--cloud-sync", g_sync, "own-fp32 | dequantized");
    gen->add_flag("--no-cache", g_no_cache, "disable hidden-state caching");
    gen->add_flag("--no-eos", g_no_eos, "ignore EOS and always emit l_out tokens");
    gen->add_option("--cloud", g_cloud, "cloud node host:port");
    gen->add_option("--save-capture", g_capture_out, "write the eavesdropper capture (LSPC file)");
    gen->add_option("--image", g_image_out, "write the LDM image (PPM)");

    // capture
    auto* cap = app.add_subcommand("capture", "Show the eavesdropper's view of a session");
    std::optional<std::uint64_t> c_session;
    std::string c_local = "127.0.0.1:8080", c_file;
    bool c_hexdump = false;
    cap->add_option("--session", c_session, "session id on the local node (default: latest)");
    cap->add_option("--local", c_local, "local node control API host:port");
    cap->add_option("--file", c_file, "read a saved LSPC capture instead");
    cap->add_flag("--hexdump", c_hexdump, "print full hexdumps rather than a frame summary");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*bench) {
            const Settings s = settings_from(config_path);
            const auto rows = run_benchmark(s);
            const auto csv = to_csv(rows);
            const auto out_csv = csv_path.empty() ? s.csv_path : csv_path;
            const auto out_json = json_path.empty() ? s.json_path : json_path;
            if (out_csv.empty()) {
                std::cout << csv;
            } else {
                write_file(out_csv, csv);
                std::cout << "wrote " << out_csv << '\n';
            }
            if (!out_json.empty()) {
                write_file(out_json, to_json(rows).dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
                std::cout << "wrote " << out_json << '\n';
            }
            for (const auto& r : rows) {
                if (!r.error.empty()) return 1;
            }
            return 0;
        }

        if (*serve_cloud) {
            const Settings s = settings_from(config_path);
            auto node = std::make_shared<CloudNode>(llm::build_toy_llm(s.llm), ldm::build_toy_ldm(s.ldm), s.session_idle_s);
            std::set<std::pair<std::size_t, std::size_t>> seen;
            auto deploy = [&](const llm::PartitionPlan& p) {
                if (seen.insert({p.x, p.y}).second) {
                    node->deploy(p);
                    std::cout << "deployed split (" << p.x << ", " << p.y << ") ratio " << p.ratio() << '\n';
                }
            };
            for (auto m : s.bench_local_layers) deploy(llm::plan_partition(s.llm.n_blocks, m));
            deploy(s.defaults.plan ? *s.defaults.plan : llm::plan_partition(s.llm.n_blocks, s.defaults.local_layers));
            TcpServer server(node->handler());
            const auto bind = cloud_bind.empty() ? s.cloud_bind : cloud_bind;
            const auto port = server.start(bind);
            std::cout << "cloud node listening on port " << port << std::endl;
            server.wait();
            return 0;
        }

        if (*serve_local) {
            Settings s = settings_from(config_path);
            if (!cloud_addr.empty()) s.cloud_addr = cloud_addr;
            std::shared_ptr<CloudNode> cloud;
            if (in_process) cloud = std::make_shared<CloudNode>(llm::build_toy_llm(s.llm), ldm::build_toy_ldm(s.ldm), s.session_idle_s);
            LocalNode node(s, cloud);
            const auto bind = local_bind.empty() ? s.local_bind : local_bind;
            std::cout << "local node control API on " << bind << " (cloud: " << (cloud ? "in-process" : s.cloud_addr) << ")"
                      << std::endl;
            node.serve(bind);
            return 0;
        }

        if (*sweep) {
            const Settings s = settings_from(config_path);
            auto bits = parse_bits(bits_text);
            if (std::find(bits.begin(), bits.end(), 32) == bits.end()) bits.insert(bits.begin(), 32);
            std::vector<std::uint64_t> seeds;
            for (std::size_t i = 0; i < seed_count; ++i) seeds.push_back(first_seed + i);
            const auto summary = run_ldm_sweep(s, bits, seeds, std::filesystem::path(sweep_out));
            const auto csv = to_csv(summary);
            std::cout << csv;
            if (!sweep_out.empty()) {
                write_file((std::filesystem::path(sweep_out) / "sweep.csv").string(), csv);
                write_file((std::filesystem::path(sweep_out) / "sweep.json").string(), to_json(summary).dump(2) + "\n");
            }
            std::cout << "monotone: " << (summary.monotone ? "yes" : "no") << '\n';
            for (const auto& v : summary.violations) std::cout << "  " << v << '\n';
            return summary.monotone ? 0 : 1;
        }

        if (*gen) {
            Settings s = settings_from(config_path);
            Experiment e = s.defaults;
            e.kind = parse_model_kind(g_kind);
            e.mode = parse_mode(g_mode);
            if (!g_prompt.empty()) e.prompt = g_prompt;
            if (g_local_layers) {
                e.local_layers = *g_local_layers;
                e.plan.reset();
            }
            if (g_l_out) e.l_out = *g_l_out;
            if (g_t_steps) e.t_steps = *g_t_steps;
            if (g_seed) e.seed = *g_seed;
            if (!g_wire.empty()) e.wire = wire::parse_wire_format(g_wire);
            if (!g_sync.empty()) e.sync = ldm::parse_cloud_sync(g_sync);
            if (g_no_cache) e.caching = false;
            if (g_no_eos) e.stop_at_eos = false;
            std::shared_ptr<CloudNode> cloud;
            if (g_cloud.empty()) {
                cloud = std::make_shared<CloudNode>(llm::build_toy_llm(s.llm), ldm::build_toy_ldm(s.ldm), s.session_idle_s);
            } else {
                s.cloud_addr = g_cloud;
            }
            LocalNode node(s, cloud);
            const Outcome o = node.generate(e);
            auto j = to_json(o);
            j.erase("image");
            std::cout << j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
            if (!g_capture_out.empty()) o.capture.save(g_capture_out);
            if (!g_image_out.empty() && !o.image.rgb.empty()) write_ppm(o.image, g_image_out);
            return o.ok() ? 0 : 1;
        }

        if (*cap) {
            if (!c_file.empty()) {
                const auto log = CaptureLog::load(c_file);
                if (c_hexdump) {
                    std::cout << capture_hexdump(log);
                } else {
                    for (std::size_t i = 0; i < log.size(); ++i) {
                        const auto& r = log.records()[i];
                        const auto d = wire::decode_frame(r.bytes);
                        std::cout << i << ' ' << direction_name(r.direction) << ' '
                                  << (d ? wire::msg_type_name(d.frame().type) : "UNDECODABLE") << ' ' << r.bytes.size() << " bytes\n";
                    }
                }
                return 0;
            }
            const auto [host, port] = parse_host_port(c_local);
            httplib::Client client(host, port);
            std::string path = "/capture";
            if (c_session) path += "?session=" + std::to_string(*c_session);
            const auto res = client.Get(path);
            if (!res) throw Error(Errc::channel, "local node at " + c_local + " is unreachable");
            const auto j = nlohmann::json::parse(res->body);
            if (res->status != 200) throw Error(Errc::parameter, j.dump());
            for (const auto& r : j["records"]) {
                std::cout << "# frame " << r["index"].get<std::size_t>() << ' ' << r["direction"].get<std::string>() << ' '
                          << r["type"].get<std::string>() << ' ' << r["length"].get<std::size_t>() << " bytes\n";
                if (c_hexdump) {
                    for (const auto& line : r["hexdump"]) std::cout << line.get<std::string>() << '\n';
                }
            }
            std::cout << "leaks: " << j["leak_count"].get<std::size_t>() << '\n';
            for (const auto& l : j["leaks"]) {
                std::cout << "  frame " << l["record"] << " offset " << l["offset"] << " length " << l["length"] << '\n';
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "lsplit: " << errc_name(e.code()) << " error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "lsplit: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
