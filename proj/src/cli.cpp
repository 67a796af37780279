#include "racer/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "racer/data.hpp"
#include "racer/errors.hpp"
#include "racer/imaging.hpp"
#include "racer/pgm.hpp"
#include "racer/runtime.hpp"
#include "racer/service.hpp"
#include "racer/simworld.hpp"
#include "racer/trainer.hpp"

namespace racer::cli {

namespace fs = std::filesystem;

namespace {

struct MissingPath : std::runtime_error {
    explicit MissingPath(const fs::path& p) : std::runtime_error("no such file or directory: " + p.string()) {}
};

void require_exists(const fs::path& p) {
    if (!fs::exists(p)) throw MissingPath(p);
}

void require_dataset(const fs::path& dir) {
    require_exists(dir);
    require_exists(dir / data::kIndexFile);
}

imaging::InputMode parse_input(const std::string& s) {
    if (s == "canny") return imaging::InputMode::canny;
    if (s == "raw") return imaging::InputMode::raw;
    throw std::invalid_argument("input must be canny or raw");
}

struct Options {
    // preprocess
    std::string pre_in, pre_out, pre_input = "canny";
    // collect
    std::string policy = "oracle";
    std::vector<std::string> tracks{"oval"};
    std::vector<std::string> styles{"sim"};
    int episodes = 1;
    double corrupt = 0.0;
    std::uint64_t seed = 0;
    std::string out;
    int max_steps = runtime::kDefaultMaxSteps;
    double start_offset = 0.05;
    double start_heading = 0.0;
    // filter
    std::string in;
    // train
    std::string data;
    int epochs = 10;
    double lr = 1e-4;
    int batch = 64;
    double val_fraction = 0.1;
    std::string input = "canny";
    // eval
    std::string model;
    std::string track = "oval";
    std::string style = "sim";
    int trials = 20;
    // bench
    int iters = 1000;
    std::string frame;
    std::string report;
    // serve
    int port = -1;
};

int run_preprocess(const Options& o, std::ostream& out) {
    require_exists(o.pre_in);
    const auto frame = imaging::read_pgm(o.pre_in);
    imaging::PipelineParams p;
    p.mode = parse_input(o.pre_input);
    p.frame_width = frame.width;
    p.frame_height = frame.height;
    if (p.mode == imaging::InputMode::canny) {
        const auto edge = imaging::preprocess(frame, p);
        imaging::write_edge_pgm(o.pre_out, edge);
        out << "edges=" << edge.count() << '\n';
    } else {
        const auto gray = imaging::prepare_input(frame, p);
        imaging::Frame f(imaging::EdgeMap::kSize, imaging::EdgeMap::kSize);
        for (std::size_t i = 0; i < gray.size(); ++i)
            f.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(gray[i], 0.0f, 1.0f) * 255.0f));
        imaging::write_pgm(o.pre_out, f);
    }
    return 0;
}

int run_collect(const Options& o, std::ostream& out) {
    if (o.policy != "oracle") throw std::invalid_argument("collect supports --policy oracle only");
    if (o.episodes < 1) throw std::invalid_argument("--episodes must be >= 1");
    fs::create_directories(o.out);
    sim::EpisodeOptions opts;
    opts.max_start_offset = o.start_offset;
    opts.max_start_heading_deg = o.start_heading;
    std::uint64_t counter = 0;
    for (const auto& name : o.tracks) {
        const auto track = sim::make_track(name);
        const auto policy = sim::oracle(track);
        for (const auto& style_text : o.styles) {
            const auto style = parse_style(style_text);
            for (int k = 0; k < o.episodes; ++k) {
                const auto seed = mix_seed(o.seed, counter++);
                const auto ep = sim::run_episode(policy, track, style, o.corrupt, o.max_steps, seed, opts);
                std::ostringstream file;
                file << name << '_' << style_text << '_' << std::setw(3) << std::setfill('0') << k << ".ep";
                data::write_episode(ep, fs::path(o.out) / file.str());
                out << file.str() << " steps=" << ep.steps.size() << " terminal=" << terminal_name(ep.terminal) << '\n';
            }
        }
    }
    const auto ds = data::build_index(o.out);
    out << "episodes=" << ds.entries.size() << " steps=" << ds.total_steps() << '\n';
    return 0;
}

int run_filter(const Options& o, std::ostream& out) {
    require_dataset(o.in);
    const auto result = data::filter_dataset(data::open_dataset(o.in), o.out);
    out << result.report.to_text();
    return 0;
}

int run_train(const Options& o, std::ostream& out) {
    require_dataset(o.data);
    const auto ds = data::open_dataset(o.data);
    const auto episodes = data::load_episodes(ds);
    if (episodes.empty()) throw std::invalid_argument("dataset " + o.data + " has no episodes");

    imaging::PipelineParams pipeline = ds.pipeline.value_or(imaging::PipelineParams{});
    pipeline.mode = parse_input(o.input);
    pipeline.frame_width = episodes.front().header.width;
    pipeline.frame_height = episodes.front().header.height;
    mixer::MixerConfig mc;
    trainer::TrainConfig tc;
    tc.learning_rate = o.lr;
    tc.batch_size = o.batch;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    tc.val_fraction = o.val_fraction;

    out << "lr=" << tc.learning_rate << " patch=" << mc.patch_size << " dim=" << mc.dim << " depth=" << mc.depth
        << " batch=" << tc.batch_size << " epochs=" << tc.epochs << " input=" << o.input
        << " params=" << mixer::count_params(mc) << '\n';
    const auto result = trainer::train(std::span<const Episode>(episodes), pipeline, mc, tc, &out);
    trainer::save_checkpoint(result.checkpoint, o.out);
    out << "saved " << o.out << '\n';
    return 0;
}

trainer::Checkpoint load_model(const std::string& path) {
    require_exists(path);
    return trainer::load_checkpoint(path);
}

int run_eval_dataset(const Options& o, std::ostream& out) {
    const auto ckpt = load_model(o.model);
    require_dataset(o.data);
    out << trainer::evaluate(ckpt, data::open_dataset(o.data)).to_text();
    return 0;
}

int run_eval_loop(const Options& o, std::ostream& out) {
    const auto track = sim::make_track(o.track);
    const auto style = parse_style(o.style);
    std::optional<trainer::Checkpoint> ckpt;
    sim::Policy policy;
    if (o.model.empty() || o.model == "oracle") {
        policy = sim::oracle(track);
    } else {
        ckpt = load_model(o.model);
        policy = runtime::model_policy(*ckpt);
    }
    const auto stats = runtime::run_trials(policy, track, style, o.corrupt, o.trials, o.seed, o.max_steps);
    out << "policy=" << policy.label << " track=" << o.track << " style=" << o.style << " corrupt=" << o.corrupt << '\n'
        << stats.to_text() << '\n';
    return 0;
}

int run_bench(const Options& o, std::ostream& out) {
    const auto ckpt = load_model(o.model);
    imaging::Frame frame;
    if (!o.frame.empty()) {
        require_exists(o.frame);
        frame = imaging::read_pgm(o.frame);
    } else {
        const auto track = sim::make_track("oval");
        frame = sim::render_camera(sim::start_state(track), track, {}, RenderStyle::sim, 0);
    }
    const auto report = runtime::bench(ckpt, frame, o.iters);
    const auto text = report.to_text();
    out << text;
    if (!o.report.empty()) {
        std::ofstream f(o.report);
        if (!f) throw std::runtime_error("cannot write " + o.report);
        f << text;
    }
    return 0;
}

int run_serve(const Options& o, std::ostream& out) {
    service::ServerOptions so;
    so.port = o.port >= 0 ? static_cast<std::uint16_t>(o.port) : service::default_port();
    if (!o.model.empty()) so.default_model = std::make_shared<const trainer::Checkpoint>(load_model(o.model));
    service::Server server(std::move(so));
    out << "listening on ws://127.0.0.1:" << server.port() << std::endl;
    server.run(true);
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"racer: edge-map driving policy toolkit", "racer"};
    app.require_subcommand(1, 1);
    Options o;

    auto* pre = app.add_subcommand("preprocess", "camera frame PGM -> 64x64 model input PGM");
    pre->add_option("input", o.pre_in, "input frame (P5 PGM)")->required();
    pre->add_option("output", o.pre_out, "output 64x64 PGM")->required();
    pre->add_option("--input-mode", o.pre_input, "canny or raw")->check(CLI::IsMember({"canny", "raw"}));

    auto* collect = app.add_subcommand("collect", "record oracle episodes");
    collect->add_option("--policy", o.policy, "demonstrator")->check(CLI::IsMember({"oracle"}));
    collect->add_option("--track", o.tracks, "track name, repeatable")->check(CLI::IsMember(sim::builtin_tracks()));
    collect->add_option("--style", o.styles, "sim or real, repeatable")->check(CLI::IsMember({"sim", "real"}));
    collect->add_option("--episodes", o.episodes, "episodes per track and style");
    collect->add_option("--corrupt", o.corrupt, "command corruption probability")->check(CLI::Range(0.0, 1.0));
    collect->add_option("--seed", o.seed);
    collect->add_option("--out", o.out, "output directory")->required();
    collect->add_option("--max-steps", o.max_steps);
    collect->add_option("--start-offset", o.start_offset, "max lateral start offset (m)");
    collect->add_option("--start-heading", o.start_heading, "max start heading offset (deg)");

    auto* filter = app.add_subcommand("filter", "reward-monotone filtering of a dataset");
    filter->add_option("--in", o.in)->required();
    filter->add_option("--out", o.out)->required();

    auto* train = app.add_subcommand("train", "train the mixer on a dataset");
    train->add_option("--data", o.data)->required();
    train->add_option("--out", o.out, "checkpoint path")->required();
    train->add_option("--epochs", o.epochs);
    train->add_option("--lr", o.lr);
    train->add_option("--batch", o.batch);
    train->add_option("--seed", o.seed);
    train->add_option("--val-fraction", o.val_fraction);
    train->add_option("--input", o.input, "canny or raw")->check(CLI::IsMember({"canny", "raw"}));

    auto* eval_ds = app.add_subcommand("eval-dataset", "action accuracy on a dataset");
    eval_ds->add_option("--model", o.model)->required();
    eval_ds->add_option("--data", o.data)->required();

    auto* eval_loop = app.add_subcommand("eval-loop", "closed-loop lap trials");
    eval_loop->add_option("--model", o.model, "checkpoint, or 'oracle'")->required();
    eval_loop->add_option("--track", o.track)->check(CLI::IsMember(sim::builtin_tracks()));
    eval_loop->add_option("--style", o.style)->check(CLI::IsMember({"sim", "real"}));
    eval_loop->add_option("--corrupt", o.corrupt)->check(CLI::Range(0.0, 1.0));
    eval_loop->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
    eval_loop->add_option("--seed", o.seed);
    eval_loop->add_option("--max-steps", o.max_steps);

    auto* bench = app.add_subcommand("bench", "end-to-end inference latency");
    bench->add_option("--model", o.model)->required();
    bench->add_option("--iters", o.iters)->check(CLI::Range(10, 100000000));
    bench->add_option("--frame", o.frame, "PGM frame (default: rendered oval start pose)");
    bench->add_option("--report", o.report, "also write the report here");

    auto* serve = app.add_subcommand("serve", "WebSocket session service");
    serve->add_option("--port", o.port, "default: RACER_PORT or 8700")->check(CLI::Range(0, 65535));
    serve->add_option("--model", o.model, "default model for policy sessions");

    std::vector<const char*> argv{"racer"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 2;
    }

    try {
        if (pre->parsed()) return run_preprocess(o, out);
        if (collect->parsed()) return run_collect(o, out);
        if (filter->parsed()) return run_filter(o, out);
        if (train->parsed()) return run_train(o, out);
        if (eval_ds->parsed()) return run_eval_dataset(o, out);
        if (eval_loop->parsed()) return run_eval_loop(o, out);
        if (bench->parsed()) return run_bench(o, out);
        if (serve->parsed()) return run_serve(o, out);
    } catch (const MissingPath& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace racer::cli
