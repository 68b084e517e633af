/// @file
/// @brief Command-line driver: generate | train | rollout | evaluate |
/// spectra. Every verb reads a flat key=value config, writes its outputs
/// atomically, and records a JSON manifest capturing what ran.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "melisa/io.hpp"
#include "melisa/metrics.hpp"
#include "melisa/net.hpp"
#include "melisa/rollout.hpp"
#include "melisa/solver.hpp"
#include "melisa/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace melisa;

namespace {

std::string iso_utc(std::chrono::system_clock::time_point tp) {
    std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Wall-clock bracket for manifests.
class Stopwatch {
public:
    Stopwatch()
        : wall_(std::chrono::system_clock::now()),
          mono_(std::chrono::steady_clock::now()) {}

    void stamp(json& j) const {
        j["started"] = iso_utc(wall_);
        j["finished"] = iso_utc(std::chrono::system_clock::now());
        j["wall_seconds"] = seconds();
    }
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             mono_)
            .count();
    }

private:
    std::chrono::system_clock::time_point wall_;
    std::chrono::steady_clock::time_point mono_;
};

json config_snapshot(const Config& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.entries()) j[k] = v;
    return j;
}

void write_json(const std::string& path, const json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::string& path) {
    std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw DataError("not valid JSON: " + path);
    return j;
}

/// Paths inside manifests are stored relative to the manifest file.
std::string resolve_near(const std::string& anchor_file, const std::string& p) {
    fs::path rel(p);
    if (rel.is_absolute()) return rel.string();
    return (fs::path(anchor_file).parent_path() / rel).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create output directory " + dir + ": " +
                        ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int split_count(double fraction, int n, const char* which) {
    double exact = fraction * n;
    int c = int(std::llround(exact));
    if (std::abs(exact - c) > 1e-9)
        throw ConfigError(std::string("split_") + which + " fraction " +
                          std::to_string(fraction) + " of " +
                          std::to_string(n) +
                          " trajectories is not a whole number");
    if (c < 0) throw ConfigError(std::string("split_") + which + " is negative");
    return c;
}

// ---- generate ---------------------------------------------------------------

int cmd_generate(const std::string& config_path) {
    Stopwatch watch;
    Config cfg = Config::parse_file(config_path);
    std::string out_dir = cfg.get_string("out_dir");
    uint64_t seed = uint64_t(cfg.get_int("seed", 0));
    int n_traj = int(cfg.get_int("n_traj", 8));
    int n_frames = int(cfg.get_int("n_frames", 320));
    int burn_in = int(cfg.get_int("burn_in", 4000));
    double f_train = cfg.get_double("split_train", 0.625);
    double f_val = cfg.get_double("split_val", 0.125);
    double f_test = cfg.get_double("split_test", 0.25);
    bool normalize = cfg.get_bool("normalize", true);

    SolverConfig sc;
    sc.grid = int(cfg.get_int("grid", sc.grid));
    sc.nu = cfg.get_double("nu", sc.nu);
    sc.forcing = cfg.get_bool("forcing", sc.forcing);
    sc.forcing_n = int(cfg.get_int("forcing_n", sc.forcing_n));
    sc.dt = cfg.get_double("dt", sc.dt);
    sc.stride = int(cfg.get_int("stride", sc.stride));
    cfg.require_all_consumed();
    sc.validate();

    int c_train = split_count(f_train, n_traj, "train");
    int c_val = split_count(f_val, n_traj, "val");
    int c_test = split_count(f_test, n_traj, "test");
    if (c_train + c_val + c_test != n_traj)
        throw ConfigError("split fractions cover " +
                          std::to_string(c_train + c_val + c_test) + " of " +
                          std::to_string(n_traj) + " trajectories");

    ensure_dir(out_dir);
    std::vector<Tensor> trajs =
        generate_trajectories(sc, n_traj, n_frames, burn_in, seed);

    // Standardize the stored fields so the unit-variance noise prior of the
    // surrogate matches the data scale; the divisor is recorded below.
    double norm_scale = 1.0;
    if (normalize) {
        double acc = 0.0;
        int64_t count = 0;
        int upto = c_train > 0 ? c_train : n_traj;
        for (int i = 0; i < upto; ++i) {
            const Tensor& t = trajs[size_t(i)];
            for (int64_t j = 0; j < t.numel(); ++j) acc += t[j] * t[j];
            count += t.numel();
        }
        norm_scale = std::sqrt(acc / double(count));
        if (!(norm_scale > 1e-300))
            throw NumericalError("cannot standardize an all-zero dataset");
        for (Tensor& t : trajs)
            for (int64_t j = 0; j < t.numel(); ++j) t[j] /= norm_scale;
    }

    json splits = json::object();
    int offset = 0;
    auto save_split = [&](const char* name, int count) {
        std::vector<Tensor> part(trajs.begin() + offset,
                                 trajs.begin() + offset + count);
        offset += count;
        std::string file = std::string(name) + ".mltr";
        if (count > 0) save_trajectories(join(out_dir, file), part);
        splits[name] = {{"file", file}, {"trajectories", count}};
    };
    save_split("train", c_train);
    save_split("val", c_val);
    save_split("test", c_test);

    json man;
    man["command"] = "generate";
    man["config"] = config_snapshot(cfg);
    man["seed"] = seed;
    man["grid"] = sc.grid;
    man["frames"] = n_frames;
    man["trajectories"] = n_traj;
    man["burn_in"] = burn_in;
    man["normalization"] = {{"enabled", normalize}, {"scale", norm_scale}};
    man["splits"] = splits;
    watch.stamp(man);
    write_json(join(out_dir, "manifest.json"), man);
    std::cout << "generated " << n_traj << " trajectories of " << n_frames
              << " frames at " << sc.grid << "^2 into " << out_dir << "\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

std::string split_file(const json& manifest, const std::string& manifest_path,
                       const std::string& split) {
    if (!manifest.contains("splits") || !manifest["splits"].contains(split))
        throw DataError("dataset manifest " + manifest_path +
                        " lists no '" + split + "' split");
    const json& s = manifest["splits"][split];
    if (s.value("trajectories", 0) < 1)
        throw DataError("dataset manifest " + manifest_path +
                        " has an empty '" + split + "' split");
    return resolve_near(manifest_path, s["file"].get<std::string>());
}

int cmd_train(const std::string& config_path, bool restart_requested) {
    if (restart_requested)
        throw ConfigError(
            "training resume/restart is not supported; remove the previous "
            "output directory and train from scratch");
    Stopwatch watch;
    Config cfg = Config::parse_file(config_path);
    std::string manifest_path = cfg.get_string("dataset_manifest");
    std::string out_dir = cfg.get_string("out_dir");

    TrainConfig tc;
    tc.net.depth = int(cfg.get_int("depth", tc.net.depth));
    tc.net.width = int(cfg.get_int("width", tc.net.width));
    tc.net.window = int(cfg.get_int("window", tc.net.window));
    tc.net.embed = int(cfg.get_int("embed", tc.net.embed));
    tc.net.groups = int(cfg.get_int("groups", tc.net.groups));
    tc.mask_rate = cfg.get_double("mask_rate", tc.mask_rate);
    tc.batch = int(cfg.get_int("batch", tc.batch));
    tc.steps = cfg.get_int("steps", tc.steps);
    tc.lr = cfg.get_double("lr", tc.lr);
    tc.schedule = schedule_from_string(cfg.get_string("schedule", "constant"));
    tc.optimizer = optimizer_from_string(cfg.get_string("optimizer", "adam"));
    tc.seed = uint64_t(cfg.get_int("seed", 42));
    tc.clip_norm = cfg.get_double("clip_norm", tc.clip_norm);
    tc.checkpoint_interval = cfg.get_int("checkpoint_interval", 0);
    cfg.require_all_consumed();

    if (!fs::exists(manifest_path))
        throw DataError("dataset manifest not found: " + manifest_path);
    json manifest = load_json(manifest_path);
    Dataset ds;
    ds.trajs = load_trajectories(split_file(manifest, manifest_path, "train"));

    tc.net.channels = ds.trajs[0].dim(1);
    tc.net.height = ds.trajs[0].dim(2);
    tc.net.width_s = ds.trajs[0].dim(3);

    ensure_dir(out_dir);
    tc.checkpoint_path = join(out_dir, "checkpoint.mlsa");
    tc.loss_log_path = join(out_dir, "loss_log.csv");
    TrainResult res = train(ds, tc);

    json man;
    man["command"] = "train";
    man["config"] = config_snapshot(cfg);
    man["seed"] = tc.seed;
    man["dataset_manifest"] = manifest_path;
    man["checkpoint"] = "checkpoint.mlsa";
    man["loss_log"] = "loss_log.csv";
    man["steps"] = tc.steps;
    man["parameters"] = res.net.params().total_elements();
    man["final_loss"] = res.log.empty() ? 0.0 : res.log.back().total;
    watch.stamp(man);
    write_json(join(out_dir, "train_manifest.json"), man);
    std::cout << "trained " << tc.steps << " steps; final loss "
              << (res.log.empty() ? 0.0 : res.log.back().total)
              << "; checkpoint in " << out_dir << "\n";
    return 0;
}

// ---- rollout ----------------------------------------------------------------

struct RolloutFlags {
    std::string checkpoint;
    std::string out_dir;
    int horizon = -1;
    int ensemble = -1;
    int64_t seed = -1;
};

int cmd_rollout(const std::string& config_path, const RolloutFlags& flags) {
    Stopwatch watch;
    Config cfg = Config::parse_file(config_path);
    std::string manifest_path = cfg.get_string("dataset_manifest");
    // Config keys first (so every key counts as consumed), flags override.
    std::string checkpoint = cfg.get_string("checkpoint", "");
    std::string out_dir = cfg.get_string("out_dir", "");
    if (!flags.checkpoint.empty()) checkpoint = flags.checkpoint;
    if (!flags.out_dir.empty()) out_dir = flags.out_dir;
    if (checkpoint.empty())
        throw ConfigError("no checkpoint given (config key or --checkpoint)");
    if (out_dir.empty())
        throw ConfigError("no output directory given (config key or --out)");

    RolloutConfig rc;
    rc.context = int(cfg.get_int("context", rc.context));
    rc.horizon = int(cfg.get_int("horizon", rc.horizon));
    rc.ensemble = int(cfg.get_int("ensemble", rc.ensemble));
    rc.seed = uint64_t(cfg.get_int("seed", 42));
    if (flags.horizon > 0) rc.horizon = flags.horizon;
    if (flags.ensemble > 0) rc.ensemble = flags.ensemble;
    if (flags.seed >= 0) rc.seed = uint64_t(flags.seed);
    cfg.require_all_consumed();

    if (!fs::exists(manifest_path))
        throw DataError("dataset manifest not found: " + manifest_path);
    json manifest = load_json(manifest_path);
    std::string test_file = split_file(manifest, manifest_path, "test");
    std::vector<Tensor> test = load_trajectories(test_file);

    DenoiserNet net = load_checkpoint(checkpoint);
    rc.validate(net.config().window);
    const int s = net.config().window - rc.context;
    const int64_t want_nfe = (rc.horizon + s - 1) / s;

    ensure_dir(out_dir);
    json traj_entries = json::array();
    for (size_t j = 0; j < test.size(); ++j) {
        Stopwatch traj_watch;
        Tensor observed = head_frames(test[j], rc.context);
        std::vector<RolloutResult> members = ensemble_rollout(net, observed, rc);
        json files = json::array();
        for (size_t m = 0; m < members.size(); ++m) {
            if (members[m].nfe != want_nfe)
                throw InternalError("rollout used " +
                                    std::to_string(members[m].nfe) +
                                    " network calls, expected " +
                                    std::to_string(want_nfe));
            char name[48];
            std::snprintf(name, sizeof name, "forecast_t%02d_m%02d.mltr",
                          int(j), int(m));
            save_trajectories(join(out_dir, name), {members[m].frames});
            files.push_back(name);
        }
        traj_entries.push_back({{"index", j},
                                {"seconds", traj_watch.seconds()},
                                {"nfe", want_nfe},
                                {"members", files}});
    }

    json man;
    man["command"] = "rollout";
    man["config"] = config_snapshot(cfg);
    man["checkpoint"] = fs::absolute(checkpoint).string();
    man["dataset_manifest"] = fs::absolute(manifest_path).string();
    man["reference_file"] = fs::absolute(test_file).string();
    man["context"] = rc.context;
    man["horizon"] = rc.horizon;
    man["block_size"] = s;
    man["ensemble"] = rc.ensemble;
    man["seed"] = rc.seed;
    man["nfe_per_member"] = want_nfe;
    man["trajectories"] = traj_entries;
    watch.stamp(man);
    write_json(join(out_dir, "rollout_manifest.json"), man);
    std::cout << "rolled out " << test.size() << " trajectories, horizon "
              << rc.horizon << ", " << want_nfe << " network calls each, into "
              << out_dir << "\n";
    return 0;
}

// ---- evaluate ---------------------------------------------------------------

int cmd_evaluate(const std::string& config_path, const std::string& out_flag) {
    Stopwatch watch;
    Config cfg = Config::parse_file(config_path);
    std::string roll_path = cfg.get_string("rollout_manifest");
    std::string out_dir = cfg.get_string("out_dir", "");
    if (!out_flag.empty()) out_dir = out_flag;
    if (out_dir.empty())
        throw ConfigError("no output directory given (config key or --out)");
    cfg.require_all_consumed();

    if (!fs::exists(roll_path))
        throw DataError("rollout manifest not found: " + roll_path);
    json roll = load_json(roll_path);
    const int context = roll["context"].get<int>();
    const int horizon = roll["horizon"].get<int>();
    const int ensemble = roll["ensemble"].get<int>();
    std::string ref_file = resolve_near(roll_path, roll["reference_file"]);
    std::vector<Tensor> ref_full = load_trajectories(ref_file);

    std::vector<Tensor> pred, ref;
    std::vector<std::vector<Tensor>> ens(
        size_t(ensemble > 1 ? ensemble : 0));
    for (const json& entry : roll["trajectories"]) {
        size_t j = entry["index"].get<size_t>();
        if (j >= ref_full.size())
            throw DataError("rollout manifest refers to trajectory " +
                            std::to_string(j) + " beyond the reference set");
        if (ref_full[j].dim(0) < context + horizon)
            throw DataError("reference trajectory " + std::to_string(j) +
                            " has " + std::to_string(ref_full[j].dim(0)) +
                            " frames, need " +
                            std::to_string(context + horizon));
        ref.push_back(tail_frames(head_frames(ref_full[j], context + horizon),
                                  horizon));
        const json& files = entry["members"];
        for (size_t m = 0; m < files.size(); ++m) {
            std::vector<Tensor> loaded = load_trajectories(
                resolve_near(roll_path, files[m].get<std::string>()));
            if (loaded.size() != 1)
                throw DataError("forecast file holds " +
                                std::to_string(loaded.size()) +
                                " trajectories, expected 1");
            if (m == 0) pred.push_back(loaded[0]);
            if (ensemble > 1) ens[m].push_back(std::move(loaded[0]));
        }
    }

    MetricReport rep = evaluate_rollout(pred, ref, ens);
    ensure_dir(out_dir);
    write_file_atomic(join(out_dir, "metrics.csv"), rep.csv());
    write_file_atomic(join(out_dir, "metrics.txt"), rep.table());

    json man;
    man["command"] = "evaluate";
    man["config"] = config_snapshot(cfg);
    man["rollout_manifest"] = roll_path;
    man["short_horizon"] = rep.short_horizon;
    man["long_horizon"] = rep.long_horizon;
    json means;
    means["rl2"] = {{"mean", rep.rl2.mean}, {"sem", rep.rl2.sem}};
    means["ssim"] = {{"mean", rep.ssim.mean}, {"sem", rep.ssim.sem}};
    means["psdd"] = {{"mean", rep.psdd.mean}, {"sem", rep.psdd.sem}};
    means["tked"] = {{"mean", rep.tked.mean}, {"sem", rep.tked.sem}};
    means["mrd"] = {{"mean", rep.mrd.mean}, {"sem", rep.mrd.sem}};
    if (rep.crps)
        means["crps"] = {{"mean", rep.crps->mean}, {"sem", rep.crps->sem}};
    man["metrics"] = means;
    watch.stamp(man);
    write_json(join(out_dir, "evaluate_manifest.json"), man);
    std::cout << rep.table();
    return 0;
}

// ---- spectra ----------------------------------------------------------------

int cmd_spectra(const std::string& config_path, const std::string& out_flag,
                const std::vector<std::string>& inputs) {
    std::string out_dir = out_flag;
    if (!config_path.empty()) {
        Config cfg = Config::parse_file(config_path);
        if (out_dir.empty()) out_dir = cfg.get_string("out_dir");
        else cfg.get_string("out_dir", "");
        cfg.require_all_consumed();
    }
    if (out_dir.empty())
        throw ConfigError("spectra needs an output directory (--out or "
                          "out_dir in the config)");
    ensure_dir(out_dir);

    for (const std::string& input : inputs) {
        std::vector<Tensor> trajs = load_trajectories(input);
        const int t = trajs[0].dim(0), c = trajs[0].dim(1);
        const int h = trajs[0].dim(2), w = trajs[0].dim(3);
        std::string stem = fs::path(input).stem().string();

        // Mean radial power profile over every frame, channels summed.
        const int k_r = kr_default(h, w);
        std::vector<double> profile(size_t(k_r), 0.0);
        int64_t frames = 0;
        for (const Tensor& tr : trajs)
            for (int f = 0; f < t; ++f) {
                for (int ch = 0; ch < c; ++ch) {
                    Tensor fr({h, w});
                    std::memcpy(fr.data(),
                                tr.data() + (int64_t(f) * c + ch) * h * w,
                                sizeof(double) * size_t(h) * size_t(w));
                    std::vector<double> sp = radial_spectrum(fr);
                    for (int r = 0; r < k_r; ++r)
                        profile[size_t(r)] += sp[size_t(r)];
                }
                ++frames;
            }
        std::string spec_csv = "bin,power\n";
        for (int r = 0; r < k_r; ++r)
            spec_csv += std::to_string(r) + "," +
                        num17(profile[size_t(r)] / double(frames)) + "\n";
        write_file_atomic(join(out_dir, stem + "_spectrum.csv"), spec_csv);

        // Normalized autocorrelation curve of the whole set.
        int lags = mixing_lags_default(t);
        if (lags < 1)
            throw DataError(input + ": too few frames for an autocorrelation "
                                    "curve");
        std::vector<double> cbar = autocorrelation(trajs, lags);
        std::string ac_csv = "lag,autocorr\n";
        for (size_t l = 0; l < cbar.size(); ++l)
            ac_csv += std::to_string(l) + "," + num17(cbar[l]) + "\n";
        write_file_atomic(join(out_dir, stem + "_autocorr.csv"), ac_csv);

        // Batch-mean TKE map, channels summed, H rows by W columns.
        Tensor map = tke_map_mean(trajs);
        std::string tke_csv;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int ch = 0; ch < c; ++ch)
                    acc += map[(int64_t(ch) * h + i) * w + j];
                tke_csv += (j ? "," : "") + num17(acc);
            }
            tke_csv += "\n";
        }
        write_file_atomic(join(out_dir, stem + "_tke.csv"), tke_csv);
        std::cout << "wrote spectrum/autocorr/TKE CSVs for " << input << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MeLISA: window-conditioned one-step surrogate for 2D "
                 "turbulence"};
    app.require_subcommand(1);

    std::string gen_cfg;
    CLI::App* gen = app.add_subcommand("generate",
                                       "simulate Kolmogorov-flow trajectories");
    gen->add_option("--config", gen_cfg, "key=value config file")->required();

    std::string train_cfg;
    bool flag_resume = false, flag_restart = false;
    CLI::App* tr = app.add_subcommand("train", "train the surrogate");
    tr->add_option("--config", train_cfg, "key=value config file")->required();
    tr->add_flag("--resume", flag_resume, "not supported");
    tr->add_flag("--restart", flag_restart, "not supported");

    std::string roll_cfg;
    RolloutFlags rf;
    CLI::App* ro = app.add_subcommand("rollout",
                                      "autoregressive forecasts on the test "
                                      "split");
    ro->add_option("--config", roll_cfg, "key=value config file")->required();
    ro->add_option("--checkpoint", rf.checkpoint, "checkpoint path override");
    ro->add_option("--horizon", rf.horizon, "forecast frames override");
    ro->add_option("--ensemble", rf.ensemble, "ensemble size override");
    ro->add_option("--seed", rf.seed, "base seed override");
    ro->add_option("--out", rf.out_dir, "output directory override");

    std::string eval_cfg, eval_out;
    CLI::App* ev = app.add_subcommand("evaluate",
                                      "score forecasts against the reference");
    ev->add_option("--config", eval_cfg, "key=value config file")->required();
    ev->add_option("--out", eval_out, "output directory override");

    std::string spec_cfg, spec_out;
    std::vector<std::string> spec_inputs;
    CLI::App* sp = app.add_subcommand("spectra",
                                      "plot-ready CSVs from trajectory files");
    sp->add_option("--config", spec_cfg, "key=value config file");
    sp->add_option("--out", spec_out, "output directory");
    sp->add_option("files", spec_inputs, "trajectory files")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(gen_cfg);
        if (tr->parsed())
            return cmd_train(train_cfg, flag_resume || flag_restart);
        if (ro->parsed()) return cmd_rollout(roll_cfg, rf);
        if (ev->parsed()) return cmd_evaluate(eval_cfg, eval_out);
        if (sp->parsed()) return cmd_spectra(spec_cfg, spec_out, spec_inputs);
        return 4;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}
