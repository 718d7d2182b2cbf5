// Command-line front end: train / bench / params / gradcheck / synth /
// make-corpus.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "waveud/bench.hpp"
#include "waveud/checkpoint.hpp"
#include "waveud/ensemble.hpp"
#include "waveud/gradcheck.hpp"
#include "waveud/train.hpp"

namespace fs = std::filesystem;
using namespace waveud;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrainConfig config_from_path(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    return parse_train_config(read_file(path));
}

int cmd_params(const std::string& model, const std::string& config_path) {
    TrainConfig cfg = config_from_path(config_path);
    std::int64_t count = 0;
    if (model == "waveunet") {
        Rng rng(0);
        count = WaveUNetDiscriminator<float>(cfg.disc, rng).param_count();
    } else if (model == "ensemble") {
        Rng rng(0);
        count = HifiGanEnsemble(EnsembleConfig{}, rng).param_count();
    } else if (model == "generator") {
        Rng rng(0);
        count = MelGenerator<float>(cfg.gen, rng).param_count();
    } else {
        throw usage_error("unknown model '" + model + "' (waveunet, ensemble, generator)");
    }
    std::printf("%s params: %lld (%.2fM)\n", model.c_str(), static_cast<long long>(count),
                static_cast<double>(count) / 1e6);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    auto cases = run_gradcheck(seed);
    for (const auto& c : cases)
        std::printf("%-28s max rel err %.3e\n", c.name.c_str(), c.max_rel_err);
    const double max_err = gradcheck_max_err(cases);
    std::printf("overall max rel err %.3e (tolerance 1e-4)\n", max_err);
    return max_err < 1e-4 ? 0 : 1;
}

int cmd_bench(int batch, int segment, int warmup, int iters, std::uint64_t seed,
              const std::string& config_path) {
    TrainConfig cfg = config_from_path(config_path);
    Rng rng(0);
    const std::int64_t wu_params = WaveUNetDiscriminator<float>(cfg.disc, rng).param_count();
    const std::int64_t en_params = HifiGanEnsemble(EnsembleConfig{}, rng).param_count();
    std::printf("waveunet params: %lld (%.2fM)\n", static_cast<long long>(wu_params),
                wu_params / 1e6);
    std::printf("ensemble params: %lld (%.2fM)\n", static_cast<long long>(en_params),
                en_params / 1e6);
    std::printf("param ratio (ensemble/waveunet): %.2f\n",
                static_cast<double>(en_params) / static_cast<double>(wu_params));

    std::printf("timing forwards (batch %d, segment %d, warmup %d, iters %d)...\n", batch, segment,
                warmup, iters);
    std::fflush(stdout);
    const BenchResult wu = benchmark_waveunet(cfg.disc, batch, segment, warmup, iters, seed);
    std::printf("waveunet (real+fake)/batch: %.4f s\n", wu.seconds_per_batch);
    std::fflush(stdout);
    const BenchResult en = benchmark_ensemble(EnsembleConfig{}, batch, segment, warmup, iters, seed);
    std::printf("ensemble (real+fake)/batch: %.4f s\n", en.seconds_per_batch);
    std::printf("speed ratio (ensemble/waveunet): %.2f\n",
                en.seconds_per_batch / wu.seconds_per_batch);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    TrainConfig cfg = config_from_path(config_path);
    int last_print = 0;
    TrainResult result = run_training(cfg, out_dir, [&](const StepMetrics& m) {
        if (m.step - last_print >= 100 || m.step == 1 || m.step == cfg.steps) {
            std::printf("step %6lld  d %.4f  g_adv %.4f  g_fm %.4f  g_mel %.4f  lr %.3e\n",
                        static_cast<long long>(m.step), m.d_loss, m.g_adv, m.g_fm, m.g_mel, m.lr);
            std::fflush(stdout);
            last_print = static_cast<int>(m.step);
        }
    });
    if (!result.checkpoint_path.empty())
        std::printf("checkpoint: %s\nmetrics: %s\n", result.checkpoint_path.c_str(),
                    result.metrics_path.c_str());
    if (result.saturation_tripped) {
        std::printf("warning: saturation monitor tripped\n");
        return 2;
    }
    return 0;
}

int cmd_synth(const std::string& checkpoint_path, const std::string& in_wav,
              const std::string& out_wav) {
    BlobReader reader(checkpoint_path);
    const nlohmann::json meta = nlohmann::json::parse(reader.meta_json());
    TrainConfig cfg = parse_train_config(meta.at("config").dump());

    Rng rng(0);
    MelGenerator<float> gen(cfg.gen, rng);
    for (const auto& p : gen.parameters()) reader.load_into("gen." + p.name, *p.tensor);
    gen.set_requires_grad(false);

    const signal::AudioClip clip = signal::load_wav(in_wav, cfg.mel.sample_rate);
    const signal::MelSpectrogram mel = signal::mel_of(clip.samples, cfg.mel);
    auto mel_in = mel_batch({&mel});

    auto wave = gen.forward(nullptr, mel_in);
    signal::AudioClip out;
    out.sample_rate = cfg.mel.sample_rate;
    const int n = std::min<int>(wave->time(), static_cast<int>(clip.samples.size()));
    out.samples.assign(wave->data(), wave->data() + n);
    signal::save_wav(out_wav, out);
    std::printf("wrote %s (%d samples)\n", out_wav.c_str(), n);
    return 0;
}

int cmd_make_corpus(int n, std::uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto corpus = signal::synth_corpus(n, seed);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%03zu.wav", i);
        signal::save_wav((fs::path(out_dir) / name).string(), corpus[i]);
    }
    std::printf("wrote %zu clips to %s\n", corpus.size(), out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wave-U-Net discriminator lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs/default", model = "waveunet";
    std::string checkpoint_path, in_wav, out_wav;
    int batch = 16, segment = 8192, warmup = 1, iters = 3, n_clips = 10;
    std::uint64_t seed = 42;

    auto* train = app.add_subcommand("train", "run adversarial training from a JSON config");
    train->add_option("--config", config_path, "train config JSON")->required();
    train->add_option("--out", out_dir, "output directory for metrics and checkpoints");

    auto* bench = app.add_subcommand("bench", "compare discriminator size and forward speed");
    bench->add_option("--config", config_path, "train config JSON (for the waveunet topology)");
    bench->add_option("--batch", batch);
    bench->add_option("--segment", segment);
    bench->add_option("--warmup", warmup);
    bench->add_option("--iters", iters);
    bench->add_option("--seed", seed);

    auto* params = app.add_subcommand("params", "print a model's trainable parameter count");
    params->add_option("--model", model, "waveunet | ensemble | generator");
    params->add_option("--config", config_path, "train config JSON");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--seed", seed);

    auto* synth = app.add_subcommand("synth", "vocode a wav through a trained generator");
    synth->add_option("--checkpoint", checkpoint_path)->required();
    synth->add_option("--input", in_wav)->required();
    synth->add_option("--output", out_wav)->required();

    auto* corpus = app.add_subcommand("make-corpus", "write a synthetic wav corpus");
    corpus->add_option("--n", n_clips);
    corpus->add_option("--seed", seed);
    corpus->add_option("--out", out_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (bench->parsed()) return cmd_bench(batch, segment, warmup, iters, seed, config_path);
        if (params->parsed()) return cmd_params(model, config_path);
        if (gradcheck->parsed()) return cmd_gradcheck(seed);
        if (synth->parsed()) return cmd_synth(checkpoint_path, in_wav, out_wav);
        if (corpus->parsed()) return cmd_make_corpus(n_clips, seed, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
