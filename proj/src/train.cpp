#include "waveud/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "waveud/checkpoint.hpp"

namespace waveud {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw config_error("unknown config key: " + (scope.empty() ? key : scope + "." + key));
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json mel_to_json(const signal::MelConfig& m) {
    return json{{"sample_rate", m.sample_rate}, {"fft", m.fft},   {"hop", m.hop},
                {"win", m.win},                 {"n_mels", m.n_mels}, {"fmin", m.fmin},
                {"fmax", m.fmax},               {"log_floor", m.log_floor}};
}

signal::MelConfig mel_from_json(const json& j) {
    check_keys(j, "mel", {"sample_rate", "fft", "hop", "win", "n_mels", "fmin", "fmax", "log_floor"});
    signal::MelConfig m;
    read_field(j, "sample_rate", m.sample_rate);
    read_field(j, "fft", m.fft);
    read_field(j, "hop", m.hop);
    read_field(j, "win", m.win);
    read_field(j, "n_mels", m.n_mels);
    read_field(j, "fmin", m.fmin);
    read_field(j, "fmax", m.fmax);
    read_field(j, "log_floor", m.log_floor);
    return m;
}

json disc_to_json(const WaveUNetConfig& d) {
    return json{{"levels", d.levels},
                {"base_channels", d.base_channels},
                {"channel_multipliers", d.channel_multipliers},
                {"down_strides", d.down_strides},
                {"io_kernel", d.io_kernel},
                {"block_kernel", d.block_kernel},
                {"residual_scale", d.residual_scale},
                {"lrelu_slope", d.lrelu_slope}};
}

WaveUNetConfig disc_from_json(const json& j) {
    check_keys(j, "disc",
               {"levels", "base_channels", "channel_multipliers", "down_strides", "io_kernel",
                "block_kernel", "residual_scale", "lrelu_slope"});
    WaveUNetConfig d;
    read_field(j, "levels", d.levels);
    read_field(j, "base_channels", d.base_channels);
    read_field(j, "channel_multipliers", d.channel_multipliers);
    read_field(j, "down_strides", d.down_strides);
    read_field(j, "io_kernel", d.io_kernel);
    read_field(j, "block_kernel", d.block_kernel);
    read_field(j, "residual_scale", d.residual_scale);
    read_field(j, "lrelu_slope", d.lrelu_slope);
    return d;
}

json gen_to_json(const GeneratorConfig& g) {
    return json{{"mel_bands", g.mel_bands},   {"base_channels", g.base_channels},
                {"up_strides", g.up_strides}, {"up_kernels", g.up_kernels},
                {"io_kernel", g.io_kernel},   {"res_kernel", g.res_kernel},
                {"lrelu_slope", g.lrelu_slope}};
}

GeneratorConfig gen_from_json(const json& j) {
    check_keys(j, "gen",
               {"mel_bands", "base_channels", "up_strides", "up_kernels", "io_kernel",
                "res_kernel", "lrelu_slope"});
    GeneratorConfig g;
    read_field(j, "mel_bands", g.mel_bands);
    read_field(j, "base_channels", g.base_channels);
    read_field(j, "up_strides", g.up_strides);
    read_field(j, "up_kernels", g.up_kernels);
    read_field(j, "io_kernel", g.io_kernel);
    read_field(j, "res_kernel", g.res_kernel);
    read_field(j, "lrelu_slope", g.lrelu_slope);
    return g;
}

} // namespace

void TrainConfig::validate() const {
    if (batch < 1) throw config_error("train: batch must be >= 1");
    if (segment < 1 || segment % mel.hop != 0)
        throw config_error("train: segment must be a positive multiple of the mel hop");
    if (steps < 1) throw config_error("train: steps must be >= 1");
    if (corpus_clips < 1 && data_dir.empty())
        throw config_error("train: corpus_clips must be >= 1");
    if (lr0 <= 0 || lr_decay <= 0) throw config_error("train: lr0 and lr_decay must be positive");
    disc.validate();
    gen.validate();
    if (gen.mel_bands != mel.n_mels)
        throw config_error("train: gen.mel_bands must equal mel.n_mels");
}

int TrainConfig::effective_steps_per_epoch() const {
    if (steps_per_epoch > 0) return steps_per_epoch;
    const int clips = corpus_clips > 0 ? corpus_clips : 1;
    return std::max(1, (clips + batch - 1) / batch);
}

TrainConfig parse_train_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "",
               {"lr0", "beta1", "beta2", "weight_decay", "lr_decay", "batch", "segment", "steps",
                "steps_per_epoch", "seed", "lambda_fm", "lambda_mel", "corpus_clips", "data_dir",
                "checkpoint_every", "deterministic", "mel", "disc", "gen"});
    TrainConfig cfg;
    read_field(j, "lr0", cfg.lr0);
    read_field(j, "beta1", cfg.beta1);
    read_field(j, "beta2", cfg.beta2);
    read_field(j, "weight_decay", cfg.weight_decay);
    read_field(j, "lr_decay", cfg.lr_decay);
    read_field(j, "batch", cfg.batch);
    read_field(j, "segment", cfg.segment);
    read_field(j, "steps", cfg.steps);
    read_field(j, "steps_per_epoch", cfg.steps_per_epoch);
    read_field(j, "seed", cfg.seed);
    read_field(j, "lambda_fm", cfg.lambda_fm);
    read_field(j, "lambda_mel", cfg.lambda_mel);
    read_field(j, "corpus_clips", cfg.corpus_clips);
    read_field(j, "data_dir", cfg.data_dir);
    read_field(j, "checkpoint_every", cfg.checkpoint_every);
    read_field(j, "deterministic", cfg.deterministic);
    if (j.contains("mel")) cfg.mel = mel_from_json(j.at("mel"));
    if (j.contains("disc")) cfg.disc = disc_from_json(j.at("disc"));
    if (j.contains("gen")) cfg.gen = gen_from_json(j.at("gen"));
    cfg.validate();
    return cfg;
}

std::string train_config_json(const TrainConfig& cfg) {
    json j{{"lr0", cfg.lr0},
           {"beta1", cfg.beta1},
           {"beta2", cfg.beta2},
           {"weight_decay", cfg.weight_decay},
           {"lr_decay", cfg.lr_decay},
           {"batch", cfg.batch},
           {"segment", cfg.segment},
           {"steps", cfg.steps},
           {"steps_per_epoch", cfg.steps_per_epoch},
           {"seed", cfg.seed},
           {"lambda_fm", cfg.lambda_fm},
           {"lambda_mel", cfg.lambda_mel},
           {"corpus_clips", cfg.corpus_clips},
           {"data_dir", cfg.data_dir},
           {"checkpoint_every", cfg.checkpoint_every},
           {"deterministic", cfg.deterministic},
           {"mel", mel_to_json(cfg.mel)},
           {"disc", disc_to_json(cfg.disc)},
           {"gen", gen_to_json(cfg.gen)}};
    return j.dump();
}

bool StepMetrics::all_finite() const {
    return std::isfinite(d_loss) && std::isfinite(g_adv) && std::isfinite(g_fm) &&
           std::isfinite(g_mel) && std::isfinite(g_total) && std::isfinite(lr);
}

std::string metrics_json_line(const StepMetrics& m) {
    json j{{"step", m.step},   {"d_loss", m.d_loss},   {"g_adv", m.g_adv},
           {"g_fm", m.g_fm},   {"g_mel", m.g_mel},      {"g_total", m.g_total},
           {"lr", m.lr},       {"wall_ms", m.wall_ms}};
    return j.dump();
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

std::vector<signal::AudioClip> load_corpus(const TrainConfig& cfg) {
    if (cfg.data_dir.empty()) {
        Rng base(cfg.seed);
        return signal::synth_corpus(cfg.corpus_clips, base.fork(0xc0).next_u64());
    }
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(cfg.data_dir))
        if (entry.path().extension() == ".wav") paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw config_error("train: no .wav files in " + cfg.data_dir);
    std::vector<signal::AudioClip> corpus;
    for (const auto& p : paths) corpus.push_back(signal::load_wav(p, cfg.mel.sample_rate));
    return corpus;
}

} // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      analyzer_(cfg.mel),
      opt_g_(cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay),
      opt_d_(cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay),
      data_rng_(0) {
    cfg_.validate();
    corpus_ = load_corpus(cfg_);
    cfg_.corpus_clips = static_cast<int>(corpus_.size());

    Rng base(cfg_.seed);
    Rng gen_rng = base.fork(1);
    Rng disc_rng = base.fork(2);
    gen_ = std::make_unique<MelGenerator<float>>(cfg_.gen, gen_rng);
    disc_ = std::make_unique<WaveUNetDiscriminator<float>>(cfg_.disc, disc_rng);
    data_rng_ = base.fork(3);

    opt_g_.attach(gen_->parameters());
    opt_d_.attach(disc_->parameters());
}

Batch Trainer::sample_batch() {
    const int frames = cfg_.segment / cfg_.mel.hop + 1;
    Batch batch;
    batch.wave = make_tensor<float>(cfg_.batch, 1, cfg_.segment);
    batch.mel = make_tensor<float>(cfg_.batch, cfg_.mel.n_mels, frames);
    for (int i = 0; i < cfg_.batch; ++i) {
        const auto clip_index = data_rng_.uniform_int(0, static_cast<std::int64_t>(corpus_.size()) - 1);
        const auto pair =
            signal::sample_segment(corpus_[clip_index], data_rng_, cfg_.mel, cfg_.segment);
        std::copy_n(pair.wave->data(), cfg_.segment,
                    batch.wave->data() + static_cast<std::size_t>(i) * cfg_.segment);
        std::copy(pair.mel.values.begin(), pair.mel.values.end(),
                  batch.mel->data() + static_cast<std::size_t>(i) * cfg_.mel.n_mels * frames);
    }
    return batch;
}

TensorPtr<float> Trainer::generate_fakes(Tape<float>& tape_g, const Batch& batch) {
    auto fake = gen_->forward(&tape_g, batch.mel);
    return trim_time(&tape_g, fake, cfg_.segment);
}

double Trainer::d_substep(const Batch& batch, const TensorPtr<float>& fakes_detached) {
    Tape<float> tape_d;
    auto real_out = disc_->forward(&tape_d, batch.wave);
    auto fake_out = disc_->forward(&tape_d, fakes_detached);
    auto loss = adv_loss_d(&tape_d, real_out.score_map, fake_out.score_map);
    opt_d_.zero_grad();
    tape_d.backward(loss);
    opt_d_.step(current_lr());
    return static_cast<double>(scalar_value(loss));
}

void Trainer::g_substep(Tape<float>& tape_g, const Batch& batch, const TensorPtr<float>& fakes,
                        StepMetrics& out) {
    // Freeze D so its parameters collect no gradient from the generator loss;
    // gradient still flows through its activations into G.
    disc_->set_requires_grad(false);
    auto fake_out = disc_->forward(&tape_g, fakes);
    auto real_out = disc_->forward(nullptr, batch.wave);

    auto g_adv = adv_loss_g(&tape_g, fake_out.score_map);
    auto g_fm = feature_matching(&tape_g, real_out.features, fake_out.features);
    auto g_mel = mel_loss(&tape_g, analyzer_, batch.wave, fakes);
    auto total = add(&tape_g, g_adv,
                     add(&tape_g, mul_scalar(&tape_g, g_fm, cfg_.lambda_fm),
                         mul_scalar(&tape_g, g_mel, cfg_.lambda_mel)));
    opt_g_.zero_grad();
    tape_g.backward(total);
    disc_->set_requires_grad(true);
    opt_g_.step(current_lr());

    out.g_adv = static_cast<double>(scalar_value(g_adv));
    out.g_fm = static_cast<double>(scalar_value(g_fm));
    out.g_mel = static_cast<double>(scalar_value(g_mel));
    out.g_total = static_cast<double>(scalar_value(total));
}

StepMetrics Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    StepMetrics m;
    m.lr = current_lr();

    Batch batch = sample_batch();
    Tape<float> tape_g;
    auto fakes = generate_fakes(tape_g, batch);
    m.d_loss = d_substep(batch, detach(fakes));
    g_substep(tape_g, batch, fakes, m);

    ++step_index_;
    m.step = step_index_;
    monitor_.observe(m.d_loss, m.g_adv);
    const auto t1 = std::chrono::steady_clock::now();
    m.wall_ms = cfg_.deterministic
                    ? 0.0
                    : std::chrono::duration<double, std::milli>(t1 - t0).count();
    return m;
}

void Trainer::save_checkpoint(const std::string& path) const {
    json meta;
    meta["config"] = json::parse(train_config_json(cfg_));
    meta["step"] = step_index_;
    meta["epoch"] = epoch();
    meta["opt_g_steps"] = opt_g_.step_count();
    meta["opt_d_steps"] = opt_d_.step_count();
    const auto state = data_rng_.state();
    meta["rng"] = {{"seed", data_rng_.seed()},
                   {"state", {state[0], state[1], state[2], state[3]}}};

    BlobWriter writer(meta.dump());
    for (const auto& p : gen_->parameters()) writer.add_tensor("gen." + p.name, *p.tensor);
    for (const auto& p : disc_->parameters()) writer.add_tensor("disc." + p.name, *p.tensor);
    auto add_opt_state = [&](const char* prefix, const AdamW<float>& opt) {
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& t = *params[i].tensor;
            writer.add(std::string(prefix) + ".m." + params[i].name, t.batch(), t.channels(),
                       t.time(), opt.first_moments()[i].data(), opt.first_moments()[i].size());
            writer.add(std::string(prefix) + ".v." + params[i].name, t.batch(), t.channels(),
                       t.time(), opt.second_moments()[i].data(), opt.second_moments()[i].size());
        }
    };
    add_opt_state("opt_g", opt_g_);
    add_opt_state("opt_d", opt_d_);
    writer.write(path);
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& checkpoint_path) {
    BlobReader reader(checkpoint_path);
    json meta = json::parse(reader.meta_json());
    TrainConfig cfg = parse_train_config(meta.at("config").dump());
    auto trainer = std::make_unique<Trainer>(cfg);

    for (const auto& p : trainer->gen_->parameters())
        reader.load_into("gen." + p.name, *p.tensor);
    for (const auto& p : trainer->disc_->parameters())
        reader.load_into("disc." + p.name, *p.tensor);

    auto load_opt_state = [&](const char* prefix, AdamW<float>& opt, std::int64_t steps) {
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& me = reader.get(std::string(prefix) + ".m." + params[i].name);
            const auto& ve = reader.get(std::string(prefix) + ".v." + params[i].name);
            if (me.data.size() != opt.first_moments()[i].size() ||
                ve.data.size() != opt.second_moments()[i].size())
                throw shape_error("checkpoint: optimizer state size mismatch for " +
                                  params[i].name);
            opt.first_moments()[i] = me.data;
            opt.second_moments()[i] = ve.data;
        }
        opt.set_step_count(steps);
    };
    load_opt_state("opt_g", trainer->opt_g_, meta.at("opt_g_steps").get<std::int64_t>());
    load_opt_state("opt_d", trainer->opt_d_, meta.at("opt_d_steps").get<std::int64_t>());

    trainer->step_index_ = meta.at("step").get<std::int64_t>();
    const auto& rng = meta.at("rng");
    std::array<std::uint64_t, 4> state{};
    for (int i = 0; i < 4; ++i) state[i] = rng.at("state").at(i).get<std::uint64_t>();
    trainer->data_rng_.set_state(state, rng.at("seed").get<std::uint64_t>());
    return trainer;
}

TrainResult run_training(const TrainConfig& cfg_in, const std::string& out_dir,
                         const std::function<void(const StepMetrics&)>& on_step) {
    TrainConfig cfg = cfg_in;
    if (const char* env = std::getenv("WAVEUD_DETERMINISTIC"); env && env[0] == '1')
        cfg.deterministic = true;

    Trainer trainer(cfg);
    TrainResult result;
    std::ofstream metrics_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream cfg_file((fs::path(out_dir) / "config.json").string(), std::ios::trunc);
        cfg_file << train_config_json(trainer.config()) << "\n";
        result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
        metrics_file.open(result.metrics_path, std::ios::trunc);
        if (!metrics_file) throw io_error("cannot write " + result.metrics_path);
    }

    for (int i = 0; i < cfg.steps; ++i) {
        StepMetrics m = trainer.step();
        if (metrics_file.is_open()) metrics_file << metrics_json_line(m) << "\n";
        if (on_step) on_step(m);
        result.metrics.push_back(m);
        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            trainer.step_index() % cfg.checkpoint_every == 0)
            trainer.save_checkpoint(
                (fs::path(out_dir) / ("checkpoint_" + std::to_string(trainer.step_index()) + ".bin"))
                    .string());
    }
    if (!out_dir.empty()) {
        result.checkpoint_path = (fs::path(out_dir) / "checkpoint_final.bin").string();
        trainer.save_checkpoint(result.checkpoint_path);
    }
    result.saturation_tripped = trainer.monitor().tripped();
    return result;
}

} // namespace waveud
