#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "waveud/generator.hpp"
#include "waveud/losses.hpp"
#include "waveud/optimizer.hpp"
#include "waveud/signal.hpp"
#include "waveud/waveunet.hpp"

namespace waveud {

// Training recipe. Optimizer/schedule defaults are the reference recipe;
// batch/segment defaults match it, while desk-scale runs override them in
// the config file.
struct TrainConfig {
    double lr0 = 2e-4;
    double beta1 = 0.8;
    double beta2 = 0.99;
    double weight_decay = 0.01;
    double lr_decay = 0.999;
    int batch = 16;
    int segment = 8192;
    int steps = 2000;
    int steps_per_epoch = 0; // 0: ceil(corpus size / batch)
    std::uint64_t seed = 1234;
    double lambda_fm = 2.0;
    double lambda_mel = 45.0;
    int corpus_clips = 10;
    std::string data_dir;     // when set, train on *.wav files found there
    int checkpoint_every = 0; // additional periodic saves; the final state is always saved
    bool deterministic = false; // report wall_ms as 0 so logs are bit-comparable
    signal::MelConfig mel;
    WaveUNetConfig disc;
    GeneratorConfig gen;

    void validate() const;
    int effective_steps_per_epoch() const;
};

// JSON round trip for config files and checkpoint headers. Unknown keys are
// rejected with a diagnostic naming the key.
TrainConfig parse_train_config(const std::string& json_text);
std::string train_config_json(const TrainConfig& cfg);

struct StepMetrics {
    std::int64_t step = 0;
    double d_loss = 0, g_adv = 0, g_fm = 0, g_mel = 0, g_total = 0;
    double lr = 0;
    double wall_ms = 0;

    bool all_finite() const;
};

std::string metrics_json_line(const StepMetrics& m);

// Watches for the failure signature of a saturated discriminator: d_loss
// pinned under 1e-4 while g_adv exceeds 0.9 for 200 consecutive steps.
class SaturationMonitor {
public:
    void observe(double d_loss, double g_adv) {
        if (d_loss < 1e-4 && g_adv > 0.9)
            ++run_;
        else
            run_ = 0;
        if (run_ >= 200) tripped_ = true;
    }
    bool tripped() const { return tripped_; }

private:
    int run_ = 0;
    bool tripped_ = false;
};

struct Batch {
    TensorPtr<float> wave; // (batch, 1, segment)
    TensorPtr<float> mel;  // (batch, bands, frames)
};

// One generator, one discriminator, two AdamW instances, a data stream and a
// metrics trail. Single-threaded; two runs from the same config produce
// bit-identical checkpoints and metrics.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    // Resume from a checkpoint written by save_checkpoint.
    static std::unique_ptr<Trainer> resume(const std::string& checkpoint_path);

    Batch sample_batch();
    // Order per step: fakes once through G, discriminator update with the
    // fakes detached, then a generator update through a fresh discriminator
    // forward with the discriminator frozen.
    StepMetrics step();

    // Split sub-steps, exposed so tests can assert the detachment contract.
    TensorPtr<float> generate_fakes(Tape<float>& tape_g, const Batch& batch);
    double d_substep(const Batch& batch, const TensorPtr<float>& fakes_detached);
    void g_substep(Tape<float>& tape_g, const Batch& batch, const TensorPtr<float>& fakes,
                   StepMetrics& out);

    void save_checkpoint(const std::string& path) const;

    std::int64_t step_index() const { return step_index_; }
    std::int64_t epoch() const { return step_index_ / cfg_.effective_steps_per_epoch(); }
    double current_lr() const { return lr_at(cfg_.lr0, cfg_.lr_decay, epoch()); }

    MelGenerator<float>& generator() { return *gen_; }
    WaveUNetDiscriminator<float>& discriminator() { return *disc_; }
    AdamW<float>& opt_g() { return opt_g_; }
    AdamW<float>& opt_d() { return opt_d_; }
    const TrainConfig& config() const { return cfg_; }
    const SaturationMonitor& monitor() const { return monitor_; }

private:
    TrainConfig cfg_;
    std::vector<signal::AudioClip> corpus_;
    std::unique_ptr<MelGenerator<float>> gen_;
    std::unique_ptr<WaveUNetDiscriminator<float>> disc_;
    MelAnalyzer<float> analyzer_;
    AdamW<float> opt_g_, opt_d_;
    Rng data_rng_;
    std::int64_t step_index_ = 0;
    SaturationMonitor monitor_;
};

struct TrainResult {
    std::vector<StepMetrics> metrics;
    bool saturation_tripped = false;
    std::string checkpoint_path;
    std::string metrics_path;
};

// Full run: builds a Trainer, executes cfg.steps steps, streams metrics to
// out_dir/metrics.jsonl and writes out_dir/checkpoint_final.bin (when
// out_dir is non-empty). WAVEUD_DETERMINISTIC=1 in the environment forces
// deterministic mode. on_step, when given, observes every record.
TrainResult run_training(const TrainConfig& cfg, const std::string& out_dir = "",
                         const std::function<void(const StepMetrics&)>& on_step = nullptr);

} // namespace waveud
