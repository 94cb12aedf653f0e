#include <string>

#include <CLI/CLI.hpp>

#include "omseg/commands.hpp"

namespace {

void add_common_flags(CLI::App* cmd, omseg::CommandOptions& opts, bool* seed_given) {
    cmd->add_option("--config", opts.config_path, "Experiment configuration file")->required();
    cmd->add_option("--out", opts.out_dir, "Output directory (overrides out_dir in the config)");
    cmd->add_option("--precision", opts.precision, "Numeric precision: f32 | f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--seed-override", opts.seed_override,
                    "Re-derive all pipeline seeds from this integer")
        ->each([seed_given](const std::string&) { *seed_given = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-annotation PET-CT lesion segmentation pipeline"};
    app.require_subcommand(1);

    omseg::CommandOptions opts;
    bool seed_given = false;

    CLI::App* phantom = app.add_subcommand("phantom", "Generate a synthetic cohort");
    add_common_flags(phantom, opts, &seed_given);

    CLI::App* train = app.add_subcommand("train", "Train the two annotation-specific models");
    add_common_flags(train, opts, &seed_given);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate checkpoints on the recorded test split");
    add_common_flags(eval, opts, &seed_given);

    CLI::App* overlay = app.add_subcommand("overlay", "Render prediction overlays as PPM images");
    add_common_flags(overlay, opts, &seed_given);
    overlay->add_option("--z", opts.overlay_z, "Axial plane to render (default: densest annotated)");
    overlay->add_option("--patient", opts.overlay_patient, "Restrict to one test patient");

    CLI11_PARSE(app, argc, argv);
    opts.has_seed_override = seed_given;

    if (phantom->parsed()) return omseg::cmd_phantom(opts);
    if (train->parsed()) return omseg::cmd_train(opts);
    if (eval->parsed()) return omseg::cmd_eval(opts);
    return omseg::cmd_overlay(opts);
}
