#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "f2f/commands.hpp"

namespace {

struct Cli {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    bool force = false;
};

// one flag per config key, dotted paths mirroring the JSON structure
void add_config_flags(CLI::App& app, Cli& cli) {
    app.add_option("--config", cli.config_path, "JSON config file (defaults used if absent)");
    app.add_flag("--force", cli.force, "Recompute outputs even if they already exist");
    f2f::RunConfig probe;
    for (const auto& field : f2f::config_detail::fields(probe)) {
        std::string key = field.key;
        app.add_option_function<std::string>(
               "--" + key,
               [&cli, key](const std::string& v) { cli.overrides.emplace_back(key, v); })
            ->type_name("VALUE");
    }
}

f2f::CommandContext make_context(const Cli& cli) {
    f2f::CommandContext ctx;
    if (!cli.config_path.empty()) ctx.cfg = f2f::load_config(cli.config_path);
    for (const auto& [key, value] : cli.overrides) f2f::apply_override(ctx.cfg, key, value);
    if (const char* env = std::getenv("F2F_OUTPUT_ROOT")) ctx.cfg.output_root = env;
    ctx.force = cli.force;
    ctx.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"f2f: frozen-section to FFPE translation toolkit"};
    app.require_subcommand(1);

    Cli cli;
    std::string sweep_axis;
    std::vector<double> sweep_values;

    CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic two-domain corpus");
    CLI::App* train_ldm =
        app.add_subcommand("train-ldm", "Train extractor, VAE, and denoiser (with LoRA)");
    CLI::App* train_tr =
        app.add_subcommand("train-translator", "Train the FS->FFPE embedding translator");
    CLI::App* translate =
        app.add_subcommand("translate", "Translate the FS evaluation patches");
    CLI::App* eval = app.add_subcommand("eval", "Compute MIL AUC/accuracy and CaseFD");
    CLI::App* sweep = app.add_subcommand("sweep", "Translate+eval across one axis");
    sweep->add_option("--axis", sweep_axis, "One of S, GS, alpha, lora_rank, prox")
        ->required();
    sweep->add_option("--values", sweep_values, "Axis values")->required()->delimiter(',');

    for (CLI::App* sub : {synth, train_ldm, train_tr, translate, eval, sweep})
        add_config_flags(*sub, cli);

    CLI11_PARSE(app, argc, argv);

    try {
        f2f::CommandContext ctx = make_context(cli);
        if (synth->parsed()) f2f::cmd_synth(ctx);
        if (train_ldm->parsed()) f2f::cmd_train_ldm(ctx);
        if (train_tr->parsed()) f2f::cmd_train_translator(ctx);
        if (translate->parsed()) f2f::cmd_translate(ctx);
        if (eval->parsed()) f2f::cmd_eval(ctx);
        if (sweep->parsed()) {
            auto points = f2f::cmd_sweep(ctx, sweep_axis, sweep_values);
            for (const auto& p : points)
                if (!p.ok) {
                    std::cerr << "sweep point " << p.value << " failed: " << p.error << "\n";
                    return 2;
                }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
