#include "buildswitch/config.hpp"

#include "buildswitch/error.hpp"
#include "buildswitch/io.hpp"
#include "json.hpp"

namespace bsw::feat {
NLOHMANN_JSON_SERIALIZE_ENUM(EnemyMode, {{EnemyMode::Visible, "visible"}, {EnemyMode::Memory, "memory"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FeaturizerConfig, mode, count_scale, resource_scale, resource_offset,
                                                time_scale)
}  // namespace bsw::feat

namespace bsw::net {
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::Relu, "relu"}, {Activation::Tanh, "tanh"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ArchConfig, hidden, embed_dim, proj_dim, aux_hidden, aux_layers,
                                                aux_activation, num_actions, num_unit_types, num_upgrades,
                                                num_build_orders, num_races, num_maps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectionPolicy, margin, warmup_minutes, rush_override, rush_threshold)
}  // namespace bsw::net

namespace bsw::pipe {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OffPolicyConfig, games, interval_menu, series_length, epochs,
                                                batch_games, lr, bptt, aux_scale, aux_delta, train_on_opening,
                                                validation_fraction, eval_every, workers)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RefineConfig, updates, batch_games, lr, hold_min_minutes,
                                                hold_max_minutes, interval_menu, workers)
}  // namespace bsw::pipe

namespace bsw::eval {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, opponents, maps, games_per_cell, workers)
}  // namespace bsw::eval

namespace bsw {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ArchSettings, hidden, embed_dim, proj_dim, aux_hidden, aux_layers,
                                                aux_activation)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, content, arch, featurizer, selection, offpolicy, refine,
                                                eval)

namespace {

template <typename T>
T parse_as(const std::string& text, const char* what) {
    try {
        return nlohmann::json::parse(text).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) { return nlohmann::json(cfg).dump(1) + "\n"; }

RunConfig run_config_from_json(const std::string& text) {
    auto cfg = parse_as<RunConfig>(text, "run config");
    net::activation_from_string(cfg.arch.aux_activation);  // rejects unknown names early
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_file(path)); }

void save_run_config(const RunConfig& cfg, const std::string& path) { write_file(path, run_config_to_json(cfg)); }

sim::Content content_for(const RunConfig& cfg) {
    sim::Content c = cfg.content.empty() ? sim::builtin_content() : sim::load_content(cfg.content);
    sim::validate(c);
    return c;
}

net::ArchConfig arch_config(const RunConfig& cfg, const sim::Content& content) {
    net::ArchConfig a = net::arch_for(content, cfg.arch.hidden, cfg.arch.aux_hidden);
    a.embed_dim = cfg.arch.embed_dim;
    a.proj_dim = cfg.arch.proj_dim;
    a.aux_layers = cfg.arch.aux_layers;
    a.aux_activation = net::activation_from_string(cfg.arch.aux_activation);
    net::validate(a);
    return a;
}

pipe::LossConfig loss_config(const RunConfig& cfg) {
    return {cfg.offpolicy.bptt, cfg.offpolicy.aux_scale, cfg.offpolicy.aux_delta};
}

pipe::OnPolicySetup onpolicy_setup(const RunConfig& cfg) { return {cfg.featurizer, cfg.selection}; }

std::string to_json(const net::ArchConfig& a) { return nlohmann::json(a).dump(); }
net::ArchConfig arch_from_json(const std::string& text) { return parse_as<net::ArchConfig>(text, "arch config"); }
std::string to_json(const feat::FeaturizerConfig& f) { return nlohmann::json(f).dump(); }
feat::FeaturizerConfig featurizer_from_json(const std::string& text) {
    return parse_as<feat::FeaturizerConfig>(text, "featurizer config");
}

}  // namespace bsw
