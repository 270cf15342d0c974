#pragma once

#include <string>

#include "buildswitch/featurizer.hpp"
#include "buildswitch/harness.hpp"
#include "buildswitch/pipeline.hpp"
#include "buildswitch/stratnet.hpp"

namespace bsw {

/// Network dimensions that are not fixed by the content library.
struct ArchSettings {
    int hidden = 128;
    int embed_dim = 8;
    int proj_dim = 8;
    int aux_hidden = 64;
    int aux_layers = 3;
    std::string aux_activation = "relu";
};

/// Everything a run needs besides the content file and the seed.
struct RunConfig {
    std::string content;  // path; empty for the built-in content
    ArchSettings arch;
    feat::FeaturizerConfig featurizer;
    net::SelectionPolicy selection;
    pipe::OffPolicyConfig offpolicy;
    pipe::RefineConfig refine;
    eval::EvalConfig eval;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

sim::Content content_for(const RunConfig& cfg);
net::ArchConfig arch_config(const RunConfig& cfg, const sim::Content& content);
pipe::LossConfig loss_config(const RunConfig& cfg);
pipe::OnPolicySetup onpolicy_setup(const RunConfig& cfg);

std::string to_json(const net::ArchConfig& a);
net::ArchConfig arch_from_json(const std::string& text);
std::string to_json(const feat::FeaturizerConfig& f);
feat::FeaturizerConfig featurizer_from_json(const std::string& text);

}  // namespace bsw
