#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "buildswitch/autograd.hpp"
#include "buildswitch/content.hpp"
#include "buildswitch/featurizer.hpp"
#include "buildswitch/game.hpp"

namespace bsw::net {

enum class Activation : std::uint8_t { Relu, Tanh };

struct ArchConfig {
    int hidden = 128;  // LSTM cells
    int embed_dim = 8;
    int proj_dim = 8;
    int aux_hidden = 64;
    int aux_layers = 3;
    Activation aux_activation = Activation::Relu;
    // Vocabulary sizes, all taken from the content library.
    int num_actions = 0;
    int num_unit_types = 0;
    int num_upgrades = 0;
    int num_build_orders = 0;
    int num_races = 0;
    int num_maps = 0;

    int input_size() const;
    bool operator==(const ArchConfig&) const = default;
};

/// Fills the vocabulary fields from the content library.
ArchConfig arch_for(const sim::Content& content, int hidden = 128, int aux_hidden = 64);
void validate(const ArchConfig& arch);

struct ModelParams {
    ArchConfig arch;
    ad::Parameter emb_bo, emb_race, emb_map;
    ad::Parameter proj_res_W, proj_res_b;
    ad::Parameter proj_upg_W, proj_upg_b;
    ad::Parameter proj_rsch_W, proj_rsch_b;
    ad::Parameter lstm_W, lstm_U, lstm_b;
    ad::Parameter q_W, q_b;
    std::vector<ad::Parameter> aux_W, aux_b;  // aux_layers hidden layers, then the output layer

    /// Every parameter in a fixed order (the checkpoint payload order).
    std::vector<ad::Parameter*> list();
    std::vector<const ad::Parameter*> list() const;
    std::size_t num_scalars() const;
    bool all_finite() const;
};

/// Uniform(+-sqrt(6 / fan_in)) weights, zero biases except the forget-gate
/// block of the LSTM bias, which starts at 1.
ModelParams init_model(const ArchConfig& arch, std::uint64_t seed);
/// All parameters zero (useful as a reference point).
ModelParams zero_model(const ArchConfig& arch);

/// FNV-1a over the raw bytes of every parameter value.
std::uint64_t params_hash(const ModelParams& params);

/// Graph-building form: records one step on `tape`.
struct StepVars {
    ad::Var q;    // A sigmoid outputs
    ad::Var aux;  // U predicted normalized enemy counts
    ad::Var h;
    ad::Var c;
};
StepVars encode_step(ad::Tape& tape, ModelParams& params, const feat::FeatureFrame& frame, ad::Var h, ad::Var c);

struct Carry {
    std::vector<double> h;
    std::vector<double> c;
    bool operator==(const Carry&) const = default;
};
Carry zero_carry(const ArchConfig& arch);

struct StepOutput {
    std::vector<double> q;
    std::vector<double> aux_pred;
    Carry carry;
};

/// Inference form: no gradients, carry in and out.
StepOutput encode_step(const ModelParams& params, const feat::FeatureFrame& frame, const Carry& carry);

struct SelectionPolicy {
    double margin = 0.01;
    double warmup_minutes = 6.0;
    bool rush_override = true;
    int rush_threshold = 1;  // visible enemy combat units that count as a rush
};

/// Copy of q with every action not specialized against `enemy_faction` set
/// to -infinity.
std::vector<double> mask_q(const std::vector<double>& q, int enemy_faction, const sim::Content& content);

/// Returns the action to play. `current_action` must be valid under the mask.
int select_action(const std::vector<double>& masked_q, int current_action, double clock_minutes,
                  const SelectionPolicy& policy, bool rush);

/// Build-order form of select_action.
int select_build_order(const std::vector<double>& masked_q, int current_bo, int enemy_faction, double clock_minutes,
                       const SelectionPolicy& policy, bool rush, const sim::Content& content);

bool rush_detected(const sim::RawObservation& obs, const sim::Content& content, const SelectionPolicy& policy = {});

/// Runs the model alongside a game: keeps the recurrent carry, the enemy
/// memory and the rush latch, and proposes build orders.
class Controller {
public:
    Controller(const ModelParams& params, const sim::Content& content, feat::FeaturizerConfig fcfg,
               SelectionPolicy policy);

    /// Feeds one observation. Returns the model output for this tick.
    const StepOutput& observe(const sim::RawObservation& obs);
    /// Greedy decision for the last observed tick.
    int choose_build_order(const sim::RawObservation& obs) const;

    const StepOutput& last() const { return out_; }
    const feat::MemoryState& memory() const { return mem_; }
    const feat::FeatureFrame& last_frame() const { return frame_; }
    bool rush_seen() const { return rush_; }

private:
    const ModelParams* params_;
    const sim::Content* content_;
    feat::FeaturizerConfig fcfg_;
    SelectionPolicy policy_;
    feat::MemoryState mem_;
    feat::FeatureFrame frame_;
    StepOutput out_;
    bool rush_ = false;
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

}  // namespace bsw::net
