#include "buildswitch/stratnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "buildswitch/error.hpp"
#include "buildswitch/rng.hpp"

namespace bsw::net {

using ad::Array;
using ad::Parameter;
using ad::Tape;
using ad::Var;

int ArchConfig::input_size() const {
    // ally + enemy counts, time, three projections, three embeddings
    return 2 * num_unit_types + 1 + 3 * proj_dim + 3 * embed_dim;
}

ArchConfig arch_for(const sim::Content& content, int hidden, int aux_hidden) {
    ArchConfig a;
    a.hidden = hidden;
    a.aux_hidden = aux_hidden;
    a.num_actions = static_cast<int>(content.actions().size());
    a.num_unit_types = static_cast<int>(content.units.size());
    a.num_upgrades = static_cast<int>(content.upgrades.size());
    a.num_build_orders = static_cast<int>(content.build_orders.size());
    a.num_races = static_cast<int>(content.factions.size());
    a.num_maps = static_cast<int>(content.maps.size());
    return a;
}

void validate(const ArchConfig& a) {
    expect(a.hidden >= 1 && a.embed_dim >= 1 && a.proj_dim >= 1 && a.aux_hidden >= 1 && a.aux_layers >= 1,
           "ArchConfig: every dimension must be at least 1");
    expect(a.num_actions >= 1 && a.num_unit_types >= 1 && a.num_upgrades >= 1 && a.num_build_orders >= 1 &&
               a.num_races >= 1 && a.num_maps >= 1,
           "ArchConfig: vocabulary sizes must be at least 1");
}

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Parameter matrix(std::string name, int rows, int cols) { return Parameter(std::move(name), Array({sz(rows), sz(cols)})); }
Parameter vector(std::string name, int n) { return Parameter(std::move(name), Array({sz(n)})); }

ModelParams shaped(const ArchConfig& a) {
    validate(a);
    ModelParams p;
    p.arch = a;
    p.emb_bo = matrix("emb_bo", a.num_build_orders, a.embed_dim);
    p.emb_race = matrix("emb_race", a.num_races, a.embed_dim);
    p.emb_map = matrix("emb_map", a.num_maps, a.embed_dim);
    p.proj_res_W = matrix("proj_res_W", a.proj_dim, 4);
    p.proj_res_b = vector("proj_res_b", a.proj_dim);
    p.proj_upg_W = matrix("proj_upg_W", a.proj_dim, a.num_upgrades);
    p.proj_upg_b = vector("proj_upg_b", a.proj_dim);
    p.proj_rsch_W = matrix("proj_rsch_W", a.proj_dim, a.num_upgrades);
    p.proj_rsch_b = vector("proj_rsch_b", a.proj_dim);
    p.lstm_W = matrix("lstm_W", 4 * a.hidden, a.input_size());
    p.lstm_U = matrix("lstm_U", 4 * a.hidden, a.hidden);
    p.lstm_b = vector("lstm_b", 4 * a.hidden);
    p.q_W = matrix("q_W", a.num_actions, a.hidden);
    p.q_b = vector("q_b", a.num_actions);
    int in = a.hidden;
    for (int l = 0; l < a.aux_layers; ++l) {
        p.aux_W.push_back(matrix("aux_W" + std::to_string(l), a.aux_hidden, in));
        p.aux_b.push_back(vector("aux_b" + std::to_string(l), a.aux_hidden));
        in = a.aux_hidden;
    }
    p.aux_W.push_back(matrix("aux_W" + std::to_string(a.aux_layers), a.num_unit_types, in));
    p.aux_b.push_back(vector("aux_b" + std::to_string(a.aux_layers), a.num_unit_types));
    return p;
}

}  // namespace

std::vector<Parameter*> ModelParams::list() {
    std::vector<Parameter*> out{&emb_bo,     &emb_race,   &emb_map,     &proj_res_W, &proj_res_b,
                                &proj_upg_W, &proj_upg_b, &proj_rsch_W, &proj_rsch_b, &lstm_W,
                                &lstm_U,     &lstm_b,     &q_W,         &q_b};
    for (std::size_t l = 0; l < aux_W.size(); ++l) {
        out.push_back(&aux_W[l]);
        out.push_back(&aux_b[l]);
    }
    return out;
}

std::vector<const Parameter*> ModelParams::list() const {
    auto mut = const_cast<ModelParams*>(this)->list();
    return {mut.begin(), mut.end()};
}

std::size_t ModelParams::num_scalars() const {
    std::size_t n = 0;
    for (const auto* p : list()) n += p->value.size();
    return n;
}

bool ModelParams::all_finite() const {
    const auto ps = list();
    return std::all_of(ps.begin(), ps.end(), [](const Parameter* p) { return p->value.all_finite(); });
}

ModelParams zero_model(const ArchConfig& arch) { return shaped(arch); }

ModelParams init_model(const ArchConfig& arch, std::uint64_t seed) {
    ModelParams p = shaped(arch);
    Rng rng(derive_seed(seed, 0x1a17));
    for (Parameter* prm : p.list()) {
        if (prm->value.rank() != 2) continue;  // biases stay zero
        const double bound = std::sqrt(6.0 / static_cast<double>(prm->value.cols()));
        for (double& w : prm->value.values()) w = rng.uniform(-bound, bound);
    }
    const std::size_t H = sz(arch.hidden);
    for (std::size_t i = H; i < 2 * H; ++i) p.lstm_b.value[i] = 1.0;
    for (Parameter* prm : p.list()) prm->grad = Array::zeros_like(prm->value);
    return p;
}

std::uint64_t params_hash(const ModelParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Parameter* p : params.list()) {
        const auto* bytes = reinterpret_cast<const char*>(p->value.data());
        h = fnv1a64(std::string_view(bytes, p->value.size() * sizeof(double)), h);
    }
    return h;
}

StepVars encode_step(Tape& tape, ModelParams& p, const feat::FeatureFrame& f, Var h, Var c) {
    const ArchConfig& a = p.arch;
    expect(f.ally.size() == sz(a.num_unit_types) && f.enemy.size() == sz(a.num_unit_types),
           "encode_step: unit-count block has the wrong length");
    expect(f.resources.size() == 4, "encode_step: expected 4 resource scalars");
    expect(f.upgrades.size() == sz(a.num_upgrades) && f.researching.size() == sz(a.num_upgrades),
           "encode_step: upgrade block has the wrong length");
    expect(f.build_order >= 0 && f.build_order < a.num_build_orders, "encode_step: build order outside vocabulary");
    expect(f.enemy_race >= 0 && f.enemy_race < a.num_races, "encode_step: race outside vocabulary");
    expect(f.map >= 0 && f.map < a.num_maps, "encode_step: map outside vocabulary");

    std::vector<double> counts_time;
    counts_time.reserve(2 * f.ally.size() + 1);
    counts_time.insert(counts_time.end(), f.ally.begin(), f.ally.end());
    counts_time.insert(counts_time.end(), f.enemy.begin(), f.enemy.end());
    counts_time.push_back(f.time);

    const Var parts[] = {
        tape.constant(Array::vec(std::move(counts_time))),
        ad::affine(tape.constant(Array::vec(f.resources)), tape.param(p.proj_res_W), tape.param(p.proj_res_b)),
        ad::affine(tape.constant(Array::vec(f.upgrades)), tape.param(p.proj_upg_W), tape.param(p.proj_upg_b)),
        ad::affine(tape.constant(Array::vec(f.researching)), tape.param(p.proj_rsch_W), tape.param(p.proj_rsch_b)),
        ad::embed_lookup(tape.param(p.emb_bo), sz(f.build_order)),
        ad::embed_lookup(tape.param(p.emb_race), sz(f.enemy_race)),
        ad::embed_lookup(tape.param(p.emb_map), sz(f.map)),
    };
    const Var x = ad::concat(parts);
    const ad::LstmOut next =
        ad::lstm_cell(x, h, c, {tape.param(p.lstm_W), tape.param(p.lstm_U), tape.param(p.lstm_b)});

    StepVars out;
    out.h = next.h;
    out.c = next.c;
    out.q = ad::sigmoid(ad::affine(next.h, tape.param(p.q_W), tape.param(p.q_b)));
    Var z = next.h;
    for (std::size_t l = 0; l < p.aux_W.size(); ++l) {
        z = ad::affine(z, tape.param(p.aux_W[l]), tape.param(p.aux_b[l]));
        if (l + 1 < p.aux_W.size()) z = a.aux_activation == Activation::Relu ? ad::relu(z) : ad::tanh_act(z);
    }
    out.aux = z;
    return out;
}

Carry zero_carry(const ArchConfig& arch) {
    return {std::vector<double>(sz(arch.hidden), 0.0), std::vector<double>(sz(arch.hidden), 0.0)};
}

StepOutput encode_step(const ModelParams& params, const feat::FeatureFrame& frame, const Carry& carry) {
    expect(carry.h.size() == sz(params.arch.hidden) && carry.c.size() == sz(params.arch.hidden),
           "encode_step: carry does not match the hidden size");
    Tape tape;
    // The tape only reads parameter values here; backward is never run.
    auto& p = const_cast<ModelParams&>(params);
    const StepVars v = encode_step(tape, p, frame, tape.constant(Array::vec(carry.h)), tape.constant(Array::vec(carry.c)));
    StepOutput out;
    out.q.assign(v.q.value().values().begin(), v.q.value().values().end());
    out.aux_pred.assign(v.aux.value().values().begin(), v.aux.value().values().end());
    out.carry.h.assign(v.h.value().values().begin(), v.h.value().values().end());
    out.carry.c.assign(v.c.value().values().begin(), v.c.value().values().end());
    return out;
}

std::vector<double> mask_q(const std::vector<double>& q, int enemy_faction, const sim::Content& content) {
    const auto actions = content.actions();
    expect(q.size() == actions.size(), "mask_q: q length differs from the action count");
    expect(enemy_faction >= 0 && enemy_faction < static_cast<int>(content.factions.size()),
           "mask_q: invalid enemy faction");
    std::vector<double> out(q.size(), -std::numeric_limits<double>::infinity());
    bool any = false;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (actions[i].versus_faction == enemy_faction) {
            out[i] = q[i];
            any = true;
        }
    }
    expect(any, "mask_q: no action is valid against this faction");
    return out;
}

int select_action(const std::vector<double>& masked_q, int current_action, double clock_minutes,
                  const SelectionPolicy& policy, bool rush) {
    expect(policy.margin >= 0.0 && policy.warmup_minutes >= 0.0, "SelectionPolicy: negative margin or warmup");
    expect(current_action >= 0 && current_action < static_cast<int>(masked_q.size()) &&
               std::isfinite(masked_q[sz(current_action)]),
           "select_action: current action is not valid under the mask");
    if (clock_minutes < policy.warmup_minutes && !(rush && policy.rush_override)) return current_action;
    std::size_t best = 0;
    for (std::size_t i = 1; i < masked_q.size(); ++i)
        if (masked_q[i] > masked_q[best]) best = i;  // strict: lowest index wins ties
    // the slack absorbs rounding in q[best] - q[current] for an advantage of exactly the margin
    if (masked_q[best] - masked_q[sz(current_action)] >= policy.margin - 1e-12) return static_cast<int>(best);
    return current_action;
}

int select_build_order(const std::vector<double>& masked_q, int current_bo, int enemy_faction, double clock_minutes,
                       const SelectionPolicy& policy, bool rush, const sim::Content& content) {
    const int cur = content.action_index(current_bo, enemy_faction);
    expect(cur >= 0, "select_build_order: current build order is not specialized for this opponent");
    const int a = select_action(masked_q, cur, clock_minutes, policy, rush);
    return content.actions()[sz(a)].build_order;
}

bool rush_detected(const sim::RawObservation& obs, const sim::Content& content, const SelectionPolicy& policy) {
    const double minutes = static_cast<double>(obs.clock) / sim::kTicksPerMinute;
    if (minutes >= policy.warmup_minutes) return false;
    int combat = 0;
    for (std::size_t j = 0; j < obs.enemy_visible.size(); ++j)
        if (content.units[j].role == sim::Role::Combat) combat += obs.enemy_visible[j];
    return combat >= policy.rush_threshold;
}

Controller::Controller(const ModelParams& params, const sim::Content& content, feat::FeaturizerConfig fcfg,
                       SelectionPolicy policy)
    : params_(&params),
      content_(&content),
      fcfg_(fcfg),
      policy_(policy),
      mem_(content.units.size()) {
    out_.carry = zero_carry(params.arch);
}

const StepOutput& Controller::observe(const sim::RawObservation& obs) {
    mem_ = feat::update_memory(mem_, obs);
    frame_ = feat::featurize(obs, mem_, fcfg_, *content_);
    out_ = encode_step(*params_, frame_, out_.carry);
    rush_ = rush_ || rush_detected(obs, *content_, policy_);
    return out_;
}

int Controller::choose_build_order(const sim::RawObservation& obs) const {
    const auto masked = mask_q(out_.q, obs.enemy_faction, *content_);
    const double minutes = static_cast<double>(obs.clock) / sim::kTicksPerMinute;
    return select_build_order(masked, obs.build_order, obs.enemy_faction, minutes, policy_, rush_, *content_);
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw ContractError("unknown activation '" + s + "'");
}

}  // namespace bsw::net
