#include "morphrl/env.hpp"

#include <algorithm>
#include <cmath>

namespace morphrl {

DynamicsKind dynamics_from_string(const std::string& s) {
    if (s == "swimmer") return DynamicsKind::swimmer;
    if (s == "hopper") return DynamicsKind::hopper;
    throw ConfigError("unknown dynamics kind: " + s);
}

std::string dynamics_to_string(DynamicsKind kind) {
    return kind == DynamicsKind::swimmer ? "swimmer" : "hopper";
}

std::uint64_t EnvConstants::content_hash() const {
    const double fields[] = {dt,
                             static_cast<double>(substeps),
                             link_length,
                             link_inertia,
                             torque_max,
                             joint_damping,
                             joint_limit,
                             omega_max,
                             body_mass,
                             pitch_inertia,
                             pitch_damping,
                             torque_reaction,
                             paddle_drag,
                             linear_drag,
                             v_max,
                             gravity,
                             ground_stiffness,
                             ground_damping,
                             ground_tangent_drag,
                             action_cost,
                             reset_jitter,
                             divergence_limit};
    return fnv1a_bytes(fields, sizeof(fields));
}

MorphologySpec make_chain_family_spec(const std::string& family_id, int full_limbs, int present_limbs) {
    if (full_limbs < 2) throw ConfigError(family_id + ": chain family needs at least 2 limbs");
    if (present_limbs < 2 || present_limbs > full_limbs)
        throw ConfigError(family_id + ": present limb count " + std::to_string(present_limbs) +
                          " outside [2, " + std::to_string(full_limbs) + "]");
    MorphologySpec spec;
    spec.family_id = family_id;
    spec.morph_id = family_id + "_" + std::to_string(present_limbs);
    LimbSpec torso;
    torso.name = "torso";
    for (const char* f : {"vel_x", "vel_y", "height", "pitch", "sin", "cos", "rate", "tip_dx", "tip_dy",
                          "contact"})
        torso.sensors.push_back({f, 1});
    spec.limbs.push_back(torso);
    for (int i = 1; i < full_limbs; ++i) {
        LimbSpec link;
        link.name = "link" + std::to_string(i);
        for (const char* f : {"sin", "cos", "rate", "tip_dx", "tip_dy", "contact"})
            link.sensors.push_back({f, 1});
        spec.limbs.push_back(link);
    }
    for (int i = 1; i < full_limbs; ++i) spec.actuators.push_back({"joint" + std::to_string(i), i});
    for (int i = 0; i < present_limbs; ++i) spec.present_limbs.push_back(i);
    spec.validate();
    return spec;
}

namespace {

struct LimbFrame {
    std::vector<double> phi;    // absolute link angle
    std::vector<double> rate;   // absolute link angular rate
    std::vector<double> tip_x;  // world tip position of each limb
    std::vector<double> tip_y;
};

LimbFrame limb_frame(const ChainState& state, int limbs, double link_length) {
    LimbFrame f;
    f.phi.resize(static_cast<std::size_t>(limbs));
    f.rate.resize(static_cast<std::size_t>(limbs));
    f.tip_x.resize(static_cast<std::size_t>(limbs));
    f.tip_y.resize(static_cast<std::size_t>(limbs));
    double phi = state.pitch;
    double rate = state.pitch_vel;
    double x = state.root_x, y = state.root_y;
    for (int i = 0; i < limbs; ++i) {
        if (i > 0) {
            phi += state.theta[static_cast<std::size_t>(i - 1)];
            rate += state.omega[static_cast<std::size_t>(i - 1)];
        }
        x += link_length * std::cos(phi);
        y += link_length * std::sin(phi);
        f.phi[static_cast<std::size_t>(i)] = phi;
        f.rate[static_cast<std::size_t>(i)] = rate;
        f.tip_x[static_cast<std::size_t>(i)] = x;
        f.tip_y[static_cast<std::size_t>(i)] = y;
    }
    return f;
}

}  // namespace

std::vector<double> observe(const ChainState& state, const MorphologySpec& morph, DynamicsKind kind,
                            const EnvConstants& consts) {
    int max_limb = 0;
    for (int i : morph.present_limbs) max_limb = std::max(max_limb, i);
    if (static_cast<int>(state.theta.size()) < max_limb)
        throw ContractError(morph.morph_id + ": state has only " + std::to_string(state.theta.size() + 1) +
                            " limbs");
    const LimbFrame frame = limb_frame(state, max_limb + 1, consts.link_length);
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(morph.sensor_dim()));
    for (int i : morph.present_limbs) {
        if (i == 0) {
            obs.push_back(state.root_vx);
            obs.push_back(state.root_vy);
            obs.push_back(state.root_y);
            obs.push_back(state.pitch);
        }
        const auto idx = static_cast<std::size_t>(i);
        const double angle = i == 0 ? state.pitch : state.theta[idx - 1];
        const double rate = i == 0 ? state.pitch_vel : state.omega[idx - 1];
        const bool contact = kind == DynamicsKind::hopper && frame.tip_y[idx] < 0.0;
        obs.push_back(std::sin(angle));
        obs.push_back(std::cos(angle));
        obs.push_back(rate);
        obs.push_back(frame.tip_x[idx] - state.root_x);
        obs.push_back(frame.tip_y[idx] - state.root_y);
        obs.push_back(contact ? 1.0 : 0.0);
    }
    return obs;
}

ChainEnv::ChainEnv(MorphologySpec morph, DynamicsKind kind, EnvConstants consts, int episode_cap)
    : morph_(std::move(morph)), kind_(kind), consts_(consts), episode_cap_(episode_cap) {
    morph_.validate();
    for (int i = 0; i < morph_.limb_count(); ++i)
        if (morph_.present_limbs[static_cast<std::size_t>(i)] != i)
            throw ConfigError(morph_.morph_id + ": chain dynamics need a contiguous limb prefix");
    if (episode_cap_ <= 0) throw ConfigError("episode cap must be positive");
    joints_ = morph_.limb_count() - 1;
}

std::vector<double> ChainEnv::reset(SplitRng& rng) {
    const double j = consts_.reset_jitter;
    state_ = ChainState{};
    state_.theta.resize(static_cast<std::size_t>(joints_));
    state_.omega.resize(static_cast<std::size_t>(joints_));
    for (auto& t : state_.theta) t = rng.uniform(-j, j);
    for (auto& w : state_.omega) w = rng.uniform(-j, j);
    const double rest_pitch = kind_ == DynamicsKind::hopper ? -1.5707963267948966 : 0.0;
    state_.pitch = rest_pitch + rng.uniform(-j, j);
    state_.pitch_vel = rng.uniform(-j, j);
    state_.root_x = 0.0;
    state_.root_vx = 0.0;
    state_.root_vy = 0.0;
    state_.root_y =
        kind_ == DynamicsKind::hopper ? consts_.link_length * morph_.limb_count() - 0.02 : 0.0;
    state_.step_count = 0;
    return observe(state_, morph_, kind_, consts_);
}

void ChainEnv::substep(std::span<const double> torque, double h) {
    const int limbs = joints_ + 1;
    const LimbFrame frame = limb_frame(state_, limbs, consts_.link_length);

    // accelerations from the current state
    std::vector<double> alpha(static_cast<std::size_t>(joints_));
    double torque_sum = 0.0;
    for (int jn = 0; jn < joints_; ++jn) {
        const auto idx = static_cast<std::size_t>(jn);
        alpha[idx] = (torque[idx] - consts_.joint_damping * state_.omega[idx]) / consts_.link_inertia;
        torque_sum += torque[idx];
    }
    const double pitch_acc = (-consts_.torque_reaction * torque_sum -
                              consts_.pitch_damping * state_.pitch_vel) /
                             consts_.pitch_inertia;

    double fx = 0.0, fy = 0.0;
    if (kind_ == DynamicsKind::swimmer) {
        for (int i = 0; i < limbs; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const double w = frame.rate[idx];
            const double mag = consts_.paddle_drag * consts_.link_length * consts_.link_length * w * w;
            fx += mag * std::cos(frame.phi[idx]);
            fy += mag * std::sin(frame.phi[idx]);
        }
        fx -= consts_.linear_drag * state_.root_vx * consts_.body_mass;
        fy -= consts_.linear_drag * state_.root_vy * consts_.body_mass;
    } else {
        fy -= consts_.gravity * consts_.body_mass;
        auto contact_force = [&](double py, double vx_pt, double vy_pt) {
            if (py >= 0.0) return;
            const double normal = consts_.ground_stiffness * (-py) - consts_.ground_damping * vy_pt;
            if (normal <= 0.0) return;
            fy += normal;
            fx -= consts_.ground_tangent_drag * vx_pt;
        };
        contact_force(state_.root_y, state_.root_vx, state_.root_vy);
        for (int i = 0; i < limbs; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            // tip velocity = root velocity + sum of rotational contributions
            double vx_pt = state_.root_vx, vy_pt = state_.root_vy;
            for (int m = 0; m <= i; ++m) {
                const auto mi = static_cast<std::size_t>(m);
                vx_pt -= consts_.link_length * frame.rate[mi] * std::sin(frame.phi[mi]);
                vy_pt += consts_.link_length * frame.rate[mi] * std::cos(frame.phi[mi]);
            }
            contact_force(frame.tip_y[idx], vx_pt, vy_pt);
        }
    }

    // semi-implicit: velocities first, then positions
    for (int jn = 0; jn < joints_; ++jn) {
        const auto idx = static_cast<std::size_t>(jn);
        state_.omega[idx] += h * alpha[idx];
        state_.omega[idx] = std::clamp(state_.omega[idx], -consts_.omega_max, consts_.omega_max);
    }
    state_.pitch_vel += h * pitch_acc;
    state_.pitch_vel = std::clamp(state_.pitch_vel, -consts_.omega_max, consts_.omega_max);
    state_.root_vx += h * fx / consts_.body_mass;
    state_.root_vy += h * fy / consts_.body_mass;
    state_.root_vx = std::clamp(state_.root_vx, -consts_.v_max, consts_.v_max);
    state_.root_vy = std::clamp(state_.root_vy, -consts_.v_max, consts_.v_max);

    for (int jn = 0; jn < joints_; ++jn) {
        const auto idx = static_cast<std::size_t>(jn);
        state_.theta[idx] += h * state_.omega[idx];
        if (state_.theta[idx] > consts_.joint_limit) {
            state_.theta[idx] = consts_.joint_limit;
            state_.omega[idx] = 0.0;
        } else if (state_.theta[idx] < -consts_.joint_limit) {
            state_.theta[idx] = -consts_.joint_limit;
            state_.omega[idx] = 0.0;
        }
    }
    state_.pitch += h * state_.pitch_vel;
    state_.root_x += h * state_.root_vx;
    state_.root_y += h * state_.root_vy;
}

bool ChainEnv::diverged() const {
    auto bad = [&](double v) { return !std::isfinite(v) || std::abs(v) > consts_.divergence_limit; };
    for (double v : state_.theta)
        if (bad(v)) return true;
    for (double v : state_.omega)
        if (bad(v)) return true;
    return bad(state_.root_x) || bad(state_.root_y) || bad(state_.root_vx) || bad(state_.root_vy) ||
           bad(state_.pitch) || bad(state_.pitch_vel);
}

ChainEnv::StepOut ChainEnv::step(std::span<const double> action) {
    if (static_cast<int>(action.size()) != joints_)
        throw ContractError(morph_.morph_id + ": action length " + std::to_string(action.size()) +
                            ", expected " + std::to_string(joints_));
    std::vector<double> torque(action.size());
    double action_sq = 0.0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        if (!std::isfinite(action[i])) throw ContractError(morph_.morph_id + ": non-finite action");
        const double a = std::clamp(action[i], -1.0, 1.0);
        torque[i] = consts_.torque_max * a;
        action_sq += a * a;
    }

    const double forward_velocity = state_.root_vx;  // reward reads the velocity the action acted on
    const double h = consts_.dt / consts_.substeps;
    for (int s = 0; s < consts_.substeps; ++s) substep(torque, h);
    state_.step_count += 1;

    StepOut out;
    out.diverged = diverged();
    out.terminated = out.diverged;
    out.done = out.diverged || state_.step_count >= episode_cap_;
    out.reward = forward_velocity - consts_.action_cost * action_sq;
    if (!out.diverged) out.obs = observe(state_, morph_, kind_, consts_);
    return out;
}

double ChainEnv::kinetic_energy() const {
    double e = 0.0;
    for (double w : state_.omega) e += 0.5 * consts_.link_inertia * w * w;
    e += 0.5 * consts_.pitch_inertia * state_.pitch_vel * state_.pitch_vel;
    e += 0.5 * consts_.body_mass *
         (state_.root_vx * state_.root_vx + state_.root_vy * state_.root_vy);
    return e;
}

}  // namespace morphrl
