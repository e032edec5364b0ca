#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morphrl/registry.hpp"
#include "morphrl/rng.hpp"

namespace morphrl {

enum class DynamicsKind { swimmer, hopper };

DynamicsKind dynamics_from_string(const std::string& s);
std::string dynamics_to_string(DynamicsKind kind);

// Fixed physical constants for the chain families. Values are versioned via
// content_hash(); changing any of them changes every recorded run hash.
struct EnvConstants {
    double dt = 0.02;
    int substeps = 4;  // substep h = dt / substeps
    double link_length = 0.35;
    double link_inertia = 1.0;
    double torque_max = 8.0;
    double joint_damping = 1.2;
    double joint_limit = 1.5707963267948966;  // pi/2
    double omega_max = 25.0;
    double body_mass = 1.0;
    double pitch_inertia = 2.0;
    double pitch_damping = 2.0;
    double torque_reaction = 0.2;
    double paddle_drag = 0.5;    // swimmer thrust coefficient (a drag effect)
    double linear_drag = 1.5;    // swimmer root velocity damping
    double v_max = 10.0;
    double gravity = 9.81;
    double ground_stiffness = 400.0;
    double ground_damping = 15.0;
    double ground_tangent_drag = 6.0;
    double action_cost = 0.001;
    double reset_jitter = 0.05;
    double divergence_limit = 1e6;

    std::uint64_t content_hash() const;
};

struct ChainState {
    std::vector<double> theta;  // joint angles, one per non-root limb
    std::vector<double> omega;  // joint angular velocities
    double root_x = 0, root_y = 0;
    double root_vx = 0, root_vy = 0;
    double pitch = 0, pitch_vel = 0;
    std::int64_t step_count = 0;
};

// Family catalog builders for the desk environments. The full morphology has
// `full_limbs` limbs (root included); morph `<family>_N` keeps the first N.
MorphologySpec make_chain_family_spec(const std::string& family_id, int full_limbs, int present_limbs);

// Observation layout: root block [vx, vy, height, pitch], then one 6-wide
// block per present limb [sin, cos, rate, tip_dx, tip_dy, contact]. Limb 0's
// block reads the root pitch; limb i>0 reads joint i-1. Works on any state
// that physically contains the requested limbs.
std::vector<double> observe(const ChainState& state, const MorphologySpec& morph, DynamicsKind kind,
                            const EnvConstants& consts);

// Deterministic planar chain. Semi-implicit Euler, no RNG inside step().
class ChainEnv {
public:
    ChainEnv(MorphologySpec morph, DynamicsKind kind, EnvConstants consts, int episode_cap);

    std::vector<double> reset(SplitRng& rng);

    struct StepOut {
        std::vector<double> obs;
        double reward = 0;
        bool done = false;        // episode over (cap reached or diverged)
        bool terminated = false;  // true MDP termination (divergence only)
        bool diverged = false;
    };
    StepOut step(std::span<const double> action);

    const ChainState& state() const { return state_; }
    void set_state(const ChainState& s) { state_ = s; }
    const MorphologySpec& morph() const { return morph_; }
    DynamicsKind kind() const { return kind_; }
    const EnvConstants& constants() const { return consts_; }
    int episode_cap() const { return episode_cap_; }
    int sensor_dim() const { return morph_.sensor_dim(); }
    int action_dim() const { return morph_.action_dim(); }

    double kinetic_energy() const;

private:
    void substep(std::span<const double> torque, double h);
    bool diverged() const;

    MorphologySpec morph_;
    DynamicsKind kind_;
    EnvConstants consts_;
    int episode_cap_;
    int joints_;
    ChainState state_;
};

}  // namespace morphrl
