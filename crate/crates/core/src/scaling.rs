//! Compute scaling over a slice's VNF stack and virtual-link scaling.
//!
//! The compute planner follows a stack discipline: the most recently pushed
//! instance is the one resized first, instances are added on top and removed
//! from the top. Every plan satisfies, for each resource `r`:
//!
//! * `target_r <= total_r`
//! * `(total_r - eff_r) / total_r <= beta`, where `eff_r` is the target raised
//!   to the floor `gamma * cap_min_r`
//! * `|stack| == gamma`
//!
//! so planning again with the same target on the returned stack is a no-op.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::required_instance_count;
use crate::model::{Action, PsaParams, Resource, ResourceVector, VnfInstance, CPU_TOL};

/// Upper bound on the stack size a plan may produce.
pub const MAX_INSTANCES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPlan {
    pub action: Action,
    pub new_stack: Vec<VnfInstance>,
    /// Over-provisioning ratio of the stack before planning.
    pub over_provision_before: f64,
    pub instances_required: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPlan {
    pub action: Action,
    pub new_link_cap: f64,
}

fn tol(r: usize) -> f64 {
    if r == Resource::Cpu.index() {
        CPU_TOL
    } else {
        0.5
    }
}

fn total(allocs: &[[f64; 3]]) -> [f64; 3] {
    allocs.iter().fold([0.0; 3], |mut acc, a| {
        for r in 0..3 {
            acc[r] += a[r];
        }
        acc
    })
}

fn quantize(a: [f64; 3]) -> [f64; 3] {
    ResourceVector::from_array_ceil(a).to_array()
}

/// Largest relative surplus of `current` over `effective` across resources.
pub fn over_provision_ratio(current: [f64; 3], effective: [f64; 3]) -> f64 {
    (0..3)
        .filter(|&r| current[r] > 0.0)
        .map(|r| (current[r] - effective[r]) / current[r])
        .fold(0.0, f64::max)
}

/// The target raised to what `instances` minimally sized VNFs occupy anyway.
fn effective_target(target: [f64; 3], cap_min: [f64; 3], instances: usize) -> [f64; 3] {
    let mut eff = target;
    for r in 0..3 {
        eff[r] = eff[r].max(cap_min[r] * instances as f64);
    }
    eff
}

/// Grows instances from the top of the stack until every resource reaches
/// `target` or all instances are at `cap_max`.
fn fill_shortfall(allocs: &mut [[f64; 3]], target: [f64; 3], cap_max: [f64; 3]) {
    let tot = total(allocs);
    for r in 0..3 {
        let mut short = target[r] - tot[r];
        if short <= tol(r) {
            continue;
        }
        for a in allocs.iter_mut().rev() {
            let add = (cap_max[r] - a[r]).max(0.0).min(short);
            a[r] += add;
            short -= add;
            if short <= 0.0 {
                break;
            }
        }
    }
}

/// Shrinks instances from the top of the stack towards `cap_min` so that each
/// selected resource lands on `eff`. With `only_over_beta`, a resource is
/// touched only when its surplus exceeds `beta`.
fn trim_surplus(
    allocs: &mut [[f64; 3]],
    eff: [f64; 3],
    cap_min: [f64; 3],
    beta: f64,
    only_over_beta: bool,
) {
    let tot = total(allocs);
    for r in 0..3 {
        let mut surplus = tot[r] - eff[r];
        if surplus <= tol(r) {
            continue;
        }
        if only_over_beta && surplus / tot[r] <= beta + 1e-12 {
            continue;
        }
        for a in allocs.iter_mut().rev() {
            let cut = (a[r] - cap_min[r]).max(0.0).min(surplus);
            a[r] -= cut;
            surplus -= cut;
            if surplus <= 0.0 {
                break;
            }
        }
    }
}

/// Plans the compute action that brings `stack` to `target`.
pub fn plan_compute_scaling(
    stack: &[VnfInstance],
    target: &ResourceVector,
    params: &PsaParams,
) -> Result<ScalingPlan> {
    if stack.is_empty() {
        return Err(Error::EmptyStack);
    }
    if !target.cpu.is_finite() {
        return Err(Error::InfeasibleTarget {
            instances: 0,
            reason: "non-finite cpu target".into(),
        });
    }
    let gamma = required_instance_count(target, &params.cap_max);
    if gamma > MAX_INSTANCES {
        return Err(Error::InfeasibleTarget {
            instances: gamma,
            reason: format!("more than {MAX_INSTANCES} instances required"),
        });
    }

    let bounds = params.bounds();
    let cap_min = params.cap_min.to_array();
    let cap_max = params.cap_max.to_array();
    let target_a = target.to_array();
    let mut allocs: Vec<[f64; 3]> = stack.iter().map(|v| v.alloc().to_array()).collect();
    let current = total(&allocs);
    let eff = effective_target(target_a, cap_min, gamma);
    let beta_current = over_provision_ratio(current, eff);

    let covered = target.le(&ResourceVector::from_array_ceil(current));
    if covered && beta_current <= params.beta + 1e-12 && stack.len() == gamma {
        return Ok(ScalingPlan {
            action: Action::NoAction,
            new_stack: stack.to_vec(),
            over_provision_before: beta_current,
            instances_required: gamma,
        });
    }

    let deployed = allocs.len();
    let action = if gamma == deployed {
        resize_top(&mut allocs, target_a, eff, current, params)
    } else if gamma > deployed {
        scale_out(&mut allocs, target_a, gamma, cap_min, cap_max);
        Action::ScaleOut
    } else {
        scale_in(&mut allocs, target_a, gamma, cap_min);
        Action::ScaleIn
    };

    fill_shortfall(&mut allocs, target_a, cap_max);
    trim_surplus(&mut allocs, eff, cap_min, params.beta, true);

    let mut next_id = stack.iter().map(|v| v.id).max().unwrap_or(0);
    let new_stack: Vec<VnfInstance> = allocs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let alloc = ResourceVector::from_array_ceil(*a);
            match stack.get(i) {
                Some(v) => v.with_alloc(alloc, &bounds),
                None => {
                    next_id += 1;
                    VnfInstance::new(next_id, alloc, &bounds)
                }
            }
        })
        .collect();

    let new_total = ResourceVector::sum(new_stack.iter().map(|v| v.alloc()).collect::<Vec<_>>().iter());
    if !target.le(&new_total) {
        return Err(Error::InfeasibleTarget {
            instances: new_stack.len(),
            reason: format!("planned total {new_total} below target {target}"),
        });
    }

    Ok(ScalingPlan {
        action,
        new_stack,
        over_provision_before: beta_current,
        instances_required: gamma,
    })
}

/// Vertical scaling of the top instance when the instance count is right.
fn resize_top(
    allocs: &mut [[f64; 3]],
    target: [f64; 3],
    eff: [f64; 3],
    current: [f64; 3],
    params: &PsaParams,
) -> Action {
    let cap_max = params.cap_max.to_array();
    let cap_min = params.cap_min.to_array();
    let top = allocs.len() - 1;
    let mut grew = false;
    for r in 0..3 {
        let delta = target[r] - current[r];
        if delta <= tol(r) {
            continue;
        }
        grew = true;
        let v = allocs[top][r];
        // At least the minimum step, but never past the accepted surplus.
        let ceiling = target[r] / (1.0 - params.beta) - current[r];
        let step = (params.omega_scale * v).max(delta).min(ceiling.max(delta));
        allocs[top][r] = (v + step).min(cap_max[r]);
    }
    if grew {
        Action::ScaleUp
    } else {
        trim_surplus(allocs, eff, cap_min, params.beta, false);
        Action::ScaleDown
    }
}

fn scale_out(
    allocs: &mut Vec<[f64; 3]>,
    target: [f64; 3],
    gamma: usize,
    cap_min: [f64; 3],
    cap_max: [f64; 3],
) {
    // Grow the top instance by a common percentage until one resource hits cap_max.
    let top = allocs.len() - 1;
    let v = allocs[top];
    let p = (0..3)
        .filter(|&r| v[r] > 0.0)
        .map(|r| (cap_max[r] - v[r]) / v[r])
        .fold(f64::INFINITY, f64::min);
    let p = if p.is_finite() { p.max(0.0) } else { 0.0 };
    let mut grown = v;
    for r in 0..3 {
        grown[r] = (v[r] * (1.0 + p)).min(cap_max[r]);
    }
    allocs[top] = quantize(grown);

    while allocs.len() < gamma {
        let tot = total(allocs);
        let mut fresh = [0.0; 3];
        for r in 0..3 {
            fresh[r] = (target[r] - tot[r]).clamp(cap_min[r], cap_max[r]);
        }
        allocs.push(quantize(fresh));
    }
}

fn scale_in(allocs: &mut Vec<[f64; 3]>, target: [f64; 3], gamma: usize, cap_min: [f64; 3]) {
    allocs.truncate(gamma);
    let tot = total(allocs);
    let top = allocs.len() - 1;
    let last = allocs[top];
    let p = (0..3)
        .filter(|&r| last[r] > 0.0)
        .map(|r| (tot[r] - target[r]) / last[r])
        .fold(f64::INFINITY, f64::min);
    if p.is_finite() && p > 0.0 {
        let p = p.min(1.0);
        let mut shrunk = last;
        for r in 0..3 {
            shrunk[r] = (last[r] * (1.0 - p)).max(cap_min[r]);
        }
        allocs[top] = quantize(shrunk);
    }
}

/// Link scaling decision against the traffic boundary.
pub fn plan_link_scaling(link_cap: f64, link_util: f64, boundary: f64, params: &PsaParams) -> LinkPlan {
    if link_cap > boundary && link_util < params.rho {
        LinkPlan {
            action: Action::ScaleDownLink,
            new_link_cap: boundary,
        }
    } else if link_util > params.rho {
        LinkPlan {
            action: Action::ScaleUpLink,
            new_link_cap: ((1.0 + params.omega_scale) * link_cap).max(boundary),
        }
    } else {
        LinkPlan {
            action: Action::NoAction,
            new_link_cap: link_cap,
        }
    }
}
