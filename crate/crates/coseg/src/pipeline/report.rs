//! Structured run report: per-solve energies, per-pass displacement
//! statistics and the convergence outcome. Serializes deterministically;
//! wall-clock timings live in a separate structure so reports stay
//! byte-identical across reruns.

use serde::{Deserialize, Serialize};

/// Energies of one MRF solve (one pyramid level and refinement cycle).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub level: usize,
    pub downsample_factor: usize,
    pub cycle: usize,
    pub label_scale: f64,
    pub num_labels: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub data_final: f64,
    pub smoothness_final: f64,
}

/// One registration of a subject against the rest of the population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub subject: usize,
    pub max_displacement_voxels: f64,
    pub solves: Vec<SolveRecord>,
}

/// One outer pass over the whole population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    pub visit_order: Vec<usize>,
    pub max_displacement_voxels: f64,
    /// Translation of the population centroid accumulated so far (mm);
    /// measures drift of the emergent common space.
    pub centroid_drift_mm: f64,
    pub registrations: Vec<RegistrationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: super::RegistrationConfig,
    pub num_subjects: usize,
    pub passes: Vec<PassRecord>,
    pub converged: bool,
    pub outer_iterations: usize,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-pass maximum incremental displacement, in execution order.
    pub fn pass_displacements(&self) -> Vec<f64> {
        self.passes.iter().map(|p| p.max_displacement_voxels).collect()
    }

    pub fn all_solves(&self) -> impl Iterator<Item = &SolveRecord> {
        self.passes
            .iter()
            .flat_map(|p| p.registrations.iter().flat_map(|r| r.solves.iter()))
    }
}

/// Wall-clock timings; reported separately from [`RunReport`] so the report
/// itself is reproducible byte for byte.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunTimings {
    pub total_seconds: f64,
    pub per_pass_seconds: Vec<f64>,
    pub fusion_seconds: f64,
}

impl RunTimings {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timings serialize")
    }
}
