//! Deterministic synthetic dataset generator: populations of deformed
//! copies of a nested-ellipsoid base volume with ground-truth labels and
//! controllably corrupted segmentation priors.
//!
//! All randomness derives from `(seed, subject index, stream)`, so subjects
//! can be generated in parallel without changing outputs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CosegError, Result};
use crate::parallel::map_indexed;
use crate::transform::{densify, warp_labels, warp_scalar, BasisKind, ControlGrid, DenseDeformationField};
use crate::volume::{LabelMap, ProbabilityMap, ScalarVolume, VolumeDomain};

const NOISE_SIGMA: f64 = 0.03;
const FIELD_GRID_SPACING_MM: f64 = 12.0;

/// Strength of the prior corruption applied to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorNoise {
    pub boundary_shift_voxels: usize,
    pub label_flip_rate: f64,
    pub smoothing_sigma_voxels: f64,
}

/// Named corruption presets spanning weak to strong prior quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorPreset {
    Weak,
    Strong,
}

impl PriorPreset {
    pub fn noise(self) -> PriorNoise {
        match self {
            PriorPreset::Weak => PriorNoise {
                boundary_shift_voxels: 2,
                label_flip_rate: 0.15,
                smoothing_sigma_voxels: 1.5,
            },
            PriorPreset::Strong => PriorNoise {
                boundary_shift_voxels: 1,
                label_flip_rate: 0.05,
                smoothing_sigma_voxels: 0.8,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub num_structures: usize,
    pub num_subjects: usize,
    pub deform_max_mm: f64,
    pub prior_noise: PriorNoise,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [48, 48, 48],
            spacing_mm: [1.0; 3],
            num_structures: 3,
            num_subjects: 4,
            deform_max_mm: 4.0,
            prior_noise: PriorPreset::Weak.noise(),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_structures < 1 {
            return Err(CosegError::Config("num_structures must be >= 1".into()));
        }
        if self.num_structures > 250 {
            return Err(CosegError::Config("num_structures must fit a u8 label".into()));
        }
        if !(0.0..0.5).contains(&self.prior_noise.label_flip_rate) {
            return Err(CosegError::Config("label_flip_rate must be in [0, 0.5)".into()));
        }
        if self.deform_max_mm < 0.0 {
            return Err(CosegError::Config("deform_max_mm must be >= 0".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> VolumeDomain {
        VolumeDomain::new(self.dims, self.spacing_mm, [0.0; 3])
    }

    /// Warning when the true deformations exceed what one registration sweep
    /// can recover at `finest_grid_spacing_mm` (later sweeps compose, so this
    /// is a caution, not an error).
    pub fn cap_warning(&self, finest_grid_spacing_mm: [f64; 3]) -> Option<String> {
        let cap = 0.4 * finest_grid_spacing_mm.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.deform_max_mm > cap {
            Some(format!(
                "deform_max_mm {} exceeds the per-sweep displacement cap {:.2} mm \
                 (0.4 x finest grid spacing); recovery relies on multiple sweeps",
                self.deform_max_mm, cap
            ))
        } else {
            None
        }
    }
}

fn rng_for(seed: u64, subject: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subject as u64) << 8) | stream);
    rng
}

struct Ellipsoid {
    center: [f64; 3],
    semi_axes: [f64; 3],
}

fn ellipsoids(spec: &PhantomSpec) -> Vec<Ellipsoid> {
    let half = [
        spec.dims[0] as f64 / 2.0,
        spec.dims[1] as f64 / 2.0,
        spec.dims[2] as f64 / 2.0,
    ];
    let unit = spec.dims[0] as f64 / 48.0;
    (0..spec.num_structures)
        .map(|s| {
            let shrink = 0.67f64.powi(s as i32);
            Ellipsoid {
                center: [
                    half[0] - 0.5 + 1.5 * s as f64 * unit,
                    half[1] - 0.5 - 1.0 * s as f64 * unit,
                    half[2] - 0.5 + 0.8 * s as f64 * unit,
                ],
                semi_axes: [
                    0.70 * half[0] * shrink,
                    0.64 * half[1] * shrink,
                    0.58 * half[2] * shrink,
                ],
            }
        })
        .collect()
}

fn structure_intensity(class: usize, num_structures: usize) -> f64 {
    if class == 0 {
        return 0.10;
    }
    if num_structures == 1 {
        return 0.60;
    }
    0.35 + 0.50 * (class - 1) as f64 / (num_structures - 1) as f64
}

fn base_labels(spec: &PhantomSpec) -> LabelMap {
    let domain = spec.domain();
    let shapes = ellipsoids(spec);
    let n = domain.num_voxels();
    let mut data = vec![0u8; n];
    for (idx, v) in data.iter_mut().enumerate() {
        let [x, y, z] = domain.coords(idx);
        let p = [x as f64, y as f64, z as f64];
        // innermost containing ellipsoid wins
        for (s, e) in shapes.iter().enumerate().rev() {
            let dx = (p[0] - e.center[0]) / e.semi_axes[0];
            let dy = (p[1] - e.center[1]) / e.semi_axes[1];
            let dz = (p[2] - e.center[2]) / e.semi_axes[2];
            if dx * dx + dy * dy + dz * dz <= 1.0 {
                *v = (s + 1) as u8;
                break;
            }
        }
    }
    LabelMap::new(domain, data)
}

fn render_intensities(labels: &LabelMap, num_structures: usize) -> ScalarVolume {
    let data = labels
        .data
        .iter()
        .map(|&l| structure_intensity(usize::from(l), num_structures) as f32)
        .collect();
    ScalarVolume::new(labels.domain, data)
}

fn add_noise(vol: &mut ScalarVolume, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, NOISE_SIGMA).unwrap();
    for v in vol.data.iter_mut() {
        *v = (*v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32;
    }
}

/// Noise-free structural template and its labels.
fn generate_base_clean(spec: &PhantomSpec) -> (ScalarVolume, LabelMap) {
    let labels = base_labels(spec);
    let image = render_intensities(&labels, spec.num_structures);
    (image, labels)
}

/// Nested ellipsoidal structures with distinct mean intensities plus
/// additive Gaussian noise (sigma 0.03), clipped to [0,1].
pub fn generate_base(spec: &PhantomSpec) -> (ScalarVolume, LabelMap) {
    let (mut image, labels) = generate_base_clean(spec);
    let mut rng = rng_for(spec.seed, 0, 0);
    add_noise(&mut image, &mut rng);
    (image, labels)
}

/// Random bounded control-grid displacements on a 12 mm grid, densified with
/// cubic B-splines. `deform_max_mm = 0` yields the identity field.
pub fn random_smooth_field(spec: &PhantomSpec, subject_seed: u64) -> DenseDeformationField {
    let domain = spec.domain();
    let mut grid = ControlGrid::identity(&domain, [FIELD_GRID_SPACING_MM; 3])
        .expect("phantom field grid spacing is fixed above 2 voxels");
    if spec.deform_max_mm > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
        for d in grid.displacements.iter_mut() {
            for v in d.iter_mut() {
                *v = rng.gen_range(-spec.deform_max_mm..spec.deform_max_mm);
            }
        }
    }
    densify(&grid, BasisKind::CubicBspline)
}

fn erode_or_dilate_class(labels: &mut LabelMap, class: u8, dilate: bool, steps: usize) {
    let d = labels.domain;
    let [nx, ny, nz] = d.dims;
    for _ in 0..steps {
        let snapshot = labels.data.clone();
        let at = |x: isize, y: isize, z: isize| -> Option<u8> {
            if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
                None
            } else {
                Some(snapshot[d.index(x as usize, y as usize, z as usize)])
            }
        };
        for z in 0..nz as isize {
            for y in 0..ny as isize {
                for x in 0..nx as isize {
                    let idx = d.index(x as usize, y as usize, z as usize);
                    let cur = snapshot[idx];
                    let neighbors = [
                        at(x - 1, y, z),
                        at(x + 1, y, z),
                        at(x, y - 1, z),
                        at(x, y + 1, z),
                        at(x, y, z - 1),
                        at(x, y, z + 1),
                    ];
                    if dilate {
                        if cur != class && neighbors.iter().any(|&n| n == Some(class)) {
                            labels.data[idx] = class;
                        }
                    } else if cur == class
                        && neighbors.iter().any(|&n| n.map_or(true, |l| l != class))
                    {
                        // eroded voxels take the majority non-class neighbor
                        // (out-of-domain counts as background), lowest on ties
                        let mut counts = [0u8; 256];
                        for n in neighbors {
                            let l = n.unwrap_or(0);
                            if l != class {
                                counts[usize::from(l)] += 1;
                            }
                        }
                        let mut best = 0usize;
                        for (l, &c) in counts.iter().enumerate() {
                            if c > counts[best] {
                                best = l;
                            }
                        }
                        labels.data[idx] = best as u8;
                    }
                }
            }
        }
    }
}

/// Corrupt a ground-truth mask into a soft prior: random per-class boundary
/// erosion/dilation, independent label flips, per-channel Gaussian smoothing
/// and renormalization. With all noise parameters zero this is exactly the
/// one-hot encoding of `gt`.
pub fn corrupt_prior(gt: &LabelMap, noise: &PriorNoise, rng: &mut ChaCha8Rng) -> ProbabilityMap {
    let num_classes = usize::from(gt.max_label()) + 1;
    let mut hard = gt.clone();

    if noise.boundary_shift_voxels > 0 {
        for class in 1..num_classes as u8 {
            let dilate = rng.gen_bool(0.5);
            erode_or_dilate_class(&mut hard, class, dilate, noise.boundary_shift_voxels);
        }
    }

    if noise.label_flip_rate > 0.0 && num_classes > 1 {
        for v in hard.data.iter_mut() {
            if rng.gen::<f64>() < noise.label_flip_rate {
                let mut other = rng.gen_range(0..num_classes - 1) as u8;
                if other >= *v {
                    other += 1;
                }
                *v = other;
            }
        }
    }

    let mut prob = ProbabilityMap::one_hot(&hard, num_classes);
    if noise.smoothing_sigma_voxels > 0.0 {
        let n = prob.domain.num_voxels();
        let dims = prob.domain.dims;
        let mut data = Vec::with_capacity(num_classes * n);
        for c in 0..num_classes {
            data.extend(crate::volume::gaussian_smooth(
                prob.channel(c),
                dims,
                noise.smoothing_sigma_voxels,
            ));
        }
        prob = ProbabilityMap::new(prob.domain, num_classes, data);
    }
    prob.renormalize();
    prob
}

/// One generated population member.
#[derive(Debug, Clone)]
pub struct Subject {
    pub image: ScalarVolume,
    pub gt: LabelMap,
    pub prior: ProbabilityMap,
    pub true_field: DenseDeformationField,
}

/// Generate the full population in memory: per subject, the base is warped
/// by a random smooth field, fresh noise is added, and the prior is a
/// corrupted copy of the warped ground truth.
pub fn generate_subjects(spec: &PhantomSpec) -> Result<Vec<Subject>> {
    spec.validate()?;
    let (base_image, base_gt) = generate_base(spec);
    let subjects = map_indexed(spec.num_subjects, |i| {
        let field_seed = rng_for(spec.seed, i, 1).gen::<u64>();
        let field = random_smooth_field(spec, field_seed);
        let mut image = warp_scalar(&base_image, &field).expect("co-domain by construction");
        let mut noise_rng = rng_for(spec.seed, i, 2);
        add_noise(&mut image, &mut noise_rng);
        let gt = warp_labels(&base_gt, &field).expect("co-domain by construction");
        let mut prior_rng = rng_for(spec.seed, i, 3);
        let prior = corrupt_prior(&gt, &spec.prior_noise, &mut prior_rng);
        Subject {
            image,
            gt,
            prior,
            true_field: field,
        }
    });
    Ok(subjects)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestSubject {
    pub index: usize,
    pub image: String,
    pub gt: String,
    pub prior: String,
    pub true_field: String,
}

/// Index of a generated population on disk.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PopulationManifest {
    pub spec: PhantomSpec,
    pub subjects: Vec<ManifestSubject>,
    pub warnings: Vec<String>,
}

/// Write the population as MetaImage files plus a JSON manifest; returns the
/// manifest. File contents are byte-identical across runs for a fixed spec.
pub fn generate_population(spec: &PhantomSpec, out_dir: &Path) -> Result<PopulationManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| CosegError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let subjects = generate_subjects(spec)?;
    let mut manifest = PopulationManifest {
        spec: *spec,
        subjects: Vec::new(),
        warnings: Vec::new(),
    };
    if let Some(w) =
        spec.cap_warning(crate::pipeline::RegistrationConfig::default().grid_spacing_finest_mm)
    {
        manifest.warnings.push(w);
    }
    for (i, s) in subjects.iter().enumerate() {
        let image = format!("subject_{i:02}_image.mha");
        let gt = format!("subject_{i:02}_gt.mha");
        let prior = format!("subject_{i:02}_prior.mha");
        let field = format!("subject_{i:02}_field.mha");
        s.image.save_metaimage(&out_dir.join(&image))?;
        s.gt.save_metaimage(&out_dir.join(&gt))?;
        s.prior.save_metaimage(&out_dir.join(&prior))?;
        s.true_field.save_metaimage(&out_dir.join(&field))?;
        manifest.subjects.push(ManifestSubject {
            index: i,
            image,
            gt,
            prior,
            true_field: field,
        });
    }
    let manifest_path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| CosegError::Io {
        path: manifest_path,
        source: e,
    })?;
    Ok(manifest)
}
