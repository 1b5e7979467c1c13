//! Discrete MRF construction for one image-vs-population registration step.
//!
//! Control-grid nodes carry candidate displacement labels; the unary cost of
//! a label mixes intensity disagreement (sum of absolute differences) and
//! prior disagreement (per-voxel argmax Hamming indicator, weighted by beta)
//! against every other population member. The pairwise cost is the Euclidean
//! distance between label displacements, which is a metric, so move-making
//! solvers carry their usual guarantees.

mod maxflow;
mod solve;

pub use solve::{solve_exhaustive, solve_expansion, solve_icm};

use crate::error::{CosegError, Result};
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::transform::ControlGrid;
use crate::volume::{LabelMap, ScalarVolume};

/// Candidate displacement vectors; label 0 is always the zero vector and the
/// rest sample the signed coordinate axes at up to `steps` magnitudes, capped
/// at 0.4 of the grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementLabelSet {
    pub labels: Vec<[f64; 3]>,
    pub radius_mm: f64,
    pub steps: usize,
}

impl DisplacementLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Build the label set for one refinement cycle: the zero label plus
/// `steps` magnitudes along each signed axis, scaled by `scale` and capped at
/// 0.4 of the per-axis grid spacing. Yields `6 * steps + 1` labels.
pub fn build_label_set(
    grid_spacing_mm: [f64; 3],
    steps: usize,
    scale: f64,
) -> DisplacementLabelSet {
    assert!(steps >= 1);
    assert!(scale > 0.0 && scale <= 1.0);
    let mut labels = vec![[0.0f64; 3]];
    let mut radius = 0.0f64;
    for axis in 0..3 {
        let cap = 0.4 * grid_spacing_mm[axis] * scale;
        radius = radius.max(cap);
        for m in 1..=steps {
            let mag = cap * m as f64 / steps as f64;
            for sign in [1.0, -1.0] {
                let mut v = [0.0f64; 3];
                v[axis] = sign * mag;
                labels.push(v);
            }
        }
    }
    DisplacementLabelSet {
        labels,
        radius_mm: radius,
        steps,
    }
}

/// A label assignment, one label index per control-grid node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub assignment: Vec<u16>,
}

impl Labeling {
    pub fn uniform(num_nodes: usize, label: u16) -> Self {
        Self {
            assignment: vec![label; num_nodes],
        }
    }
}

/// Undirected 6-neighborhood edges of a control grid.
pub fn grid_edges(grid_dims: [usize; 3]) -> Vec<[u32; 2]> {
    let idx = |i: usize, j: usize, k: usize| ((k * grid_dims[1] + j) * grid_dims[0] + i) as u32;
    let mut edges = Vec::new();
    for k in 0..grid_dims[2] {
        for j in 0..grid_dims[1] {
            for i in 0..grid_dims[0] {
                if i + 1 < grid_dims[0] {
                    edges.push([idx(i, j, k), idx(i + 1, j, k)]);
                }
                if j + 1 < grid_dims[1] {
                    edges.push([idx(i, j, k), idx(i, j + 1, k)]);
                }
                if k + 1 < grid_dims[2] {
                    edges.push([idx(i, j, k), idx(i, j, k + 1)]);
                }
            }
        }
    }
    edges
}

/// One registration step as a discrete labeling problem: unary cost table
/// plus metric pairwise costs over the control-grid edges.
#[derive(Debug, Clone)]
pub struct MrfProblem {
    pub num_nodes: usize,
    pub edges: Vec<[u32; 2]>,
    /// Row-major `num_nodes x num_labels` cost table.
    pub unary: Vec<f64>,
    pub labels: DisplacementLabelSet,
    /// Effective smoothness weight (lambda scaled by the population size).
    pub pairwise_weight: f64,
    pairwise_table: Vec<f64>,
    neighbors: Vec<Vec<u32>>,
}

impl MrfProblem {
    pub fn new(
        num_nodes: usize,
        edges: Vec<[u32; 2]>,
        unary: Vec<f64>,
        labels: DisplacementLabelSet,
        pairwise_weight: f64,
    ) -> Self {
        let num_labels = labels.len();
        assert_eq!(unary.len(), num_nodes * num_labels);
        assert!(unary.iter().all(|c| c.is_finite() && *c >= 0.0));
        assert!(pairwise_weight >= 0.0);

        let mut pairwise_table = vec![0.0f64; num_labels * num_labels];
        for a in 0..num_labels {
            for b in 0..num_labels {
                let da = labels.labels[a];
                let db = labels.labels[b];
                let d = [da[0] - db[0], da[1] - db[1], da[2] - db[2]];
                pairwise_table[a * num_labels + b] =
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            }
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for e in &edges {
            neighbors[e[0] as usize].push(e[1]);
            neighbors[e[1] as usize].push(e[0]);
        }
        Self {
            num_nodes,
            edges,
            unary,
            labels,
            pairwise_weight,
            pairwise_table,
            neighbors,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn unary_at(&self, node: usize, label: usize) -> f64 {
        self.unary[node * self.num_labels() + label]
    }

    /// Euclidean distance between two label displacements (mm), before the
    /// pairwise weight is applied.
    #[inline]
    pub fn pairwise_cost(&self, a: usize, b: usize) -> f64 {
        self.pairwise_table[a * self.num_labels() + b]
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node]
    }
}

/// Total energy of a labeling: unary sum plus weighted pairwise sum.
pub fn mrf_energy(problem: &MrfProblem, labeling: &Labeling) -> f64 {
    let (data, smooth) = mrf_energy_terms(problem, labeling);
    data + smooth
}

/// Data and (weighted) smoothness contributions, separately.
pub fn mrf_energy_terms(problem: &MrfProblem, labeling: &Labeling) -> (f64, f64) {
    assert_eq!(labeling.assignment.len(), problem.num_nodes);
    let mut data = 0.0f64;
    for (p, &l) in labeling.assignment.iter().enumerate() {
        data += problem.unary_at(p, l as usize);
    }
    let mut smooth = 0.0f64;
    for e in &problem.edges {
        let lp = labeling.assignment[e[0] as usize] as usize;
        let lq = labeling.assignment[e[1] as usize] as usize;
        smooth += problem.pairwise_cost(lp, lq);
    }
    (data, smooth * problem.pairwise_weight)
}

struct UnaryGeometry {
    /// Per control point: inclusive voxel bounds of its support box, or None
    /// when the box misses the volume entirely.
    boxes: Vec<Option<([usize; 3], [usize; 3])>>,
}

fn unary_geometry(grid: &ControlGrid, image_domain: &crate::volume::VolumeDomain) -> UnaryGeometry {
    let mut boxes = Vec::with_capacity(grid.num_points());
    for pk in 0..grid.grid_dims[2] {
        for pj in 0..grid.grid_dims[1] {
            for pi in 0..grid.grid_dims[0] {
                let pos = grid.control_position_mm([pi, pj, pk]);
                let mut lo = [0usize; 3];
                let mut hi = [0usize; 3];
                let mut empty = false;
                for a in 0..3 {
                    let center = pos[a] / image_domain.spacing[a];
                    let half = grid.grid_spacing_mm[a] / (2.0 * image_domain.spacing[a]);
                    let l = (center - half - 1e-9).ceil();
                    let h = (center + half + 1e-9).floor();
                    let dim = image_domain.dims[a] as f64;
                    if h < 0.0 || l > dim - 1.0 || h < l {
                        empty = true;
                        break;
                    }
                    lo[a] = l.max(0.0) as usize;
                    hi[a] = h.min(dim - 1.0) as usize;
                }
                boxes.push(if empty { None } else { Some((lo, hi)) });
            }
        }
    }
    UnaryGeometry { boxes }
}

/// 3D summed-area table (inclusive prefix sums along x, then y, then z).
fn integral_image(data: &mut [f64], dims: [usize; 3]) {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    for z in 0..nz {
        for y in 0..ny {
            let row = (z * ny + y) * nx;
            for x in 1..nx {
                data[row + x] += data[row + x - 1];
            }
        }
    }
    for z in 0..nz {
        for y in 1..ny {
            let row = (z * ny + y) * nx;
            let prev = (z * ny + y - 1) * nx;
            for x in 0..nx {
                data[row + x] += data[prev + x];
            }
        }
    }
    for z in 1..nz {
        for y in 0..ny {
            let row = (z * ny + y) * nx;
            let prev = ((z - 1) * ny + y) * nx;
            for x in 0..nx {
                data[row + x] += data[prev + x];
            }
        }
    }
}

/// Box sum over inclusive bounds from a summed-area table.
fn box_sum(sat: &[f64], dims: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> f64 {
    let nx = dims[0];
    let ny = dims[1];
    let at = |x: isize, y: isize, z: isize| -> f64 {
        if x < 0 || y < 0 || z < 0 {
            0.0
        } else {
            sat[((z as usize) * ny + y as usize) * nx + x as usize]
        }
    };
    let (x0, y0, z0) = (lo[0] as isize - 1, lo[1] as isize - 1, lo[2] as isize - 1);
    let (x1, y1, z1) = (hi[0] as isize, hi[1] as isize, hi[2] as isize);
    at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0)
        + at(x0, y0, z1)
        + at(x0, y1, z0)
        + at(x1, y0, z0)
        - at(x0, y0, z0)
}

/// Cost column of one displacement label: the per-voxel disagreement volume
/// against all other population members, box-summed around each control
/// point and normalized by the box voxel count.
fn unary_column(
    images: &[&ScalarVolume],
    priors: &[&LabelMap],
    k: usize,
    geometry: &UnaryGeometry,
    displacement_mm: [f64; 3],
    beta: f64,
) -> Vec<f64> {
    let domain = images[k].domain;
    let dims = domain.dims;
    let n = domain.num_voxels();
    let shift = [
        displacement_mm[0] / domain.spacing[0],
        displacement_mm[1] / domain.spacing[1],
        displacement_mm[2] / domain.spacing[2],
    ];

    // Shifted comparison volumes for the moving member.
    let mut diff = vec![0.0f64; n];
    for idx in 0..n {
        let [x, y, z] = domain.coords(idx);
        let p = [
            x as f64 + shift[0],
            y as f64 + shift[1],
            z as f64 + shift[2],
        ];
        let moved = images[k].sample_trilinear(p);
        let mut cost = 0.0f64;
        for (i, img) in images.iter().enumerate() {
            if i != k {
                cost += (img.data[idx] as f64 - moved).abs();
            }
        }
        if beta > 0.0 {
            let moved_label = priors[k].sample_nearest(p);
            let mut disagree = 0usize;
            for (i, prior) in priors.iter().enumerate() {
                if i != k && prior.data[idx] != moved_label {
                    disagree += 1;
                }
            }
            cost += beta * disagree as f64;
        }
        diff[idx] = cost;
    }

    integral_image(&mut diff, dims);

    geometry
        .boxes
        .iter()
        .map(|b| match b {
            Some((lo, hi)) => {
                let count = (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
                let s = box_sum(&diff, dims, *lo, *hi) / count as f64;
                s.max(0.0)
            }
            None => 0.0,
        })
        .collect()
}

fn build_unary_impl(
    images: &[&ScalarVolume],
    priors: &[&LabelMap],
    k: usize,
    grid: &ControlGrid,
    labels: &DisplacementLabelSet,
    beta: f64,
    sequential: bool,
) -> Result<Vec<f64>> {
    if images.len() < 2 {
        return Err(CosegError::Config(
            "population registration requires at least 2 volumes".into(),
        ));
    }
    assert!(k < images.len());
    let domain = images[k].domain;
    for img in images {
        domain.check_same(&img.domain)?;
    }
    if beta > 0.0 {
        assert_eq!(priors.len(), images.len());
        for prior in priors {
            domain.check_same(&prior.domain)?;
        }
    }

    let geometry = unary_geometry(grid, &domain);
    let num_labels = labels.len();
    let columns = if sequential {
        map_indexed_seq(num_labels, |l| {
            unary_column(images, priors, k, &geometry, labels.labels[l], beta)
        })
    } else {
        map_indexed(num_labels, |l| {
            unary_column(images, priors, k, &geometry, labels.labels[l], beta)
        })
    };

    let num_nodes = grid.num_points();
    let mut unary = vec![0.0f64; num_nodes * num_labels];
    for (l, col) in columns.iter().enumerate() {
        for (p, &c) in col.iter().enumerate() {
            unary[p * num_labels + l] = c;
        }
    }
    Ok(unary)
}

/// Unary cost table for registering member `k` against all others: per
/// control point and label, the box-averaged sum of absolute intensity
/// differences plus `beta` times the count of argmax-label disagreements.
/// With `beta == 0` the prior inputs are never read.
pub fn build_unary(
    images: &[&ScalarVolume],
    priors: &[&LabelMap],
    k: usize,
    grid: &ControlGrid,
    labels: &DisplacementLabelSet,
    beta: f64,
) -> Result<Vec<f64>> {
    build_unary_impl(images, priors, k, grid, labels, beta, false)
}

/// Sequential reference path for [`build_unary`]; used by tests and benches.
pub fn build_unary_seq(
    images: &[&ScalarVolume],
    priors: &[&LabelMap],
    k: usize,
    grid: &ControlGrid,
    labels: &DisplacementLabelSet,
    beta: f64,
) -> Result<Vec<f64>> {
    build_unary_impl(images, priors, k, grid, labels, beta, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeDomain;

    fn domain(dims: [usize; 3]) -> VolumeDomain {
        VolumeDomain::new(dims, [1.0; 3], [0.0; 3])
    }

    #[test]
    fn label_set_counts_and_norms() {
        let set = build_label_set([10.0; 3], 1, 1.0);
        assert_eq!(set.len(), 7);
        assert_eq!(set.labels[0], [0.0; 3]);
        for l in &set.labels[1..] {
            let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            assert!((norm - 4.0).abs() < 1e-12);
        }

        let set4 = build_label_set([10.0; 3], 4, 1.0);
        assert_eq!(set4.len(), 25);
        for l in &set4.labels {
            let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            assert!(norm <= 0.4 * 10.0 + 1e-12);
        }
    }

    #[test]
    fn pairwise_is_a_symmetric_metric() {
        let set = build_label_set([10.0; 3], 2, 1.0);
        let k = set.len();
        let problem = MrfProblem::new(1, vec![], vec![0.0; k], set, 1.0);
        for a in 0..k {
            assert_eq!(problem.pairwise_cost(a, a), 0.0);
            for b in 0..k {
                assert_eq!(problem.pairwise_cost(a, b), problem.pairwise_cost(b, a));
            }
        }
        // +2 mm and -2 mm along x are 4 mm apart: labels 1 and 2 at steps=2
        // have magnitude 4 (cap) and 2.
        let la = problem.labels.labels.iter().position(|l| l[0] == 2.0).unwrap();
        let lb = problem.labels.labels.iter().position(|l| l[0] == -2.0).unwrap();
        assert!((problem.pairwise_cost(la, lb) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn energy_arithmetic() {
        let set = build_label_set([10.0; 3], 1, 1.0);
        let k = set.len();
        // two nodes, one edge, zero unaries, weight 5
        let problem = MrfProblem::new(2, vec![[0, 1]], vec![0.0; 2 * k], set, 5.0);
        let uniform = Labeling::uniform(2, 0);
        assert_eq!(mrf_energy(&problem, &uniform), 0.0);

        // pick two labels 1 mm apart: magnitudes at steps=1 are the 4 mm cap,
        // so rebuild with a spacing that gives 1 mm steps (0.4 * 2.5 = 1).
        let set = build_label_set([2.5; 3], 1, 1.0);
        let k = set.len();
        let problem = MrfProblem::new(2, vec![[0, 1]], vec![0.0; 2 * k], set, 5.0);
        let zero = 0u16;
        let plus_x = problem
            .labels
            .labels
            .iter()
            .position(|l| (l[0] - 1.0).abs() < 1e-12)
            .unwrap() as u16;
        let labeling = Labeling {
            assignment: vec![zero, plus_x],
        };
        let (data, smooth) = mrf_energy_terms(&problem, &labeling);
        assert_eq!(data, 0.0);
        assert!((smooth - 5.0).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_independent_recomputation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let set = build_label_set([8.0; 3], 1, 1.0);
        let nl = set.len();
        let nn = 5;
        let edges = vec![[0u32, 1], [1, 2], [2, 3], [3, 4], [0, 4]];
        let unary: Vec<f64> = (0..nn * nl).map(|_| rng.gen::<f64>()).collect();
        let problem = MrfProblem::new(nn, edges.clone(), unary.clone(), set.clone(), 2.5);
        let labeling = Labeling {
            assignment: (0..nn).map(|_| rng.gen_range(0..nl) as u16).collect(),
        };

        // plain second implementation
        let mut expected = 0.0f64;
        for p in 0..nn {
            expected += unary[p * nl + labeling.assignment[p] as usize];
        }
        for e in &edges {
            let a = set.labels[labeling.assignment[e[0] as usize] as usize];
            let b = set.labels[labeling.assignment[e[1] as usize] as usize];
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            expected += 2.5 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        }
        assert!((mrf_energy(&problem, &labeling) - expected).abs() < 1e-12);
    }

    #[test]
    fn grid_edges_unique_and_bounded() {
        let edges = grid_edges([3, 3, 3]);
        assert_eq!(edges.len(), 3 * (2 * 3 * 3));
        let mut seen = std::collections::HashSet::new();
        let mut degree = vec![0usize; 27];
        for e in &edges {
            assert!(seen.insert((e[0], e[1])));
            assert!(e[0] < e[1]);
            degree[e[0] as usize] += 1;
            degree[e[1] as usize] += 1;
        }
        assert!(degree.iter().all(|&d| d <= 6));
        assert_eq!(degree[13], 6); // center node
    }

    /// Dyadic test volumes (values k/64) make every cost a small multiple of
    /// 2^-6, so sums are exact in f64 regardless of association order and the
    /// integral-image path must match direct summation bit for bit.
    fn dyadic_volume(d: VolumeDomain, seed: u64) -> ScalarVolume {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d.num_voxels())
            .map(|_| rng.gen_range(0..=64) as f32 / 64.0)
            .collect();
        ScalarVolume::new(d, data)
    }

    fn brute_force_unary(
        images: &[&ScalarVolume],
        priors: &[&LabelMap],
        k: usize,
        grid: &ControlGrid,
        labels: &DisplacementLabelSet,
        beta: f64,
    ) -> Vec<f64> {
        let domain = images[k].domain;
        let geometry = unary_geometry(grid, &domain);
        let nl = labels.len();
        let mut unary = vec![0.0f64; grid.num_points() * nl];
        for (p, b) in geometry.boxes.iter().enumerate() {
            let Some((lo, hi)) = b else { continue };
            for (l, disp) in labels.labels.iter().enumerate() {
                let mut sum = 0.0f64;
                let mut count = 0usize;
                for z in lo[2]..=hi[2] {
                    for y in lo[1]..=hi[1] {
                        for x in lo[0]..=hi[0] {
                            let idx = domain.index(x, y, z);
                            let pt = [
                                x as f64 + disp[0] / domain.spacing[0],
                                y as f64 + disp[1] / domain.spacing[1],
                                z as f64 + disp[2] / domain.spacing[2],
                            ];
                            let moved = images[k].sample_trilinear(pt);
                            for (i, img) in images.iter().enumerate() {
                                if i != k {
                                    sum += (img.data[idx] as f64 - moved).abs();
                                }
                            }
                            if beta > 0.0 {
                                let ml = priors[k].sample_nearest(pt);
                                for (i, prior) in priors.iter().enumerate() {
                                    if i != k && prior.data[idx] != ml {
                                        sum += beta;
                                    }
                                }
                            }
                            count += 1;
                        }
                    }
                }
                unary[p * nl + l] = sum / count as f64;
            }
        }
        unary
    }

    #[test]
    fn unary_zero_for_identical_population_at_zero_label() {
        let d = domain([8, 8, 8]);
        let img = dyadic_volume(d, 1);
        let prior = LabelMap::new(d, (0..512).map(|i| (i % 3) as u8).collect());
        let grid = ControlGrid::identity(&d, [4.0; 3]).unwrap();
        let labels = build_label_set([4.0; 3], 1, 1.0);
        let unary = build_unary(&[&img, &img], &[&prior, &prior], 0, &grid, &labels, 100.0).unwrap();
        let nl = labels.len();
        for p in 0..grid.num_points() {
            assert_eq!(unary[p * nl], 0.0, "node {p}");
        }
    }

    #[test]
    fn unary_constant_offset() {
        let d = domain([8, 8, 8]);
        let a = ScalarVolume::new(d, vec![0.2; 512]);
        let b = ScalarVolume::new(d, vec![0.5; 512]);
        let prior = LabelMap::zeros(d);
        let grid = ControlGrid::identity(&d, [4.0; 3]).unwrap();
        let labels = build_label_set([4.0; 3], 1, 1.0);
        let unary = build_unary(&[&a, &b], &[&prior, &prior], 0, &grid, &labels, 0.0).unwrap();
        let nl = labels.len();
        for p in 0..grid.num_points() {
            for l in 0..nl {
                let c = unary[p * nl + l];
                if c != 0.0 {
                    assert!((c - 0.3).abs() < 1e-9, "cost {c}");
                }
            }
        }
    }

    #[test]
    fn unary_matches_brute_force_exactly_on_dyadic_volumes() {
        let d = domain([8, 8, 8]);
        let imgs: Vec<ScalarVolume> = (0..3).map(|s| dyadic_volume(d, s)).collect();
        let priors: Vec<LabelMap> = (0..3)
            .map(|s| {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + s);
                LabelMap::new(d, (0..512).map(|_| rng.gen_range(0..3u8)).collect())
            })
            .collect();
        let img_refs: Vec<&ScalarVolume> = imgs.iter().collect();
        let prior_refs: Vec<&LabelMap> = priors.iter().collect();
        let grid = ControlGrid::identity(&d, [7.0; 3]).unwrap();
        let labels = build_label_set([7.0; 3], 2, 1.0);

        let fast = build_unary(&img_refs, &prior_refs, 1, &grid, &labels, 100.0).unwrap();
        let slow = brute_force_unary(&img_refs, &prior_refs, 1, &grid, &labels, 100.0);
        assert_eq!(fast, slow);
    }

    #[test]
    fn unary_with_zero_beta_ignores_priors() {
        let d = domain([8, 8, 8]);
        let imgs: Vec<ScalarVolume> = (0..2).map(|s| dyadic_volume(d, 20 + s)).collect();
        let img_refs: Vec<&ScalarVolume> = imgs.iter().collect();
        let pa = LabelMap::zeros(d);
        let pb = LabelMap::new(d, (0..512).map(|i| (i % 4) as u8).collect());
        let grid = ControlGrid::identity(&d, [4.0; 3]).unwrap();
        let labels = build_label_set([4.0; 3], 2, 1.0);
        let u1 = build_unary(&img_refs, &[&pa, &pa], 0, &grid, &labels, 0.0).unwrap();
        let u2 = build_unary(&img_refs, &[&pb, &pb], 0, &grid, &labels, 0.0).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn unary_parallel_matches_sequential() {
        let d = domain([8, 8, 8]);
        let imgs: Vec<ScalarVolume> = (0..2).map(|s| dyadic_volume(d, 30 + s)).collect();
        let img_refs: Vec<&ScalarVolume> = imgs.iter().collect();
        let prior = LabelMap::new(d, (0..512).map(|i| (i % 2) as u8).collect());
        let grid = ControlGrid::identity(&d, [4.0; 3]).unwrap();
        let labels = build_label_set([4.0; 3], 2, 1.0);
        let par = build_unary(&img_refs, &[&prior, &prior], 0, &grid, &labels, 50.0).unwrap();
        let seq = build_unary_seq(&img_refs, &[&prior, &prior], 0, &grid, &labels, 50.0).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn unary_rejects_single_volume() {
        let d = domain([4, 4, 4]);
        let img = ScalarVolume::zeros(d);
        let prior = LabelMap::zeros(d);
        let grid = ControlGrid::identity(&d, [2.0; 3]).unwrap();
        let labels = build_label_set([2.0; 3], 1, 1.0);
        assert!(matches!(
            build_unary(&[&img], &[&prior], 0, &grid, &labels, 1.0),
            Err(CosegError::Config(_))
        ));
    }
}
