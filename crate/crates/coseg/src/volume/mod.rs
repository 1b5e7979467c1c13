//! Volume domain model: scalar intensity grids, hard label maps and per-class
//! probability maps, plus interpolation and intensity normalization.
//!
//! All voxel data is stored row-major with x fastest. Multi-volume operations
//! require co-domain inputs (equal dims, spacing and origin).

mod filter;
pub(crate) mod metaimage;

pub use filter::{downsample_labels, downsample_probability, downsample_scalar};
pub use metaimage::{load_metaimage, LoadedVolume};

pub(crate) use filter::gaussian_smooth;

use crate::error::{CosegError, Result};

/// Geometry of a voxel grid: size, physical spacing (mm) and origin (mm).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VolumeDomain {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl VolumeDomain {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "dims must be >= 1");
        assert!(spacing.iter().all(|&s| s > 0.0), "spacing must be > 0");
        Self {
            dims,
            spacing,
            origin,
        }
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    /// Physical extent along each axis, distance between first and last voxel
    /// centers (mm).
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            (self.dims[0] - 1) as f64 * self.spacing[0],
            (self.dims[1] - 1) as f64 * self.spacing[1],
            (self.dims[2] - 1) as f64 * self.spacing[2],
        ]
    }

    pub fn check_same(&self, other: &VolumeDomain) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(CosegError::DomainMismatch(format!(
                "{:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )))
        }
    }
}

/// A 3D scalar intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub domain: VolumeDomain,
    pub data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(domain: VolumeDomain, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), domain.num_voxels(), "data length mismatch");
        Self { domain, data }
    }

    pub fn zeros(domain: VolumeDomain) -> Self {
        let n = domain.num_voxels();
        Self::new(domain, vec![0.0; n])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.domain.index(x, y, z)]
    }

    /// Trilinear interpolation at a point in voxel coordinates, clamping to
    /// the edge outside the domain. Exact on lattice points.
    pub fn sample_trilinear(&self, point: [f64; 3]) -> f64 {
        let d = &self.domain;
        let (x0, fx) = clamp_axis(point[0], d.dims[0]);
        let (y0, fy) = clamp_axis(point[1], d.dims[1]);
        let (z0, fz) = clamp_axis(point[2], d.dims[2]);
        let x1 = (x0 + 1).min(d.dims[0] - 1);
        let y1 = (y0 + 1).min(d.dims[1] - 1);
        let z1 = (z0 + 1).min(d.dims[2] - 1);

        let v = |x, y, z| self.data[d.index(x, y, z)] as f64;
        let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
        let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
        let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
        let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }
}

/// Lower lattice index plus fractional offset after clamping `p` into the
/// voxel-center hull `[0, dim-1]`.
#[inline]
fn clamp_axis(p: f64, dim: usize) -> (usize, f64) {
    let max = (dim - 1) as f64;
    let p = p.clamp(0.0, max);
    if dim == 1 {
        return (0, 0.0);
    }
    let i0 = (p.floor() as usize).min(dim - 2);
    (i0, p - i0 as f64)
}

/// Nearest-integer coordinate; ties at .5 round toward negative infinity.
#[inline]
pub(crate) fn nearest_index(p: f64, dim: usize) -> usize {
    let max = (dim - 1) as f64;
    let p = p.clamp(0.0, max);
    ((p - 0.5).ceil() as usize).min(dim - 1)
}

/// A 3D grid of class indices; class 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub domain: VolumeDomain,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(domain: VolumeDomain, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), domain.num_voxels(), "data length mismatch");
        Self { domain, data }
    }

    pub fn zeros(domain: VolumeDomain) -> Self {
        let n = domain.num_voxels();
        Self::new(domain, vec![0u8; n])
    }

    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Label of the nearest lattice voxel after clamping; ties round toward
    /// negative infinity.
    pub fn sample_nearest(&self, point: [f64; 3]) -> u8 {
        let d = &self.domain;
        let x = nearest_index(point[0], d.dims[0]);
        let y = nearest_index(point[1], d.dims[1]);
        let z = nearest_index(point[2], d.dims[2]);
        self.data[d.index(x, y, z)]
    }
}

/// Per-voxel class likelihoods, stored channel-planar (`data[c * nvox + v]`).
/// Per-voxel sums are kept at 1 within 1e-4 by renormalizing on load and
/// after every operation that produces one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub domain: VolumeDomain,
    pub num_classes: usize,
    pub data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(domain: VolumeDomain, num_classes: usize, data: Vec<f32>) -> Self {
        assert!(num_classes >= 1);
        assert_eq!(data.len(), num_classes * domain.num_voxels());
        Self {
            domain,
            num_classes,
            data,
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.domain.num_voxels();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, voxel: usize) -> f32 {
        self.data[c * self.domain.num_voxels() + voxel]
    }

    /// One-hot encoding of a hard label map.
    pub fn one_hot(labels: &LabelMap, num_classes: usize) -> Self {
        assert!(
            usize::from(labels.max_label()) < num_classes,
            "label exceeds num_classes"
        );
        let n = labels.domain.num_voxels();
        let mut data = vec![0.0f32; num_classes * n];
        for (v, &l) in labels.data.iter().enumerate() {
            data[usize::from(l) * n + v] = 1.0;
        }
        Self::new(labels.domain, num_classes, data)
    }

    /// Clip values into [0,1] and rescale every voxel's likelihoods to sum
    /// to 1. Voxels whose likelihoods sum to zero become background one-hot.
    pub fn renormalize(&mut self) {
        let n = self.domain.num_voxels();
        let c = self.num_classes;
        for v in self.data.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        for voxel in 0..n {
            let mut sum = 0.0f64;
            for ch in 0..c {
                sum += self.data[ch * n + voxel] as f64;
            }
            if sum > 0.0 {
                for ch in 0..c {
                    self.data[ch * n + voxel] = (self.data[ch * n + voxel] as f64 / sum) as f32;
                }
            } else {
                self.data[voxel] = 1.0;
                for ch in 1..c {
                    self.data[ch * n + voxel] = 0.0;
                }
            }
        }
    }
}

/// Affine min-max rescale to [0,1]. Errors on constant volumes.
pub fn normalize_intensities(vol: &ScalarVolume) -> Result<ScalarVolume> {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in &vol.data {
        min = min.min(v);
        max = max.max(v);
    }
    if !(max > min) {
        return Err(CosegError::DegenerateInput(
            "cannot normalize a constant volume".into(),
        ));
    }
    let range = max - min;
    let data = vol.data.iter().map(|&v| (v - min) / range).collect();
    Ok(ScalarVolume::new(vol.domain, data))
}

/// Per voxel, the class of maximal likelihood; ties break toward the lowest
/// class index.
pub fn argmax_labels(prob: &ProbabilityMap) -> LabelMap {
    let n = prob.domain.num_voxels();
    let mut data = vec![0u8; n];
    for voxel in 0..n {
        let mut best_c = 0usize;
        let mut best = prob.data[voxel];
        for c in 1..prob.num_classes {
            let v = prob.data[c * n + voxel];
            if v > best {
                best = v;
                best_c = c;
            }
        }
        data[voxel] = best_c as u8;
    }
    LabelMap::new(prob.domain, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_domain(dims: [usize; 3]) -> VolumeDomain {
        VolumeDomain::new(dims, [1.0; 3], [0.0; 3])
    }

    #[test]
    fn trilinear_exact_on_lattice() {
        let d = unit_domain([3, 3, 3]);
        let data: Vec<f32> = (0..27).map(|i| (i as f32) * 0.37 + 0.11).collect();
        let vol = ScalarVolume::new(d, data);
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let s = vol.sample_trilinear([x as f64, y as f64, z as f64]);
                    assert_eq!(s as f32, vol.at(x, y, z));
                }
            }
        }
    }

    #[test]
    fn trilinear_midpoint() {
        let d = unit_domain([2, 1, 1]);
        let vol = ScalarVolume::new(d, vec![0.0, 1.0]);
        assert_eq!(vol.sample_trilinear([0.5, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn trilinear_clamps_to_edge() {
        let d = unit_domain([4, 4, 4]);
        let data: Vec<f32> = (0..64).map(|i| i as f32).collect();
        let vol = ScalarVolume::new(d, data);
        assert_eq!(vol.sample_trilinear([-5.0, -5.0, -5.0]) as f32, vol.at(0, 0, 0));
        assert_eq!(
            vol.sample_trilinear([10.0, 10.0, 10.0]) as f32,
            vol.at(3, 3, 3)
        );
    }

    proptest! {
        // Linear along each axis between lattice neighbors.
        #[test]
        fn trilinear_linear_on_fibers(seed in 0u64..64, t in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = unit_domain([5, 5, 5]);
            let data: Vec<f32> = (0..125).map(|_| rng.gen::<f32>()).collect();
            let vol = ScalarVolume::new(d, data);
            let x = rng.gen_range(0..4) as f64;
            let y = rng.gen_range(0..5) as f64;
            let z = rng.gen_range(0..5) as f64;
            let a = vol.sample_trilinear([x, y, z]);
            let b = vol.sample_trilinear([x + 1.0, y, z]);
            let s = vol.sample_trilinear([x + t, y, z]);
            prop_assert!((s - (a * (1.0 - t) + b * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_ties_round_down() {
        let d = unit_domain([4, 1, 1]);
        let map = LabelMap::new(d, vec![0, 1, 2, 3]);
        assert_eq!(map.sample_nearest([0.5, 0.0, 0.0]), 0);
        assert_eq!(map.sample_nearest([1.5, 0.0, 0.0]), 1);
        assert_eq!(map.sample_nearest([1.51, 0.0, 0.0]), 2);
        assert_eq!(map.sample_nearest([-3.0, 0.0, 0.0]), 0);
        assert_eq!(map.sample_nearest([9.0, 0.0, 0.0]), 3);
    }

    #[test]
    fn normalize_min_max() {
        let d = unit_domain([3, 1, 1]);
        let vol = ScalarVolume::new(d, vec![10.0, 20.0, 30.0]);
        let n = normalize_intensities(&vol).unwrap();
        assert_eq!(n.data, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_idempotent_on_unit_range() {
        let d = unit_domain([4, 1, 1]);
        let vol = ScalarVolume::new(d, vec![0.0, 0.25, 0.75, 1.0]);
        let n = normalize_intensities(&vol).unwrap();
        assert_eq!(n.data, vol.data);
    }

    #[test]
    fn normalize_rejects_constant() {
        let d = unit_domain([2, 2, 2]);
        let vol = ScalarVolume::new(d, vec![3.0; 8]);
        assert!(matches!(
            normalize_intensities(&vol),
            Err(CosegError::DegenerateInput(_))
        ));
    }

    #[test]
    fn argmax_basic_and_ties() {
        let d = unit_domain([1, 1, 1]);
        let p = ProbabilityMap::new(d, 3, vec![0.1, 0.7, 0.2]);
        assert_eq!(argmax_labels(&p).data, vec![1]);
        let q = ProbabilityMap::new(d, 2, vec![0.5, 0.5]);
        assert_eq!(argmax_labels(&q).data, vec![0]);
    }

    proptest! {
        #[test]
        fn argmax_inverts_one_hot(labels in proptest::collection::vec(0u8..5, 27)) {
            let d = unit_domain([3, 3, 3]);
            let map = LabelMap::new(d, labels);
            let hot = ProbabilityMap::one_hot(&map, 5);
            prop_assert_eq!(argmax_labels(&hot), map);
        }
    }

    #[test]
    fn renormalize_handles_zero_and_clipping() {
        let d = unit_domain([2, 1, 1]);
        // voxel 0 sums to 0, voxel 1 has an out-of-range value
        let mut p = ProbabilityMap::new(d, 2, vec![0.0, 1.5, 0.0, 0.5]);
        p.renormalize();
        assert_eq!(p.at(0, 0), 1.0);
        assert_eq!(p.at(1, 0), 0.0);
        let sum1 = p.at(0, 1) + p.at(1, 1);
        assert!((sum1 - 1.0).abs() < 1e-6);
    }
}
