//! Gaussian smoothing and pyramid downsampling.

use super::{LabelMap, ProbabilityMap, ScalarVolume, VolumeDomain};
use crate::parallel::map_indexed;

/// Normalized Gaussian kernel with radius ceil(3 sigma).
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable Gaussian smoothing with clamp-to-edge boundaries.
pub(crate) fn gaussian_smooth(data: &[f32], dims: [usize; 3], sigma: f64) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let n = dims[0] * dims[1] * dims[2];
    let strides = [1i64, dims[0] as i64, (dims[0] * dims[1]) as i64];

    let mut cur = data.to_vec();
    for axis in 0..3 {
        let dim = dims[axis] as i64;
        let stride = strides[axis];
        let src = cur;
        cur = map_indexed(n, |idx| {
            let x = match axis {
                0 => (idx % dims[0]) as i64,
                1 => ((idx / dims[0]) % dims[1]) as i64,
                _ => (idx / (dims[0] * dims[1])) as i64,
            };
            let mut acc = 0.0f64;
            for (t, &w) in kernel.iter().enumerate() {
                let off = t as i64 - radius;
                let xs = (x + off).clamp(0, dim - 1);
                let sidx = (idx as i64 + (xs - x) * stride) as usize;
                acc += w * src[sidx] as f64;
            }
            acc as f32
        });
    }
    cur
}

fn decimated_domain(domain: &VolumeDomain, factor: usize) -> VolumeDomain {
    let dims = [
        domain.dims[0].div_ceil(factor),
        domain.dims[1].div_ceil(factor),
        domain.dims[2].div_ceil(factor),
    ];
    let spacing = [
        domain.spacing[0] * factor as f64,
        domain.spacing[1] * factor as f64,
        domain.spacing[2] * factor as f64,
    ];
    VolumeDomain::new(dims, spacing, domain.origin)
}

fn decimate(data: &[f32], dims: [usize; 3], factor: usize) -> Vec<f32> {
    let out_dims = [
        dims[0].div_ceil(factor),
        dims[1].div_ceil(factor),
        dims[2].div_ceil(factor),
    ];
    let mut out = Vec::with_capacity(out_dims[0] * out_dims[1] * out_dims[2]);
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                out.push(data[((z * factor) * dims[1] + y * factor) * dims[0] + x * factor]);
            }
        }
    }
    out
}

/// Gaussian pre-smoothing (sigma = 0.5 * factor voxels) followed by
/// decimation; output dims are ceil(dim / factor), spacing is multiplied by
/// the factor. A factor of 1 returns the input unchanged.
pub fn downsample_scalar(vol: &ScalarVolume, factor: usize) -> ScalarVolume {
    assert!(factor >= 1);
    if factor == 1 {
        return vol.clone();
    }
    let smoothed = gaussian_smooth(&vol.data, vol.domain.dims, 0.5 * factor as f64);
    ScalarVolume::new(
        decimated_domain(&vol.domain, factor),
        decimate(&smoothed, vol.domain.dims, factor),
    )
}

/// Nearest decimation for label maps.
pub fn downsample_labels(map: &LabelMap, factor: usize) -> LabelMap {
    assert!(factor >= 1);
    if factor == 1 {
        return map.clone();
    }
    let dims = map.domain.dims;
    let out_domain = decimated_domain(&map.domain, factor);
    let mut out = Vec::with_capacity(out_domain.num_voxels());
    for z in 0..out_domain.dims[2] {
        for y in 0..out_domain.dims[1] {
            for x in 0..out_domain.dims[0] {
                out.push(map.data[((z * factor) * dims[1] + y * factor) * dims[0] + x * factor]);
            }
        }
    }
    LabelMap::new(out_domain, out)
}

/// Per-channel smoothing and decimation, renormalized per voxel.
pub fn downsample_probability(prob: &ProbabilityMap, factor: usize) -> ProbabilityMap {
    assert!(factor >= 1);
    if factor == 1 {
        return prob.clone();
    }
    let out_domain = decimated_domain(&prob.domain, factor);
    let out_n = out_domain.num_voxels();
    let mut data = Vec::with_capacity(prob.num_classes * out_n);
    for c in 0..prob.num_classes {
        let smoothed = gaussian_smooth(prob.channel(c), prob.domain.dims, 0.5 * factor as f64);
        data.extend(decimate(&smoothed, prob.domain.dims, factor));
    }
    let mut out = ProbabilityMap::new(out_domain, prob.num_classes, data);
    out.renormalize();
    out
}
