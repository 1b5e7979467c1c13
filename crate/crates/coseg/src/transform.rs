//! Deformation representation and resampling: sparse control grids, dense
//! per-voxel displacement fields, backward warping, composition and
//! fixed-point inversion.
//!
//! Displacements are stored in millimeters with the convention
//! `T(x) = x + u(x)`. All fields are immutable values; the per-voxel
//! operations are pure and may run in parallel without changing results.

use crate::error::{CosegError, Result};
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::volume::{LabelMap, ProbabilityMap, ScalarVolume, VolumeDomain};
use crate::volume::metaimage::{read_header_and_payload, write_metaimage, ElementType};
use std::path::Path;

/// Interpolation basis used to spread control-point displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    CubicBspline,
    Trilinear,
}

/// Sparse lattice of displacement vectors parametrizing a deformation of
/// `domain`. The lattice covers the image with one layer of boundary control
/// points on each side; control point `p` sits at `(p - 1) * grid_spacing`
/// millimeters from the volume origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub domain: VolumeDomain,
    pub grid_spacing_mm: [f64; 3],
    pub grid_dims: [usize; 3],
    pub displacements: Vec<[f64; 3]>,
}

impl ControlGrid {
    /// All-zero grid covering `domain` at the given spacing.
    pub fn identity(domain: &VolumeDomain, grid_spacing_mm: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if grid_spacing_mm[a] < 2.0 * domain.spacing[a] {
                return Err(CosegError::Config(format!(
                    "control grid spacing {} mm is below 2 voxels ({} mm) on axis {a}",
                    grid_spacing_mm[a],
                    2.0 * domain.spacing[a]
                )));
            }
        }
        let extent = domain.extent_mm();
        let grid_dims = [
            (extent[0] / grid_spacing_mm[0]).floor() as usize + 4,
            (extent[1] / grid_spacing_mm[1]).floor() as usize + 4,
            (extent[2] / grid_spacing_mm[2]).floor() as usize + 4,
        ];
        let k = grid_dims[0] * grid_dims[1] * grid_dims[2];
        Ok(Self {
            domain: *domain,
            grid_spacing_mm,
            grid_dims,
            displacements: vec![[0.0; 3]; k],
        })
    }

    pub fn num_points(&self) -> usize {
        self.grid_dims[0] * self.grid_dims[1] * self.grid_dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.grid_dims[1] + j) * self.grid_dims[0] + i
    }

    /// Control point position in millimeters relative to the volume origin.
    pub fn control_position_mm(&self, p: [usize; 3]) -> [f64; 3] {
        [
            (p[0] as f64 - 1.0) * self.grid_spacing_mm[0],
            (p[1] as f64 - 1.0) * self.grid_spacing_mm[1],
            (p[2] as f64 - 1.0) * self.grid_spacing_mm[2],
        ]
    }

    pub fn max_displacement_mm(&self) -> f64 {
        self.displacements
            .iter()
            .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Per-voxel displacement field in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDeformationField {
    pub domain: VolumeDomain,
    pub data: Vec<[f64; 3]>,
}

impl DenseDeformationField {
    pub fn new(domain: VolumeDomain, data: Vec<[f64; 3]>) -> Self {
        assert_eq!(data.len(), domain.num_voxels());
        Self { domain, data }
    }

    pub fn identity(domain: VolumeDomain) -> Self {
        let n = domain.num_voxels();
        Self::new(domain, vec![[0.0; 3]; n])
    }

    /// Trilinear interpolation of the displacement vector at a point in
    /// voxel coordinates, clamping to the edge.
    pub fn sample_mm(&self, point: [f64; 3]) -> [f64; 3] {
        let d = &self.domain;
        let clamp = |p: f64, dim: usize| -> (usize, f64) {
            let max = (dim - 1) as f64;
            let p = p.clamp(0.0, max);
            if dim == 1 {
                return (0, 0.0);
            }
            let i0 = (p.floor() as usize).min(dim - 2);
            (i0, p - i0 as f64)
        };
        let (x0, fx) = clamp(point[0], d.dims[0]);
        let (y0, fy) = clamp(point[1], d.dims[1]);
        let (z0, fz) = clamp(point[2], d.dims[2]);
        let x1 = (x0 + 1).min(d.dims[0] - 1);
        let y1 = (y0 + 1).min(d.dims[1] - 1);
        let z1 = (z0 + 1).min(d.dims[2] - 1);

        let mut out = [0.0f64; 3];
        for (axis, o) in out.iter_mut().enumerate() {
            let v = |x: usize, y: usize, z: usize| self.data[d.index(x, y, z)][axis];
            let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
            let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
            let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
            let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
            let c0 = c00 * (1.0 - fy) + c10 * fy;
            let c1 = c01 * (1.0 - fy) + c11 * fy;
            *o = c0 * (1.0 - fz) + c1 * fz;
        }
        out
    }

    /// Largest per-voxel displacement norm, measured in voxel units.
    pub fn max_displacement_voxels(&self) -> f64 {
        let s = self.domain.spacing;
        self.data
            .iter()
            .map(|u| {
                let v = [u[0] / s[0], u[1] / s[1], u[2] / s[2]];
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Mean displacement vector in millimeters.
    pub fn mean_displacement_mm(&self) -> [f64; 3] {
        let n = self.data.len() as f64;
        let mut acc = [0.0f64; 3];
        for u in &self.data {
            acc[0] += u[0];
            acc[1] += u[1];
            acc[2] += u[2];
        }
        [acc[0] / n, acc[1] / n, acc[2] / n]
    }

    /// Serialize as a 4D MetaImage with the 3 vector components as the 4th
    /// axis (float32 payload).
    pub fn save_metaimage(&self, path: &Path) -> Result<()> {
        let n = self.domain.num_voxels();
        let mut payload = Vec::with_capacity(3 * n * 4);
        for axis in 0..3 {
            for u in &self.data {
                payload.extend((u[axis] as f32).to_le_bytes());
            }
        }
        let dims = [
            self.domain.dims[0],
            self.domain.dims[1],
            self.domain.dims[2],
            3,
        ];
        let spacing = [
            self.domain.spacing[0],
            self.domain.spacing[1],
            self.domain.spacing[2],
            1.0,
        ];
        let offset = [
            self.domain.origin[0],
            self.domain.origin[1],
            self.domain.origin[2],
            0.0,
        ];
        write_metaimage(path, &dims, &spacing, &offset, ElementType::F32, &payload)
    }

    pub fn load_metaimage(path: &Path) -> Result<Self> {
        let (header, payload) = read_header_and_payload(path)?;
        if header.ndims != 4 || header.dim_size[3] != 3 {
            return Err(CosegError::Format {
                path: path.to_path_buf(),
                detail: "deformation fields require NDims = 4 with 3 components".into(),
            });
        }
        if header.element_type != ElementType::F32 {
            return Err(CosegError::Format {
                path: path.to_path_buf(),
                detail: "deformation fields require ElementType = MET_FLOAT".into(),
            });
        }
        let domain = VolumeDomain::new(
            [header.dim_size[0], header.dim_size[1], header.dim_size[2]],
            [header.spacing[0], header.spacing[1], header.spacing[2]],
            [header.offset[0], header.offset[1], header.offset[2]],
        );
        let n = domain.num_voxels();
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let data = (0..n)
            .map(|v| {
                [
                    floats[v] as f64,
                    floats[n + v] as f64,
                    floats[2 * n + v] as f64,
                ]
            })
            .collect();
        Ok(Self::new(domain, data))
    }
}

/// Cubic B-spline weights for the 4 control points around a sample with
/// fractional offset `f` in [0,1).
#[inline]
fn bspline_weights(f: f64) -> [f64; 4] {
    let f2 = f * f;
    let f3 = f2 * f;
    [
        (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0,
        (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0,
        (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0,
        f3 / 6.0,
    ]
}

fn densify_voxel(grid: &ControlGrid, idx: usize, basis: BasisKind) -> [f64; 3] {
    let d = &grid.domain;
    let [x, y, z] = d.coords(idx);
    // Grid coordinate: control point 1 sits on the first voxel center.
    let g = [
        x as f64 * d.spacing[0] / grid.grid_spacing_mm[0] + 1.0,
        y as f64 * d.spacing[1] / grid.grid_spacing_mm[1] + 1.0,
        z as f64 * d.spacing[2] / grid.grid_spacing_mm[2] + 1.0,
    ];
    let i0 = [g[0].floor(), g[1].floor(), g[2].floor()];
    let f = [g[0] - i0[0], g[1] - i0[1], g[2] - i0[2]];
    let i0 = [i0[0] as usize, i0[1] as usize, i0[2] as usize];

    let mut out = [0.0f64; 3];
    match basis {
        BasisKind::CubicBspline => {
            let wx = bspline_weights(f[0]);
            let wy = bspline_weights(f[1]);
            let wz = bspline_weights(f[2]);
            for (dk, &wzk) in wz.iter().enumerate() {
                for (dj, &wyj) in wy.iter().enumerate() {
                    let wyz = wzk * wyj;
                    for (di, &wxi) in wx.iter().enumerate() {
                        let w = wyz * wxi;
                        let p = grid.index(i0[0] - 1 + di, i0[1] - 1 + dj, i0[2] - 1 + dk);
                        let dp = grid.displacements[p];
                        out[0] += w * dp[0];
                        out[1] += w * dp[1];
                        out[2] += w * dp[2];
                    }
                }
            }
        }
        BasisKind::Trilinear => {
            let wx = [1.0 - f[0], f[0]];
            let wy = [1.0 - f[1], f[1]];
            let wz = [1.0 - f[2], f[2]];
            for (dk, &wzk) in wz.iter().enumerate() {
                for (dj, &wyj) in wy.iter().enumerate() {
                    let wyz = wzk * wyj;
                    for (di, &wxi) in wx.iter().enumerate() {
                        let w = wyz * wxi;
                        let p = grid.index(i0[0] + di, i0[1] + dj, i0[2] + dk);
                        let dp = grid.displacements[p];
                        out[0] += w * dp[0];
                        out[1] += w * dp[1];
                        out[2] += w * dp[2];
                    }
                }
            }
        }
    }
    out
}

/// Evaluate the control grid into a dense per-voxel field,
/// `u(x) = sum_p B(x - p) d_p` over the surrounding support window.
pub fn densify(grid: &ControlGrid, basis: BasisKind) -> DenseDeformationField {
    let n = grid.domain.num_voxels();
    let data = map_indexed(n, |idx| densify_voxel(grid, idx, basis));
    DenseDeformationField::new(grid.domain, data)
}

/// Sequential reference path for [`densify`]; used by tests and benches.
pub fn densify_seq(grid: &ControlGrid, basis: BasisKind) -> DenseDeformationField {
    let n = grid.domain.num_voxels();
    let data = map_indexed_seq(n, |idx| densify_voxel(grid, idx, basis));
    DenseDeformationField::new(grid.domain, data)
}

#[inline]
fn warp_point(domain: &VolumeDomain, idx: usize, u: &[f64; 3]) -> [f64; 3] {
    let [x, y, z] = domain.coords(idx);
    [
        x as f64 + u[0] / domain.spacing[0],
        y as f64 + u[1] / domain.spacing[1],
        z as f64 + u[2] / domain.spacing[2],
    ]
}

/// Backward warping: `out(x) = vol(x + u(x))` with trilinear sampling.
pub fn warp_scalar(vol: &ScalarVolume, field: &DenseDeformationField) -> Result<ScalarVolume> {
    vol.domain.check_same(&field.domain)?;
    let n = vol.domain.num_voxels();
    let data = map_indexed(n, |idx| {
        vol.sample_trilinear(warp_point(&vol.domain, idx, &field.data[idx])) as f32
    });
    Ok(ScalarVolume::new(vol.domain, data))
}

/// Sequential reference path for [`warp_scalar`]; used by tests and benches.
pub fn warp_scalar_seq(vol: &ScalarVolume, field: &DenseDeformationField) -> Result<ScalarVolume> {
    vol.domain.check_same(&field.domain)?;
    let n = vol.domain.num_voxels();
    let data = map_indexed_seq(n, |idx| {
        vol.sample_trilinear(warp_point(&vol.domain, idx, &field.data[idx])) as f32
    });
    Ok(ScalarVolume::new(vol.domain, data))
}

/// Nearest-neighbor backward warping of hard labels.
pub fn warp_labels(map: &LabelMap, field: &DenseDeformationField) -> Result<LabelMap> {
    map.domain.check_same(&field.domain)?;
    let n = map.domain.num_voxels();
    let data = map_indexed(n, |idx| {
        map.sample_nearest(warp_point(&map.domain, idx, &field.data[idx]))
    });
    Ok(LabelMap::new(map.domain, data))
}

/// Backward warping of each class channel independently, renormalized per
/// voxel. Samples outside the domain return the background one-hot.
pub fn warp_probability(
    prob: &ProbabilityMap,
    field: &DenseDeformationField,
) -> Result<ProbabilityMap> {
    prob.domain.check_same(&field.domain)?;
    let d = prob.domain;
    let n = d.num_voxels();
    let c = prob.num_classes;
    let rows = map_indexed(n, |idx| {
        let p = warp_point(&d, idx, &field.data[idx]);
        let outside = p[0] < 0.0
            || p[1] < 0.0
            || p[2] < 0.0
            || p[0] > (d.dims[0] - 1) as f64
            || p[1] > (d.dims[1] - 1) as f64
            || p[2] > (d.dims[2] - 1) as f64;
        let mut row = vec![0.0f32; c];
        if outside {
            row[0] = 1.0;
        } else {
            for (ch, slot) in row.iter_mut().enumerate() {
                *slot = sample_channel(prob, ch, p);
            }
        }
        row
    });
    let mut data = vec![0.0f32; c * n];
    for (idx, row) in rows.iter().enumerate() {
        for ch in 0..c {
            data[ch * n + idx] = row[ch];
        }
    }
    let mut out = ProbabilityMap::new(d, c, data);
    out.renormalize();
    Ok(out)
}

fn sample_channel(prob: &ProbabilityMap, ch: usize, p: [f64; 3]) -> f32 {
    let d = &prob.domain;
    let n = d.num_voxels();
    let base = ch * n;
    let clamp = |p: f64, dim: usize| -> (usize, f64) {
        let max = (dim - 1) as f64;
        let p = p.clamp(0.0, max);
        if dim == 1 {
            return (0, 0.0);
        }
        let i0 = (p.floor() as usize).min(dim - 2);
        (i0, p - i0 as f64)
    };
    let (x0, fx) = clamp(p[0], d.dims[0]);
    let (y0, fy) = clamp(p[1], d.dims[1]);
    let (z0, fz) = clamp(p[2], d.dims[2]);
    let x1 = (x0 + 1).min(d.dims[0] - 1);
    let y1 = (y0 + 1).min(d.dims[1] - 1);
    let z1 = (z0 + 1).min(d.dims[2] - 1);
    let v = |x: usize, y: usize, z: usize| prob.data[base + d.index(x, y, z)] as f64;
    let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
    let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
    let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
    let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    (c0 * (1.0 - fz) + c1 * fz) as f32
}

/// Chain two fields so that warping by the result equals warping by `outer`
/// first and `inner` second:
/// `u_out(x) = u_inner(x) + u_outer(x + u_inner(x))`.
pub fn compose(
    outer: &DenseDeformationField,
    inner: &DenseDeformationField,
) -> Result<DenseDeformationField> {
    outer.domain.check_same(&inner.domain)?;
    let d = outer.domain;
    let n = d.num_voxels();
    let data = map_indexed(n, |idx| {
        let ui = inner.data[idx];
        let uo = outer.sample_mm(warp_point(&d, idx, &ui));
        [ui[0] + uo[0], ui[1] + uo[1], ui[2] + uo[2]]
    });
    Ok(DenseDeformationField::new(d, data))
}

/// Fixed-point inversion: iterate `v <- -u(x + v(x))` from `v = -u` until the
/// largest update drops below 0.01 voxels (at most 30 iterations). Errors if
/// the round-trip residual still exceeds 0.5 voxels.
pub fn invert(field: &DenseDeformationField) -> Result<DenseDeformationField> {
    let d = field.domain;
    let n = d.num_voxels();
    let mut inv: Vec<[f64; 3]> = field.data.iter().map(|u| [-u[0], -u[1], -u[2]]).collect();

    for _ in 0..30 {
        let next = map_indexed(n, |idx| {
            let u = field.sample_mm(warp_point(&d, idx, &inv[idx]));
            [-u[0], -u[1], -u[2]]
        });
        let mut max_update = 0.0f64;
        for idx in 0..n {
            let dv = [
                (next[idx][0] - inv[idx][0]) / d.spacing[0],
                (next[idx][1] - inv[idx][1]) / d.spacing[1],
                (next[idx][2] - inv[idx][2]) / d.spacing[2],
            ];
            let m = (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]).sqrt();
            max_update = max_update.max(m);
        }
        inv = next;
        if max_update < 0.01 {
            break;
        }
    }

    // Round-trip residual in voxels: v(x) + u(x + v(x)).
    let mut worst = (0usize, 0.0f64);
    for idx in 0..n {
        let u = field.sample_mm(warp_point(&d, idx, &inv[idx]));
        let r = [
            (inv[idx][0] + u[0]) / d.spacing[0],
            (inv[idx][1] + u[1]) / d.spacing[1],
            (inv[idx][2] + u[2]) / d.spacing[2],
        ];
        let m = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if m > worst.1 {
            worst = (idx, m);
        }
    }
    if worst.1 > 0.5 {
        return Err(CosegError::InversionFailure {
            voxel: d.coords(worst.0),
            residual_voxels: worst.1,
        });
    }
    Ok(DenseDeformationField::new(d, inv))
}
