//! Patch grids shared by the image embedder, the spatial encoder, and the
//! geometric prior. Tokens are ordered camera-major, then row-major.

use serde::{Deserialize, Serialize};

use crate::camera::{unproject_unchecked, Camera};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::world::DepthMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    /// Patch side in pixels.
    pub patch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn for_image(width: usize, height: usize, patch: usize) -> Result<Self> {
        if patch == 0 || width % patch != 0 || height % patch != 0 {
            return Err(Error::Dimension(format!(
                "{width}x{height} image is not divisible into {patch}x{patch} patches"
            )));
        }
        Ok(PatchGrid {
            patch,
            rows: height / patch,
            cols: width / patch,
        })
    }

    pub fn tokens(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixel indices `(row, col)` of the patch's centroid pixel.
    pub fn centroid_pixel(&self, pr: usize, pc: usize) -> (usize, usize) {
        (pr * self.patch + self.patch / 2, pc * self.patch + self.patch / 2)
    }
}

/// How a patch of pixels is reduced to one 3D point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchReduce {
    /// Unproject the centroid pixel at its own depth.
    #[default]
    Centroid,
    /// Mean of the unprojected finite pixels in the patch.
    Mean,
}

/// One 3D point per token plus whether it came from real geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenPoints {
    pub points: Vec<Vec3>,
    /// False where the whole patch had no finite depth and the far
    /// sentinel was used.
    pub valid: Vec<bool>,
}

fn usable(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Reduce one camera's depth map to a point per patch, in the ego frame
/// defined by `camera`'s extrinsics.
pub fn camera_token_points(
    depth: &DepthMap,
    camera: &Camera,
    grid: &PatchGrid,
    reduce: PatchReduce,
    z_far: f64,
) -> Result<(Vec<Vec3>, Vec<bool>)> {
    let intr = &camera.intrinsics;
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::Dimension(format!(
            "depth map {}x{} does not match camera {} ({}x{})",
            depth.width, depth.height, camera.name, intr.width, intr.height
        )));
    }
    if depth.width != grid.cols * grid.patch || depth.height != grid.rows * grid.patch {
        return Err(Error::Dimension(format!(
            "depth map {}x{} does not match a {}x{} grid of {} px patches",
            depth.width, depth.height, grid.rows, grid.cols, grid.patch
        )));
    }
    let mut points = Vec::with_capacity(grid.tokens());
    let mut valid = Vec::with_capacity(grid.tokens());
    let px = |row: usize, col: usize| (col as f64 + 0.5, row as f64 + 0.5);
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let (cr, cc) = grid.centroid_pixel(pr, pc);
            let rows = pr * grid.patch..(pr + 1) * grid.patch;
            let cols = pc * grid.patch..(pc + 1) * grid.patch;
            let point = match reduce {
                PatchReduce::Centroid => {
                    let z = depth.at(cr, cc);
                    if usable(z) {
                        let (u, v) = px(cr, cc);
                        Some(unproject_unchecked(intr, &camera.extrinsics, u, v, z))
                    } else {
                        // Nearest usable pixel in the patch; ties go to scan order.
                        let mut best: Option<(usize, usize, usize)> = None;
                        for r in rows.clone() {
                            for c in cols.clone() {
                                if !usable(depth.at(r, c)) {
                                    continue;
                                }
                                let d2 = r.abs_diff(cr).pow(2) + c.abs_diff(cc).pow(2);
                                if best.is_none_or(|(b, _, _)| d2 < b) {
                                    best = Some((d2, r, c));
                                }
                            }
                        }
                        best.map(|(_, r, c)| {
                            let (u, v) = px(r, c);
                            unproject_unchecked(intr, &camera.extrinsics, u, v, depth.at(r, c))
                        })
                    }
                }
                PatchReduce::Mean => {
                    let mut acc = [0.0; 3];
                    let mut n = 0usize;
                    for r in rows.clone() {
                        for c in cols.clone() {
                            let z = depth.at(r, c);
                            if usable(z) {
                                let (u, v) = px(r, c);
                                let p = unproject_unchecked(intr, &camera.extrinsics, u, v, z);
                                for a in 0..3 {
                                    acc[a] += p[a];
                                }
                                n += 1;
                            }
                        }
                    }
                    (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
                }
            };
            match point {
                Some(p) => {
                    points.push(p);
                    valid.push(true);
                }
                None => {
                    let (u, v) = px(cr, cc);
                    points.push(unproject_unchecked(intr, &camera.extrinsics, u, v, z_far));
                    valid.push(false);
                }
            }
        }
    }
    Ok((points, valid))
}

/// Token points for every camera, concatenated in rig order.
pub fn token_points(
    depth: &[DepthMap],
    cameras: &[Camera],
    grid: &PatchGrid,
    reduce: PatchReduce,
    z_far: f64,
) -> Result<TokenPoints> {
    if depth.len() != cameras.len() {
        return Err(Error::Contract(format!(
            "{} depth maps for {} cameras",
            depth.len(),
            cameras.len()
        )));
    }
    let mut out = TokenPoints {
        points: Vec::with_capacity(cameras.len() * grid.tokens()),
        valid: Vec::with_capacity(cameras.len() * grid.tokens()),
    };
    for (d, cam) in depth.iter().zip(cameras) {
        let (p, v) = camera_token_points(d, cam, grid, reduce, z_far)?;
        out.points.extend(p);
        out.valid.extend(v);
    }
    Ok(out)
}

/// Everything needed to turn depth maps into token points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub grid: PatchGrid,
    pub reduce: PatchReduce,
    /// Camera depth of the sentinel point used for patches with no geometry.
    pub z_far: f64,
}

impl TokenLayout {
    pub fn points(&self, depth: &[DepthMap], cameras: &[Camera]) -> Result<TokenPoints> {
        token_points(depth, cameras, &self.grid, self.reduce, self.z_far)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Extrinsics, Intrinsics};

    fn cam() -> Camera {
        Camera {
            name: "front".into(),
            intrinsics: Intrinsics::centered(16, 8),
            extrinsics: Extrinsics::identity(),
        }
    }

    #[test]
    fn grid_rejects_ragged_images() {
        assert!(PatchGrid::for_image(56, 32, 8).is_ok());
        assert!(matches!(PatchGrid::for_image(56, 30, 8), Err(Error::Dimension(_))));
        assert!(PatchGrid::for_image(56, 32, 0).is_err());
    }

    #[test]
    fn centroid_uses_own_depth_then_nearest_then_sentinel() {
        let c = cam();
        let grid = PatchGrid::for_image(16, 8, 8).unwrap();
        let mut d = DepthMap::filled(16, 8, f64::INFINITY);
        // Left patch: centroid pixel (4, 4) has depth.
        d.set(4, 4, 2.0);
        d.set(0, 0, 9.0);
        // Right patch: centroid (4, 12) missing; (4, 13) is nearest.
        d.set(4, 13, 3.0);
        d.set(7, 15, 5.0);
        let (p, v) = camera_token_points(&d, &c, &grid, PatchReduce::Centroid, 80.0).unwrap();
        assert_eq!(v, vec![true, true]);
        assert_eq!(p[0], c.unproject(4.5, 4.5, 2.0).unwrap());
        assert_eq!(p[1], c.unproject(13.5, 4.5, 3.0).unwrap());

        let sky = DepthMap::filled(16, 8, f64::INFINITY);
        let (p, v) = camera_token_points(&sky, &c, &grid, PatchReduce::Centroid, 80.0).unwrap();
        assert_eq!(v, vec![false, false]);
        assert!((p[0][2] - 80.0).abs() < 1e-12);
    }

    #[test]
    fn mean_reduction_averages_finite_pixels() {
        let c = cam();
        let grid = PatchGrid::for_image(16, 8, 8).unwrap();
        let mut d = DepthMap::filled(16, 8, f64::INFINITY);
        d.set(0, 0, 2.0);
        d.set(7, 7, 4.0);
        let (p, v) = camera_token_points(&d, &c, &grid, PatchReduce::Mean, 80.0).unwrap();
        let a = c.unproject(0.5, 0.5, 2.0).unwrap();
        let b = c.unproject(7.5, 7.5, 4.0).unwrap();
        for k in 0..3 {
            assert!((p[0][k] - 0.5 * (a[k] + b[k])).abs() < 1e-12);
        }
        assert_eq!(v, vec![true, false]);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let grid = PatchGrid::for_image(16, 8, 8).unwrap();
        let d = DepthMap::filled(8, 8, 1.0);
        assert!(matches!(
            camera_token_points(&d, &cam(), &grid, PatchReduce::Centroid, 80.0),
            Err(Error::Dimension(_))
        ));
    }
}
