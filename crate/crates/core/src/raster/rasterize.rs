use rayon::prelude::*;

use super::camera::{Camera, Projection};
use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub const NO_TRIANGLE: u32 = u32::MAX;
/// Depths closer than this are ties, resolved toward the lower triangle id.
pub const DEPTH_TIE: f64 = 1e-12;
pub const TILE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    pub cull_backfaces: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self { cull_backfaces: true }
    }
}

/// Per-pixel triangle id, barycentrics (in the face's own corner order) and
/// camera-space depth. Uncovered pixels hold [`NO_TRIANGLE`].
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    width: usize,
    height: usize,
    triangle: Vec<u32>,
    bary: Vec<[f64; 3]>,
    depth: Vec<f64>,
}

impl GBuffer {
    fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            triangle: vec![NO_TRIANGLE; n],
            bary: vec![[0.0; 3]; n],
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn triangles(&self) -> &[u32] {
        &self.triangle
    }

    pub fn barys(&self) -> &[[f64; 3]] {
        &self.bary
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.triangle[i] != NO_TRIANGLE
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|t| **t != NO_TRIANGLE).count()
    }

    /// `(triangle, bary, depth)` of pixel `i` when covered.
    pub fn sample(&self, i: usize) -> Option<(usize, [f64; 3], f64)> {
        self.is_covered(i)
            .then(|| (self.triangle[i] as usize, self.bary[i], self.depth[i]))
    }

    /// Depth range over covered pixels, or `None` if nothing is covered.
    pub fn depth_range(&self) -> Option<(f64, f64)> {
        let mut it = (0..self.triangle.len()).filter(|&i| self.is_covered(i)).map(|i| self.depth[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    }
}

/// 2D edge function: positive when `p` is left of `a -> b` in y-down pixel
/// coordinates, i.e. inside for triangles of positive area.
pub fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top-left ownership of pixels lying exactly on edge `a -> b` of a
/// positive-area triangle.
pub fn is_top_left(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Screen-space triangle ready for scan conversion. `order` maps the
/// positive-area corner order back to the face's corners.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub id: u32,
    pub xy: [[f64; 2]; 3],
    pub depth: [f64; 3],
    pub order: [usize; 3],
    pub area: f64,
    pub top_left: [bool; 3],
    pub perspective: bool,
}

impl Setup {
    /// Returns `None` for culled, degenerate or behind-camera triangles.
    pub fn new(id: u32, p: [Projection; 3], perspective: bool, options: &RasterOptions) -> Option<Self> {
        if p.iter().any(|q| !q.in_front) {
            return None;
        }
        let area = edge(p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y);
        // Counter-clockwise world faces appear clockwise with y down.
        let front = area < 0.0;
        if area == 0.0 || !area.is_finite() || (options.cull_backfaces && !front) {
            return None;
        }
        let order = if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
        let xy = order.map(|k| [p[k].x, p[k].y]);
        let depth = order.map(|k| p[k].depth);
        let top_left = [0, 1, 2].map(|e| {
            let (a, b) = (xy[(e + 1) % 3], xy[(e + 2) % 3]);
            is_top_left(a[0], a[1], b[0], b[1])
        });
        Some(Self {
            id,
            xy,
            depth,
            order,
            area: area.abs(),
            top_left,
            perspective,
        })
    }

    pub fn pixel_bounds(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let xs = self.xy.map(|p| p[0]);
        let ys = self.xy.map(|p| p[1]);
        let min_x = (xs[0].min(xs[1]).min(xs[2]) - 0.5).ceil().max(0.0);
        let max_x = (xs[0].max(xs[1]).max(xs[2]) - 0.5).floor().min(width as f64 - 1.0);
        let min_y = (ys[0].min(ys[1]).min(ys[2]) - 0.5).ceil().max(0.0);
        let max_y = (ys[0].max(ys[1]).max(ys[2]) - 0.5).floor().min(height as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            return None;
        }
        Some((min_x as usize, max_x as usize, min_y as usize, max_y as usize))
    }

    /// Coverage test at a pixel center; returns face-order barycentrics and
    /// depth when covered.
    pub fn fragment(&self, px: f64, py: f64) -> Option<([f64; 3], f64)> {
        let [a, b, c] = self.xy;
        let w = [
            edge(b[0], b[1], c[0], c[1], px, py),
            edge(c[0], c[1], a[0], a[1], px, py),
            edge(a[0], a[1], b[0], b[1], px, py),
        ];
        for e in 0..3 {
            if w[e] < 0.0 || (w[e] == 0.0 && !self.top_left[e]) {
                return None;
            }
        }
        let l = w.map(|v| v / self.area);
        let (bary, depth) = if self.perspective {
            let q = [l[0] / self.depth[0], l[1] / self.depth[1], l[2] / self.depth[2]];
            let s = q[0] + q[1] + q[2];
            (q.map(|v| v / s), 1.0 / s)
        } else {
            (l, l[0] * self.depth[0] + l[1] * self.depth[1] + l[2] * self.depth[2])
        };
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[self.order[k]] = bary[k];
        }
        Some((out, depth))
    }
}

pub fn setup_triangles(
    faces: &[[u32; 3]],
    vertices: &[Vec3],
    cam: &Camera,
    width: usize,
    height: usize,
    options: &RasterOptions,
) -> Result<Vec<Setup>> {
    cam.validate()?;
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v as usize >= vertices.len())) {
        return Err(Error::dim(format!(
            "face {f:?} indexes past {} vertices",
            vertices.len()
        )));
    }
    if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::invalid("non-finite vertex position"));
    }
    let proj = cam.projector(width, height);
    let projected: Vec<Projection> = vertices.par_iter().map(|v| proj.project(v)).collect();
    Ok(faces
        .iter()
        .enumerate()
        .filter_map(|(id, f)| {
            let p = f.map(|v| projected[v as usize]);
            Setup::new(id as u32, p, proj.is_perspective(), options)
        })
        .collect())
}

/// Scan-converts the mesh at pixel centers. Screen tiles are rasterized in
/// parallel, each visiting its triangles in ascending id, and assembled in a
/// fixed order, so the result does not depend on the thread count.
pub fn rasterize(
    faces: &[[u32; 3]],
    vertices: &[Vec3],
    cam: &Camera,
    width: usize,
    height: usize,
    options: &RasterOptions,
) -> Result<GBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("cannot rasterize a {width}x{height} image")));
    }
    let setups = setup_triangles(faces, vertices, cam, width, height, options)?;
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (s, setup) in setups.iter().enumerate() {
        if let Some((x0, x1, y0, y1)) = setup.pixel_bounds(width, height) {
            for ty in y0 / TILE..=y1 / TILE {
                for tx in x0 / TILE..=x1 / TILE {
                    bins[ty * tiles_x + tx].push(s as u32);
                }
            }
        }
    }
    let tiles: Vec<GBuffer> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let x0 = tx * TILE;
            let y0 = ty * TILE;
            let w = TILE.min(width - x0);
            let h = TILE.min(height - y0);
            let mut tile = GBuffer::empty(w, h);
            for &s in bin {
                let setup = &setups[s as usize];
                let Some((bx0, bx1, by0, by1)) = setup.pixel_bounds(width, height) else {
                    continue;
                };
                for y in by0.max(y0)..=by1.min(y0 + h - 1) {
                    for x in bx0.max(x0)..=bx1.min(x0 + w - 1) {
                        let Some((bary, depth)) = setup.fragment(x as f64 + 0.5, y as f64 + 0.5) else {
                            continue;
                        };
                        let i = (y - y0) * w + (x - x0);
                        if depth < tile.depth[i] - DEPTH_TIE || tile.triangle[i] == NO_TRIANGLE {
                            tile.triangle[i] = setup.id;
                            tile.bary[i] = bary;
                            tile.depth[i] = depth;
                        }
                    }
                }
            }
            tile
        })
        .collect();
    let mut out = GBuffer::empty(width, height);
    for (t, tile) in tiles.into_iter().enumerate() {
        let (x0, y0) = ((t % tiles_x) * TILE, (t / tiles_x) * TILE);
        for y in 0..tile.height {
            let src = y * tile.width..(y + 1) * tile.width;
            let dst = (y0 + y) * width + x0;
            out.triangle[dst..dst + tile.width].copy_from_slice(&tile.triangle[src.clone()]);
            out.bary[dst..dst + tile.width].copy_from_slice(&tile.bary[src.clone()]);
            out.depth[dst..dst + tile.width].copy_from_slice(&tile.depth[src]);
        }
    }
    Ok(out)
}
