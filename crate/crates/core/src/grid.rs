//! Cell-centred finite-volume geometries for the bulk domain and its boundary.
//!
//! Every geometry is described by weighted cells and two-point flux faces.
//! The bulk operator is `(L x)_i = (1/w_i) sum_f T_f (x_j - x_i)`, so
//! `sum_i w_i (L x)_i = 0` holds identically and `W L` is symmetric. The
//! boundary operator on each closed boundary ring is built the same way.
//!
//! Three geometries are provided:
//!
//! * `Interval1D`: `[0, length]`, boundary = the two endpoints with counting
//!   measure and no surface diffusion. Surface diffusion is meaningless here,
//!   so this instance only exercises the `delta_v`-independent dynamics.
//! * `PeriodicStrip2D`: an x-periodic rectangle whose boundary is the bottom
//!   and top edges, each a closed periodic ring.
//! * `PolarDisk2D`: a uniform `(r, theta)` grid of the disk, boundary = the
//!   outer circle.
//!
//! The trace of a bulk field is piecewise constant: a boundary cell sees the
//! value of the single bulk cell it is attached to.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linsolve::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Interval1D,
    PeriodicStrip2D,
    PolarDisk2D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: [f64; 2],
    pub measure: f64,
}

/// Link from a boundary cell to the bulk cell it touches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceLink {
    pub bulk_cell: usize,
    /// Boundary measure over bulk cell measure: turns a flux density on the
    /// boundary cell into a rate of change of the bulk cell average.
    pub factor: f64,
}

/// Interface between two cells with two-point transmissibility
/// `face measure / centre distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub transmissibility: f64,
}

#[derive(Debug, Clone)]
pub struct GridGeometry {
    pub kind: GeometryKind,
    pub omega_cells: Vec<Cell>,
    pub gamma_cells: Vec<Cell>,
    pub trace_map: Vec<TraceLink>,
    pub bulk_faces: Vec<Face>,
    pub surface_faces: Vec<Face>,
    pub bulk_laplacian: CsrMatrix,
    pub surface_laplacian: CsrMatrix,
    pub omega_measure: f64,
    pub gamma_measure: f64,
    /// Coordinate extents used by initial-condition builders (x-extent and
    /// y-extent for the flat geometries, radius for the disk).
    pub extent: [f64; 2],
}

fn laplacian_from_faces(cells: &[Cell], faces: &[Face]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * faces.len() + cells.len());
    for f in faces {
        let (wa, wb) = (cells[f.a].measure, cells[f.b].measure);
        t.push((f.a, f.b, f.transmissibility / wa));
        t.push((f.a, f.a, -f.transmissibility / wa));
        t.push((f.b, f.a, f.transmissibility / wb));
        t.push((f.b, f.b, -f.transmissibility / wb));
    }
    for i in 0..cells.len() {
        t.push((i, i, 0.0));
    }
    CsrMatrix::from_triplets(cells.len(), &t).expect("face indices are in range")
}

/// Faces of a periodic ring of `n` cells with spacing `spacing`, starting at
/// cell index `offset`.
fn ring_faces(offset: usize, n: usize, spacing: f64) -> Vec<Face> {
    (0..n)
        .map(|i| Face {
            a: offset + i,
            b: offset + (i + 1) % n,
            transmissibility: 1.0 / spacing,
        })
        .collect()
}

impl GridGeometry {
    fn assemble(
        kind: GeometryKind,
        omega_cells: Vec<Cell>,
        gamma_cells: Vec<Cell>,
        trace_map: Vec<TraceLink>,
        bulk_faces: Vec<Face>,
        surface_faces: Vec<Face>,
        extent: [f64; 2],
    ) -> Self {
        let bulk_laplacian = laplacian_from_faces(&omega_cells, &bulk_faces);
        let surface_laplacian = laplacian_from_faces(&gamma_cells, &surface_faces);
        let omega_measure = omega_cells.iter().map(|c| c.measure).sum();
        let gamma_measure = gamma_cells.iter().map(|c| c.measure).sum();
        GridGeometry {
            kind,
            omega_cells,
            gamma_cells,
            trace_map,
            bulk_faces,
            surface_faces,
            bulk_laplacian,
            surface_laplacian,
            omega_measure,
            gamma_measure,
            extent,
        }
    }

    /// Uniform grid on `[0, length]`.
    pub fn build_interval(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::invalid(format!("interval needs at least 2 cells, got {n_cells}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!("interval length must be positive, got {length}")));
        }
        let h = length / n_cells as f64;
        let omega: Vec<Cell> = (0..n_cells)
            .map(|i| Cell {
                center: [(i as f64 + 0.5) * h, 0.0],
                measure: h,
            })
            .collect();
        let gamma = vec![
            Cell { center: [0.0, 0.0], measure: 1.0 },
            Cell { center: [length, 0.0], measure: 1.0 },
        ];
        let trace = vec![
            TraceLink { bulk_cell: 0, factor: 1.0 / h },
            TraceLink { bulk_cell: n_cells - 1, factor: 1.0 / h },
        ];
        let faces = (0..n_cells - 1)
            .map(|i| Face { a: i, b: i + 1, transmissibility: 1.0 / h })
            .collect();
        Ok(Self::assemble(
            GeometryKind::Interval1D,
            omega,
            gamma,
            trace,
            faces,
            Vec::new(),
            [length, 0.0],
        ))
    }

    /// x-periodic rectangle `[0, width) x [0, height]`; the boundary is the
    /// bottom ring (boundary cells `0..nx`) followed by the top ring.
    pub fn build_periodic_strip(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx < 3 || ny < 2 {
            return Err(Error::invalid(format!(
                "periodic strip needs nx >= 3 and ny >= 2, got ({nx}, {ny})"
            )));
        }
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::invalid("strip width and height must be positive"));
        }
        let (dx, dy) = (width / nx as f64, height / ny as f64);
        let id = |i: usize, j: usize| j * nx + i;

        let mut omega = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                omega.push(Cell {
                    center: [(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy],
                    measure: dx * dy,
                });
            }
        }
        let mut faces = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                faces.push(Face { a: id(i, j), b: id((i + 1) % nx, j), transmissibility: dy / dx });
                if j + 1 < ny {
                    faces.push(Face { a: id(i, j), b: id(i, j + 1), transmissibility: dx / dy });
                }
            }
        }

        let mut gamma = Vec::with_capacity(2 * nx);
        let mut trace = Vec::with_capacity(2 * nx);
        for (row, y) in [(0, 0.0), (ny - 1, height)] {
            for i in 0..nx {
                gamma.push(Cell { center: [(i as f64 + 0.5) * dx, y], measure: dx });
                trace.push(TraceLink { bulk_cell: id(i, row), factor: 1.0 / dy });
            }
        }
        let mut surface_faces = ring_faces(0, nx, dx);
        surface_faces.extend(ring_faces(nx, nx, dx));

        Ok(Self::assemble(
            GeometryKind::PeriodicStrip2D,
            omega,
            gamma,
            trace,
            faces,
            surface_faces,
            [width, height],
        ))
    }

    /// Disk of radius `radius` on a uniform polar grid; cell `(k, m)` with
    /// radial index `k` and angular index `m` has index `k * n_theta + m`.
    pub fn build_polar_disk(n_r: usize, n_theta: usize, radius: f64) -> Result<Self> {
        if n_r < 2 || n_theta < 3 {
            return Err(Error::invalid(format!(
                "polar disk needs n_r >= 2 and n_theta >= 3, got ({n_r}, {n_theta})"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("disk radius must be positive"));
        }
        let dr = radius / n_r as f64;
        let dth = 2.0 * PI / n_theta as f64;
        let id = |k: usize, m: usize| k * n_theta + m;

        let mut omega = Vec::with_capacity(n_r * n_theta);
        for k in 0..n_r {
            let (r_in, r_out) = (k as f64 * dr, (k + 1) as f64 * dr);
            let rc = 0.5 * (r_in + r_out);
            for m in 0..n_theta {
                let th = (m as f64 + 0.5) * dth;
                omega.push(Cell {
                    center: [rc * th.cos(), rc * th.sin()],
                    measure: 0.5 * (r_out * r_out - r_in * r_in) * dth,
                });
            }
        }
        let mut faces = Vec::new();
        for k in 0..n_r {
            let rc = (k as f64 + 0.5) * dr;
            let r_out = (k + 1) as f64 * dr;
            for m in 0..n_theta {
                faces.push(Face {
                    a: id(k, m),
                    b: id(k, (m + 1) % n_theta),
                    transmissibility: dr / (rc * dth),
                });
                if k + 1 < n_r {
                    faces.push(Face {
                        a: id(k, m),
                        b: id(k + 1, m),
                        transmissibility: r_out * dth / dr,
                    });
                }
            }
        }
        let ds = radius * dth;
        let gamma: Vec<Cell> = (0..n_theta)
            .map(|m| {
                let th = (m as f64 + 0.5) * dth;
                Cell { center: [radius * th.cos(), radius * th.sin()], measure: ds }
            })
            .collect();
        let trace = (0..n_theta)
            .map(|m| {
                let cell = id(n_r - 1, m);
                TraceLink { bulk_cell: cell, factor: ds / omega[cell].measure }
            })
            .collect();
        Ok(Self::assemble(
            GeometryKind::PolarDisk2D,
            omega,
            gamma,
            trace,
            faces,
            ring_faces(0, n_theta, ds),
            [radius, radius],
        ))
    }

    pub fn n_omega(&self) -> usize {
        self.omega_cells.len()
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma_cells.len()
    }

    pub fn omega_weights(&self) -> Vec<f64> {
        self.omega_cells.iter().map(|c| c.measure).collect()
    }

    pub fn gamma_weights(&self) -> Vec<f64> {
        self.gamma_cells.iter().map(|c| c.measure).collect()
    }

    /// `W_Omega L_Omega`: symmetric, negative semidefinite, zero row sums.
    pub fn bulk_stiffness(&self) -> CsrMatrix {
        self.bulk_laplacian.scale_rows(&self.omega_weights())
    }

    /// `W_Gamma L_Gamma`.
    pub fn surface_stiffness(&self) -> CsrMatrix {
        self.surface_laplacian.scale_rows(&self.gamma_weights())
    }

    /// Piecewise-constant trace of a bulk field.
    pub fn trace(&self, field_u: &[f64]) -> Result<Vec<f64>> {
        if field_u.len() != self.n_omega() {
            return Err(Error::invalid(format!(
                "bulk field has length {} but geometry has {} bulk cells",
                field_u.len(),
                self.n_omega()
            )));
        }
        Ok(self.trace_map.iter().map(|l| field_u[l.bulk_cell]).collect())
    }

    /// Phase coordinate used for cosine-type initial data: `pi x / L` on the
    /// interval, `2 pi x / width` on the strip and the polar angle on the disk.
    pub fn phase(&self, center: [f64; 2]) -> f64 {
        match self.kind {
            GeometryKind::Interval1D => PI * center[0] / self.extent[0],
            GeometryKind::PeriodicStrip2D => 2.0 * PI * center[0] / self.extent[0],
            GeometryKind::PolarDisk2D => center[1].atan2(center[0]),
        }
    }

    /// Whether a cell centre lies in the "left half" used by step initial data.
    pub fn in_first_half(&self, center: [f64; 2]) -> bool {
        match self.kind {
            GeometryKind::Interval1D | GeometryKind::PeriodicStrip2D => {
                center[0] < 0.5 * self.extent[0]
            }
            GeometryKind::PolarDisk2D => center[0] < 0.0,
        }
    }
}

pub fn weighted_sum(weights: &[f64], x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, v)| w * v).sum()
}
