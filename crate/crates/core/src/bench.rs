//! Benchmark initial conditions (rising thermal bubble, density current),
//! hydrostatic background quantities, and a synthetic advection-diffusion
//! evolution oracle that stands in for a full-order solver.

use crate::grid::{GridSpec, Snapshot, SnapshotSet};
use crate::{Error, Result};

/// Dry-air constants and reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Gas constant, J/(kg K).
    pub r: f64,
    /// Specific heat at constant volume, J/(kg K).
    pub c_v: f64,
    /// Atmospheric reference pressure, Pa.
    pub p_g: f64,
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
    /// Background potential temperature, K.
    pub theta_ref: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            r: 287.0,
            c_v: 715.5,
            p_g: 1e5,
            g: 9.80665,
            theta_ref: 300.0,
        }
    }
}

impl PhysicalConstants {
    /// Specific heat at constant pressure, c_p = R + c_v.
    pub fn c_p(&self) -> f64 {
        self.r + self.c_v
    }
}

/// Warm-bubble perturbation: theta' = amplitude * (1 - r/r0) inside r <= r0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmBubbleConfig {
    pub x_c: f64,
    pub y_c: f64,
    pub z_c: f64,
    pub r0: f64,
    pub amplitude: f64,
}

impl WarmBubbleConfig {
    /// Bubble centered at mid-width of the given 2D domain, at height `y_c`.
    pub fn centered_2d(grid: &GridSpec, y_c: f64) -> Self {
        Self {
            x_c: grid.x0 + 0.5 * grid.nx as f64 * grid.dx,
            y_c,
            z_c: 0.0,
            r0: 2000.0,
            amplitude: 2.0,
        }
    }

    /// The verbatim 2D configuration with center (5000, 2000) m, even though
    /// it sits on the edge of the nominal [0,5000] m wide domain.
    pub fn reference_2d() -> Self {
        Self {
            x_c: 5000.0,
            y_c: 2000.0,
            z_c: 0.0,
            r0: 2000.0,
            amplitude: 2.0,
        }
    }

    /// 3D configuration: center (1600, 1600, 500) m, r0 = 500 m.
    pub fn reference_3d() -> Self {
        Self {
            x_c: 1600.0,
            y_c: 1600.0,
            z_c: 500.0,
            r0: 500.0,
            amplitude: 2.0,
        }
    }
}

/// Density-current perturbation with elliptic normalized radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCurrentConfig {
    pub x_c: f64,
    pub y_c: f64,
    pub x_r: f64,
    pub y_r: f64,
    pub theta_s: f64,
}

impl Default for DensityCurrentConfig {
    fn default() -> Self {
        // Center (0, 3000) m, radii (4000, 2000) m, semi-amplitude 7.5 K.
        Self {
            x_c: 0.0,
            y_c: 3000.0,
            x_r: 4000.0,
            y_r: 2000.0,
            theta_s: 7.5,
        }
    }
}

/// Explicit upwind advection plus centered diffusion with periodic
/// boundaries; the desk-scale stand-in for the full-order solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDynamicsConfig {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub kappa: f64,
    pub n_steps: usize,
    pub dt: f64,
}

impl SyntheticDynamicsConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.dt <= 0.0 {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidArgument("kappa must be nonnegative".into()));
        }
        // Upwind is stable up to Courant number 1 per axis; the exact-shift
        // special case u*dt == dx sits on that boundary and is admitted.
        let tol = 1e-12;
        for (vel, d, name) in [
            (self.u, grid.dx, "x"),
            (self.v, grid.dy, "y"),
            (self.w, grid.dz, "z"),
        ] {
            let c = vel.abs() * self.dt / d;
            if c > 1.0 + tol {
                return Err(Error::InvalidArgument(format!(
                    "advective CFL violation on {name}: |v| dt/d = {c:.4} > 1"
                )));
            }
        }
        let mut dcfl = self.kappa * self.dt / (grid.dx * grid.dx)
            + self.kappa * self.dt / (grid.dy * grid.dy);
        if !grid.is_2d() {
            dcfl += self.kappa * self.dt / (grid.dz * grid.dz);
        }
        if dcfl > 0.5 + tol {
            return Err(Error::InvalidArgument(format!(
                "diffusive CFL violation: kappa dt sum(1/d^2) = {dcfl:.4} > 0.5"
            )));
        }
        Ok(())
    }
}

/// Warm-bubble theta' field. `r` is the Euclidean distance to the center;
/// 2D grids (nz == 1) use the x-y plane only. The 300 K background is
/// already subtracted: only the perturbation is returned.
pub fn warm_bubble_theta_prime(cfg: &WarmBubbleConfig, grid: &GridSpec) -> Snapshot {
    let mut values = vec![0.0; grid.n_cells()];
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y, z) = grid.center(i, j, k);
                let mut r2 = (x - cfg.x_c).powi(2) + (y - cfg.y_c).powi(2);
                if !grid.is_2d() {
                    r2 += (z - cfg.z_c).powi(2);
                }
                let r = r2.sqrt();
                if r <= cfg.r0 {
                    values[grid.idx(i, j, k)] = cfg.amplitude * (1.0 - r / cfg.r0);
                }
            }
        }
    }
    Snapshot::new(values, 0.0)
}

/// Density-current theta' field: -theta_s (1 + cos(pi r)) for normalized
/// elliptic radius r <= 1, zero outside.
pub fn density_current_theta_prime(cfg: &DensityCurrentConfig, grid: &GridSpec) -> Snapshot {
    let mut values = vec![0.0; grid.n_cells()];
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y, _z) = grid.center(i, j, k);
                let r = (((x - cfg.x_c) / cfg.x_r).powi(2) + ((y - cfg.y_c) / cfg.y_r).powi(2))
                    .sqrt();
                if r <= 1.0 {
                    values[grid.idx(i, j, k)] =
                        -cfg.theta_s * (1.0 + (std::f64::consts::PI * r).cos());
                }
            }
        }
    }
    Snapshot::new(values, 0.0)
}

/// Hydrostatic pressure p = p_g (1 - g z / (c_p theta0))^(c_p/R).
pub fn hydrostatic_pressure(z: f64, theta0: f64, c: &PhysicalConstants) -> Result<f64> {
    let base = 1.0 - c.g * z / (c.c_p() * theta0);
    if base <= 0.0 {
        return Err(Error::Domain(format!(
            "altitude z={z} m exceeds the validity range of the hydrostatic profile"
        )));
    }
    Ok(c.p_g * base.powf(c.c_p() / c.r))
}

/// Hydrostatic density rho = p_g / (R theta0) * (p/p_g)^(c_v/c_p).
pub fn hydrostatic_density(z: f64, theta0: f64, c: &PhysicalConstants) -> Result<f64> {
    let p = hydrostatic_pressure(z, theta0, c)?;
    Ok(c.p_g / (c.r * theta0) * (p / c.p_g).powf(c.c_v / c.c_p()))
}

/// Initial specific enthalpy h0 = c_p theta0 (p/p_g)^(R/c_p).
pub fn initial_enthalpy(z: f64, theta0: f64, c: &PhysicalConstants) -> Result<f64> {
    let p = hydrostatic_pressure(z, theta0, c)?;
    Ok(c.c_p() * theta0 * exner_pressure(p, c)?)
}

/// Exner pressure pi = (p/p_g)^(R/c_p).
pub fn exner_pressure(p: f64, c: &PhysicalConstants) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::Domain(format!("nonpositive pressure {p}")));
    }
    Ok((p / c.p_g).powf(c.r / c.c_p()))
}

/// Potential temperature theta = T / pi.
pub fn potential_temperature(t: f64, p: f64, c: &PhysicalConstants) -> Result<f64> {
    Ok(t / exner_pressure(p, c)?)
}

/// Advance the field with first-order upwind advection and centered
/// diffusion, periodic in every direction, emitting `n_steps + 1`
/// snapshots (the initial field included) at spacing `dt`.
pub fn synthetic_evolve(
    initial: &Snapshot,
    grid: &GridSpec,
    cfg: &SyntheticDynamicsConfig,
) -> Result<SnapshotSet> {
    cfg.validate(grid)?;
    if initial.values.len() != grid.n_cells() {
        return Err(Error::ShapeMismatch(format!(
            "initial field has {} values, grid has {} cells",
            initial.values.len(),
            grid.n_cells()
        )));
    }
    let mut snapshots = Vec::with_capacity(cfg.n_steps + 1);
    snapshots.push(initial.clone());
    let mut cur = initial.values.clone();
    let mut next = vec![0.0; cur.len()];
    for step in 0..cfg.n_steps {
        step_upwind_diffusion(grid, cfg, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        snapshots.push(Snapshot::new(
            cur.clone(),
            initial.time + (step + 1) as f64 * cfg.dt,
        ));
    }
    SnapshotSet::new(*grid, snapshots, cfg.dt)
}

fn step_upwind_diffusion(
    grid: &GridSpec,
    cfg: &SyntheticDynamicsConfig,
    cur: &[f64],
    next: &mut [f64],
) {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let cx = cfg.u * cfg.dt / grid.dx;
    let cy = cfg.v * cfg.dt / grid.dy;
    let cz = cfg.w * cfg.dt / grid.dz;
    let dx2 = cfg.kappa * cfg.dt / (grid.dx * grid.dx);
    let dy2 = cfg.kappa * cfg.dt / (grid.dy * grid.dy);
    let dz2 = if grid.is_2d() {
        0.0
    } else {
        cfg.kappa * cfg.dt / (grid.dz * grid.dz)
    };
    let wrap = |i: usize, delta: isize, n: usize| -> usize {
        (i as isize + delta).rem_euclid(n as isize) as usize
    };
    for k in 0..nz {
        let (km, kp) = (wrap(k, -1, nz), wrap(k, 1, nz));
        for j in 0..ny {
            let (jm, jp) = (wrap(j, -1, ny), wrap(j, 1, ny));
            for i in 0..nx {
                let (im, ip) = (wrap(i, -1, nx), wrap(i, 1, nx));
                let c = cur[grid.idx(i, j, k)];
                let xm = cur[grid.idx(im, j, k)];
                let xp = cur[grid.idx(ip, j, k)];
                let ym = cur[grid.idx(i, jm, k)];
                let yp = cur[grid.idx(i, jp, k)];
                let mut v = c;
                // upwind advection per axis
                v -= if cx >= 0.0 { cx * (c - xm) } else { cx * (xp - c) };
                v -= if cy >= 0.0 { cy * (c - ym) } else { cy * (yp - c) };
                v += dx2 * (xp - 2.0 * c + xm) + dy2 * (yp - 2.0 * c + ym);
                if nz > 1 {
                    let zm = cur[grid.idx(i, j, km)];
                    let zp = cur[grid.idx(i, j, kp)];
                    v -= if cz >= 0.0 { cz * (c - zm) } else { cz * (zp - c) };
                    v += dz2 * (zp - 2.0 * c + zm);
                }
                next[grid.idx(i, j, k)] = v;
            }
        }
    }
}
