//! Leaky echo-state network over latent trajectories: random fixed
//! input/reservoir weights (reservoir rescaled to a target spectral
//! radius), teacher-forced state harvesting, closed-form ridge readout,
//! and autoregressive multi-step forecasting.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::cae::LatentTrajectory;
use crate::{Error, Result};

pub const ESN_MAGIC: &[u8; 4] = b"ROME";
pub const ESN_VERSION: u32 = 1;

const POWER_ITER_MAX: usize = 200_000;
const POWER_ITER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EsnConfig {
    /// Reservoir size N_h.
    pub n_h: usize,
    /// Leak rate in [0, 1].
    pub alpha: f64,
    /// Ridge regularizer, >= 0.
    pub lambda: f64,
    pub spectral_radius_target: f64,
    /// Fraction of nonzero reservoir entries, in (0, 1].
    pub connectivity: f64,
    pub input_scale: f64,
    pub seed: u64,
    /// Leading harvested states discarded before readout training.
    pub washout: usize,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            n_h: 300,
            alpha: 0.1,
            lambda: 1e-4,
            spectral_radius_target: 0.9,
            connectivity: 0.1,
            input_scale: 1.0,
            seed: 0,
            washout: 0,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 {
            return Err(Error::InvalidArgument("reservoir size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "leak rate must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        if self.spectral_radius_target <= 0.0 {
            return Err(Error::InvalidArgument(
                "spectral radius target must be > 0".into(),
            ));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::InvalidArgument(
                "connectivity must lie in (0, 1]".into(),
            ));
        }
        if self.input_scale <= 0.0 {
            return Err(Error::InvalidArgument("input scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Reservoir activation at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnState {
    pub h: Array1<f64>,
}

impl EsnState {
    pub fn zero(n_h: usize) -> Self {
        Self {
            h: Array1::zeros(n_h),
        }
    }
}

/// Stacked teacher-forced design matrix X = [z; h] and one-step-shifted
/// target matrix Y.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// (N_d + N_h) x N_t
    pub x: Array2<f64>,
    /// N_d x N_t
    pub y: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnModel {
    pub config: EsnConfig,
    pub latent_dim: usize,
    /// N_h x N_d, fixed after construction.
    pub w_in: Array2<f64>,
    /// N_h x N_h, fixed after construction.
    pub w_res: Array2<f64>,
    /// N_d x (N_d + N_h), present only after training.
    pub w_out: Option<Array2<f64>>,
}

/// Largest eigenvalue magnitude via two-vector subspace iteration; the
/// 2D projected block captures complex conjugate pairs of random
/// reservoir matrices that plain power iteration cannot resolve.
pub fn spectral_radius(a: &Array2<f64>) -> Result<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "spectral radius needs a square matrix");
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(a[[0, 0]].abs());
    }
    // deterministic start block, independent of the caller's seeds
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5bec);
    let mut q = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
    orthonormalize(&mut q)?;
    let mut prev = f64::INFINITY;
    for _ in 0..POWER_ITER_MAX {
        let z = a.dot(&q);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Ok(0.0);
        }
        // projected 2x2 block in the current orthonormal basis
        let b = q.t().dot(&z);
        let rho = max_eig_mag_2x2(b[[0, 0]], b[[0, 1]], b[[1, 0]], b[[1, 1]]);
        q = z;
        orthonormalize(&mut q)?;
        if (rho - prev).abs() <= POWER_ITER_TOL * rho.max(1e-30) {
            return Ok(rho);
        }
        prev = rho;
    }
    Err(Error::InvalidArgument(format!(
        "power iteration failed to converge in {POWER_ITER_MAX} iterations"
    )))
}

/// Gram-Schmidt on two columns; falls back to a fresh second direction
/// when the columns become linearly dependent.
fn orthonormalize(q: &mut Array2<f64>) -> Result<()> {
    let n = q.nrows();
    let norm0 = q.column(0).dot(&q.column(0)).sqrt();
    if norm0 < 1e-300 {
        return Err(Error::InvalidArgument(
            "degenerate iterate in spectral radius estimation".into(),
        ));
    }
    for i in 0..n {
        q[[i, 0]] /= norm0;
    }
    let proj = q.column(0).dot(&q.column(1));
    for i in 0..n {
        q[[i, 1]] -= proj * q[[i, 0]];
    }
    let norm1 = q.column(1).dot(&q.column(1)).sqrt();
    if norm1 < 1e-14 {
        // dominant direction absorbed everything; re-seed the second column
        let mut rng = ChaCha8Rng::seed_from_u64(0x0dd_ba11);
        for i in 0..n {
            q[[i, 1]] = rng.gen_range(-1.0..1.0);
        }
        let proj = q.column(0).dot(&q.column(1));
        for i in 0..n {
            q[[i, 1]] -= proj * q[[i, 0]];
        }
        let norm = q.column(1).dot(&q.column(1)).sqrt();
        for i in 0..n {
            q[[i, 1]] /= norm;
        }
    } else {
        for i in 0..n {
            q[[i, 1]] /= norm1;
        }
    }
    Ok(())
}

/// Largest eigenvalue magnitude of a real 2x2 matrix.
fn max_eig_mag_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        // complex conjugate pair: |lambda|^2 = det
        det.sqrt()
    }
}

/// Solve the symmetric positive definite system `G w = b` for several
/// right-hand sides via Cholesky factorization.
fn solve_spd(gram: &Array2<f64>, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    let n = gram.nrows();
    let mut l = gram.clone();
    for j in 0..n {
        let mut diag = l[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if diag <= 0.0 {
            return Err(Error::RankDeficient(format!(
                "Gram matrix is not positive definite at pivot {j} (value {diag:.3e}); \
                 the design matrix is rank deficient, increase lambda"
            )));
        }
        let diag = diag.sqrt();
        l[[j, j]] = diag;
        for i in (j + 1)..n {
            let mut v = l[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / diag;
        }
    }
    let mut sol = rhs.clone();
    let m = rhs.ncols();
    for col in 0..m {
        // forward substitution L y = b
        for i in 0..n {
            let mut v = sol[[i, col]];
            for k in 0..i {
                v -= l[[i, k]] * sol[[k, col]];
            }
            sol[[i, col]] = v / l[[i, i]];
        }
        // back substitution L^T x = y
        for i in (0..n).rev() {
            let mut v = sol[[i, col]];
            for k in (i + 1)..n {
                v -= l[[k, i]] * sol[[k, col]];
            }
            sol[[i, col]] = v / l[[i, i]];
        }
    }
    Ok(sol)
}

/// Closed-form ridge readout `W_out = Y X^T (X X^T + lambda I)^{-1}`,
/// computed through a symmetric factorization of the Gram system.
pub fn train_readout(design: &DesignMatrices, lambda: f64) -> Result<Array2<f64>> {
    if design.x.ncols() != design.y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "design matrix has {} columns, targets have {}",
            design.x.ncols(),
            design.y.ncols()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be >= 0".into()));
    }
    let mut gram = design.x.dot(&design.x.t());
    for i in 0..gram.nrows() {
        gram[[i, i]] += lambda;
    }
    let yxt = design.y.dot(&design.x.t());
    // solve (X X^T + lambda I) W^T = X Y^T
    let sol = solve_spd(&gram, &yxt.t().to_owned())?;
    let w_out = sol.t().to_owned();
    // residual guard on the normal equations
    let resid = &w_out.dot(&gram) - &yxt;
    let num = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let den = yxt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if num > 1e-8 * den.max(1e-300) {
        return Err(Error::RankDeficient(format!(
            "ridge solve residual {num:.3e} exceeds 1e-8 * {den:.3e}; \
             the Gram system is too ill-conditioned"
        )));
    }
    Ok(w_out)
}

impl EsnModel {
    /// Draw W_in and W_res from the seeded generator and rescale W_res to
    /// the target spectral radius. Both matrices stay fixed afterwards.
    pub fn init(config: EsnConfig, latent_dim: usize) -> Result<Self> {
        config.validate()?;
        if latent_dim == 0 {
            return Err(Error::InvalidArgument("latent dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.input_scale;
        let w_in = Array2::from_shape_fn((config.n_h, latent_dim), |_| rng.gen_range(-s..s));
        let mut w_res = Array2::zeros((config.n_h, config.n_h));
        for i in 0..config.n_h {
            for j in 0..config.n_h {
                let draw: f64 = rng.gen_range(-1.0..1.0);
                if rng.gen::<f64>() < config.connectivity {
                    w_res[[i, j]] = draw;
                }
            }
        }
        let rho = spectral_radius(&w_res)?;
        if rho < 1e-300 {
            return Err(Error::InvalidArgument(
                "reservoir matrix has zero spectral radius, cannot rescale".into(),
            ));
        }
        w_res *= config.spectral_radius_target / rho;
        Ok(Self {
            config,
            latent_dim,
            w_in,
            w_res,
            w_out: None,
        })
    }

    /// One reservoir step:
    /// `h' = (1 - alpha) h + alpha tanh(W_in z + W_res h)`.
    pub fn update_state(&self, state: &EsnState, z: &[f64], alpha: f64) -> Result<EsnState> {
        if z.len() != self.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has dim {}, reservoir expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        if state.h.len() != self.config.n_h {
            return Err(Error::ShapeMismatch(format!(
                "state has dim {}, reservoir has {}",
                state.h.len(),
                self.config.n_h
            )));
        }
        let zv = Array1::from_vec(z.to_vec());
        let pre = self.w_in.dot(&zv) + self.w_res.dot(&state.h);
        let h = (1.0 - alpha) * &state.h + alpha * pre.mapv(f64::tanh);
        Ok(EsnState { h })
    }

    /// Teacher-forced state harvesting. `h(t^0)` is computed from the prior
    /// state `h0` (zero by default) and the first input; the design matrix
    /// stacks `[z(t^n); h(t^n)]` for n = 0..N_t-2 with the one-step-shifted
    /// latents as targets. The configured washout drops leading columns.
    pub fn collect_states(
        &self,
        latents: &LatentTrajectory,
        alpha: f64,
        h0: Option<&EsnState>,
    ) -> Result<(Vec<EsnState>, DesignMatrices)> {
        let m = latents.len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 latent samples to form design matrices, got {m}"
            )));
        }
        let nd = self.latent_dim;
        let nh = self.config.n_h;
        let zero = EsnState::zero(nh);
        let mut state = h0.unwrap_or(&zero).clone();
        let mut states = Vec::with_capacity(m - 1);
        for z in &latents.vectors[..m - 1] {
            state = self.update_state(&state, z, alpha)?;
            states.push(state.clone());
        }
        let washout = self.config.washout.min(m.saturating_sub(2));
        let cols = m - 1 - washout;
        let mut x = Array2::zeros((nd + nh, cols));
        let mut y = Array2::zeros((nd, cols));
        for (col, n) in (washout..m - 1).enumerate() {
            for i in 0..nd {
                x[[i, col]] = latents.vectors[n][i];
                y[[i, col]] = latents.vectors[n + 1][i];
            }
            for i in 0..nh {
                x[[nd + i, col]] = states[n].h[i];
            }
        }
        Ok((states, DesignMatrices { x, y }))
    }

    /// Harvest states over the trajectory and fit the ridge readout.
    pub fn train(&mut self, latents: &LatentTrajectory) -> Result<()> {
        let (_, design) = self.collect_states(latents, self.config.alpha, None)?;
        self.w_out = Some(train_readout(&design, self.config.lambda)?);
        Ok(())
    }

    fn readout(&self) -> Result<&Array2<f64>> {
        self.w_out.as_ref().ok_or_else(|| {
            Error::InvalidArgument("reservoir readout has not been trained".into())
        })
    }

    /// Advance the state with input `z`, then read the next latent from
    /// the stacked `[z; h]` vector.
    pub fn predict_next(&self, state: &EsnState, z: &[f64]) -> Result<(Vec<f64>, EsnState)> {
        let w_out = self.readout()?;
        let next_state = self.update_state(state, z, self.config.alpha)?;
        let nd = self.latent_dim;
        let mut z_next = vec![0.0; nd];
        for (i, out) in z_next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..nd {
                acc += w_out[[i, j]] * z[j];
            }
            for j in 0..self.config.n_h {
                acc += w_out[[i, nd + j]] * next_state.h[j];
            }
            *out = acc;
        }
        Ok((z_next, next_state))
    }

    /// Teacher-force through the warmup trajectory, then roll out
    /// `n_steps` autoregressive predictions with extrapolated times.
    pub fn forecast(&self, warmup: &LatentTrajectory, n_steps: usize) -> Result<LatentTrajectory> {
        self.readout()?;
        if warmup.is_empty() {
            return Err(Error::InvalidArgument("empty warmup trajectory".into()));
        }
        let dt = if warmup.len() >= 2 {
            warmup.times[1] - warmup.times[0]
        } else {
            1.0
        };
        let mut state = EsnState::zero(self.config.n_h);
        for z in &warmup.vectors[..warmup.len() - 1] {
            state = self.update_state(&state, z, self.config.alpha)?;
        }
        let mut z = warmup.vectors.last().unwrap().clone();
        let t_last = *warmup.times.last().unwrap();
        let mut times = Vec::with_capacity(n_steps);
        let mut vectors = Vec::with_capacity(n_steps);
        for step in 0..n_steps {
            let (z_next, next_state) = self.predict_next(&state, &z)?;
            if z_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!(
                    "forecast produced non-finite latents at step {step}"
                )));
            }
            state = next_state;
            z = z_next;
            times.push(t_last + (step + 1) as f64 * dt);
            vectors.push(z.clone());
        }
        Ok(LatentTrajectory { times, vectors })
    }

    /// One-step teacher-forced outputs over a trajectory: the prediction at
    /// each time uses the true latents up to the previous step. Returned
    /// times start at the second sample.
    pub fn teacher_forced_one_step(&self, latents: &LatentTrajectory) -> Result<LatentTrajectory> {
        self.readout()?;
        if latents.len() < 2 {
            return Err(Error::InvalidArgument("trajectory too short".into()));
        }
        let mut state = EsnState::zero(self.config.n_h);
        let mut times = Vec::with_capacity(latents.len() - 1);
        let mut vectors = Vec::with_capacity(latents.len() - 1);
        for n in 0..latents.len() - 1 {
            let (z_next, next_state) = self.predict_next(&state, &latents.vectors[n])?;
            state = next_state;
            times.push(latents.times[n + 1]);
            vectors.push(z_next);
        }
        Ok(LatentTrajectory { times, vectors })
    }

    /// Write the "ROME" checkpoint: dims, config echo, then W_in, W_res,
    /// and (when trained) W_out as dense little-endian f64 blocks.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = ByteWriter::new(BufWriter::new(file), path.display().to_string());
        w.bytes(ESN_MAGIC)?;
        w.u32(ESN_VERSION)?;
        w.u32(self.latent_dim as u32)?;
        w.u32(self.config.n_h as u32)?;
        w.f64(self.config.alpha)?;
        w.f64(self.config.lambda)?;
        w.f64(self.config.spectral_radius_target)?;
        w.f64(self.config.connectivity)?;
        w.f64(self.config.input_scale)?;
        w.u64(self.config.seed)?;
        w.u32(self.config.washout as u32)?;
        w.f64_slice(self.w_in.as_slice().unwrap())?;
        w.f64_slice(self.w_res.as_slice().unwrap())?;
        match &self.w_out {
            Some(m) => {
                w.u32(1)?;
                w.f64_slice(m.as_slice().unwrap())?;
            }
            None => w.u32(0)?,
        }
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = ByteReader::new(BufReader::new(file), path.display().to_string());
        r.magic(ESN_MAGIC)?;
        let version = r.u32()?;
        if version != ESN_VERSION {
            return Err(Error::format(
                r.path(),
                format!("unsupported reservoir checkpoint version {version}"),
            ));
        }
        let nd = r.u32()? as usize;
        let nh = r.u32()? as usize;
        let config = EsnConfig {
            n_h: nh,
            alpha: r.f64()?,
            lambda: r.f64()?,
            spectral_radius_target: r.f64()?,
            connectivity: r.f64()?,
            input_scale: r.f64()?,
            seed: r.u64()?,
            washout: r.u32()? as usize,
        };
        let w_in = Array2::from_shape_vec((nh, nd), r.f64_vec(nh * nd)?).unwrap();
        let w_res = Array2::from_shape_vec((nh, nh), r.f64_vec(nh * nh)?).unwrap();
        let w_out = if r.u32()? != 0 {
            Some(Array2::from_shape_vec((nd, nd + nh), r.f64_vec(nd * (nd + nh))?).unwrap())
        } else {
            None
        };
        Ok(Self {
            config,
            latent_dim: nd,
            w_in,
            w_res,
            w_out,
        })
    }
}
