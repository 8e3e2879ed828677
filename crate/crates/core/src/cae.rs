//! Convolutional autoencoder assembly, training, and inference.
//!
//! The plain CAE uses one stride-2 convolution per resolution level and a
//! single dense layer down to the latent vector. The extended variant
//! (E-CAE) stacks `n_f` convolution blocks per level and inserts a dense
//! chain between the flatten layer and the latent space. The decoder
//! mirrors the encoder level for level, with transposed convolutions
//! carrying the exact target extents so odd grid sizes invert cleanly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::grid::{relative_l2_error, GridSpec, NormStats, Snapshot, SnapshotSet};
use crate::nn::{
    adam_step, mse_loss, read_stack, write_stack, Activation, AdamState, ConvLayer, DenseLayer,
    Layer, Stack, Tensor,
};
use crate::{Error, Result};

pub const CAE_MAGIC: &[u8; 4] = b"ROMW";
pub const CAE_VERSION: u32 = 1;

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeConfig {
    /// Number of resolution levels L.
    pub levels: usize,
    /// Filter counts per level, length L.
    pub filters: Vec<usize>,
    /// Stacked conv blocks per level; 1 gives the plain CAE.
    pub n_f: usize,
    /// Latent dimension N_d.
    pub latent_dim: usize,
    /// Hidden dense widths between flatten and latent; empty for plain CAE.
    pub dense_widths: Vec<usize>,
    pub activation: Activation,
    pub kernel: usize,
    pub stride: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            filters: vec![32, 16, 8],
            n_f: 1,
            latent_dim: 4,
            dense_widths: vec![],
            activation: Activation::Elu,
            kernel: 3,
            stride: 2,
            seed: 0,
            epochs: 100,
            batch_size: 16,
            lr: 1e-3,
        }
    }
}

impl CaeConfig {
    /// Default dense chain for the extended variant.
    pub fn ecae_dense_widths() -> Vec<usize> {
        vec![128, 32]
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.levels == 0 || self.filters.len() != self.levels {
            return Err(Error::InvalidArgument(format!(
                "need one filter count per level: L={}, filters={:?}",
                self.levels, self.filters
            )));
        }
        if self.filters.iter().any(|&f| f == 0) || self.n_f == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "filter counts, n_f, and latent_dim must be >= 1".into(),
            ));
        }
        if self.latent_dim >= grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "latent dim {} must be smaller than the cell count {}",
                self.latent_dim,
                grid.n_cells()
            )));
        }
        if self.kernel == 0 || self.stride == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "kernel, stride, and batch_size must be >= 1".into(),
            ));
        }
        let min_extent = 1usize << self.levels;
        let mut extents = vec![grid.nx, grid.ny];
        if !grid.is_2d() {
            extents.push(grid.nz);
        }
        if extents.iter().any(|&e| e < min_extent) {
            return Err(Error::InvalidArgument(format!(
                "grid extents {extents:?} too small for {} halvings",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Time-indexed latent vectors z(t).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl LatentTrajectory {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    /// CSV export with columns t, z1..zN.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path.display().to_string(), e);
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("z{i}")).collect();
        writeln!(w, "t,{}", header.join(",")).map_err(io_err)?;
        for (t, z) in self.times.iter().zip(&self.vectors) {
            let row: Vec<String> = z.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{t},{}", row.join(",")).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = BufReader::new(file);
        let mut times = Vec::new();
        let mut vectors = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if i == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::format(path.display().to_string(), format!("bad number '{s}'"))
                })
            };
            let t = parse(fields.next().ok_or_else(|| {
                Error::format(path.display().to_string(), "empty row")
            })?)?;
            let z: Vec<f64> = fields.map(parse).collect::<Result<_>>()?;
            times.push(t);
            vectors.push(z);
        }
        Ok(Self { times, vectors })
    }
}

/// A built (and possibly trained) autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub config: CaeConfig,
    pub grid: GridSpec,
    pub encoder: Stack,
    pub decoder: Stack,
    pub norm: NormStats,
    /// Mean training-set relative L2 error in percent, recorded by `train`.
    pub train_error_pct: Option<f64>,
}

impl CaeModel {
    /// Assemble encoder and decoder for the given grid with seeded
    /// deterministic initialization.
    pub fn build(config: CaeConfig, grid: GridSpec) -> Result<Self> {
        config.validate(&grid)?;
        let rank = if grid.is_2d() { 2 } else { 3 };
        let pad = config.kernel / 2;
        let act = config.activation;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        // spatial extents seen at the input of each level's stride-2 conv
        let mut level_inputs: Vec<Vec<usize>> = Vec::with_capacity(config.levels);
        let mut spatial: Vec<usize> = if grid.is_2d() {
            vec![grid.ny, grid.nx]
        } else {
            vec![grid.nz, grid.ny, grid.nx]
        };

        let mut encoder = Vec::new();
        let mut c_prev = 1usize;
        for level in 0..config.levels {
            level_inputs.push(spatial.clone());
            let c = config.filters[level];
            let mut down = ConvLayer::new(c_prev, c, config.kernel, rank, config.stride, pad);
            down.init_glorot(&mut rng);
            encoder.push(Layer::Conv(down));
            encoder.push(Layer::Act(act));
            for _ in 1..config.n_f {
                let mut same = ConvLayer::new(c, c, config.kernel, rank, 1, pad);
                same.init_glorot(&mut rng);
                encoder.push(Layer::Conv(same));
                encoder.push(Layer::Act(act));
            }
            spatial = spatial
                .iter()
                .map(|&e| (e + 2 * pad - config.kernel) / config.stride + 1)
                .collect();
            c_prev = c;
        }
        encoder.push(Layer::Flatten);
        let flat_dim = c_prev * spatial.iter().product::<usize>();
        let mut f_prev = flat_dim;
        for &width in &config.dense_widths {
            let mut d = DenseLayer::new(f_prev, width);
            d.init_glorot(&mut rng);
            encoder.push(Layer::Dense(d));
            encoder.push(Layer::Act(act));
            f_prev = width;
        }
        let mut to_latent = DenseLayer::new(f_prev, config.latent_dim);
        to_latent.init_glorot(&mut rng);
        encoder.push(Layer::Dense(to_latent)); // linear latent output

        let mut decoder = Vec::new();
        let mut f_prev = config.latent_dim;
        for &width in config.dense_widths.iter().rev() {
            let mut d = DenseLayer::new(f_prev, width);
            d.init_glorot(&mut rng);
            decoder.push(Layer::Dense(d));
            decoder.push(Layer::Act(act));
            f_prev = width;
        }
        let mut expand = DenseLayer::new(f_prev, flat_dim);
        expand.init_glorot(&mut rng);
        decoder.push(Layer::Dense(expand));
        decoder.push(Layer::Act(act));
        let mut unflat_shape = vec![c_prev];
        unflat_shape.extend_from_slice(&spatial);
        decoder.push(Layer::Unflatten {
            shape: unflat_shape,
        });
        for level in (0..config.levels).rev() {
            let c = config.filters[level];
            for _ in 1..config.n_f {
                let mut same = ConvLayer::new(c, c, config.kernel, rank, 1, pad);
                same.init_glorot(&mut rng);
                decoder.push(Layer::Conv(same));
                decoder.push(Layer::Act(act));
            }
            let c_out = if level == 0 {
                1
            } else {
                config.filters[level - 1]
            };
            let mut up = ConvLayer::new_transposed(
                c_out,
                c,
                config.kernel,
                rank,
                config.stride,
                pad,
                Some(level_inputs[level].clone()),
            );
            up.init_glorot(&mut rng);
            decoder.push(Layer::Conv(up));
            if level > 0 {
                decoder.push(Layer::Act(act)); // last deconv stays linear
            }
        }

        Ok(Self {
            config,
            grid,
            encoder: Stack::new(encoder),
            decoder: Stack::new(decoder),
            norm: NormStats::identity(),
            train_error_pct: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    fn input_shape(&self, batch: usize) -> Vec<usize> {
        if self.grid.is_2d() {
            vec![batch, 1, self.grid.ny, self.grid.nx]
        } else {
            vec![batch, 1, self.grid.nz, self.grid.ny, self.grid.nx]
        }
    }

    /// Normalized batch tensor from physical snapshots.
    fn batch_tensor(&self, snapshots: &[&Snapshot]) -> Result<Tensor> {
        let nc = self.grid.n_cells();
        let mut data = Vec::with_capacity(snapshots.len() * nc);
        for s in snapshots {
            if s.values.len() != nc {
                return Err(Error::ShapeMismatch(format!(
                    "snapshot has {} cells, model grid has {nc}",
                    s.values.len()
                )));
            }
            data.extend(s.values.iter().map(|&v| self.norm.forward(v)));
        }
        Ok(Tensor::from_vec(self.input_shape(snapshots.len()), data))
    }

    /// Map a physical snapshot to its latent vector.
    pub fn encode(&self, snapshot: &Snapshot) -> Result<Vec<f64>> {
        let x = self.batch_tensor(&[snapshot])?;
        let z = self.encoder.forward(&x)?;
        Ok(z.data)
    }

    /// Map a latent vector back to a physical full-grid snapshot.
    pub fn decode(&self, z: &[f64]) -> Result<Snapshot> {
        if z.len() != self.config.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "latent vector has length {}, model expects {}",
                z.len(),
                self.config.latent_dim
            )));
        }
        let zt = Tensor::from_vec(vec![1, z.len()], z.to_vec());
        let y = self.decoder.forward(&zt)?;
        let values = y.data.iter().map(|&v| self.norm.inverse(v)).collect();
        Ok(Snapshot::new(values, 0.0))
    }

    /// Encode every snapshot of a set, preserving times. Runs in batches so
    /// the kernels can parallelize over samples.
    pub fn encode_set(&self, set: &SnapshotSet) -> Result<LatentTrajectory> {
        if set.grid != self.grid {
            return Err(Error::ShapeMismatch(
                "snapshot set grid differs from model grid".into(),
            ));
        }
        let nd = self.config.latent_dim;
        let mut vectors = Vec::with_capacity(set.len());
        for chunk in set.snapshots.chunks(self.config.batch_size.max(1)) {
            let refs: Vec<&Snapshot> = chunk.iter().collect();
            let x = self.batch_tensor(&refs)?;
            let z = self.encoder.forward(&x)?;
            for b in 0..chunk.len() {
                vectors.push(z.data[b * nd..(b + 1) * nd].to_vec());
            }
        }
        Ok(LatentTrajectory {
            times: set.times(),
            vectors,
        })
    }

    /// Decode a latent trajectory into a snapshot set.
    pub fn decode_trajectory(&self, traj: &LatentTrajectory, dt: f64) -> Result<SnapshotSet> {
        let mut snapshots = Vec::with_capacity(traj.len());
        for (t, z) in traj.times.iter().zip(&traj.vectors) {
            let mut s = self.decode(z)?;
            s.time = *t;
            snapshots.push(s);
        }
        SnapshotSet::new(self.grid, snapshots, dt)
    }

    /// Minimize the mean squared reconstruction error over the training set
    /// with mini-batch adaptive-moment descent. Returns the per-epoch mean
    /// loss; the final mean training relative L2 error is recorded on the
    /// model. With `epochs == 0` the model is left untouched.
    pub fn train(&mut self, train_set: &SnapshotSet) -> Result<Vec<f64>> {
        if train_set.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if self.config.epochs == 0 {
            return Ok(Vec::new());
        }
        self.norm = NormStats::from_set(train_set)?;

        let n_layers = self.encoder.layers.len() + self.decoder.layers.len();
        let mut adam: Vec<Option<(AdamState, AdamState)>> = self
            .encoder
            .layers
            .iter()
            .chain(&self.decoder.layers)
            .map(|l| match l {
                Layer::Conv(c) => Some((
                    AdamState::new(c.weights.numel(), self.config.lr),
                    AdamState::new(c.bias.len(), self.config.lr),
                )),
                Layer::Dense(d) => Some((
                    AdamState::new(d.weights.numel(), self.config.lr),
                    AdamState::new(d.bias.len(), self.config.lr),
                )),
                _ => None,
            })
            .collect();
        assert_eq!(adam.len(), n_layers);

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut log = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut n_samples = 0usize;
            for batch in order.chunks(self.config.batch_size) {
                let refs: Vec<&Snapshot> =
                    batch.iter().map(|&i| &train_set.snapshots[i]).collect();
                let x = self.batch_tensor(&refs)?;
                let (enc_inputs, z) = self.encoder.forward_cached(&x)?;
                let (dec_inputs, y) = self.decoder.forward_cached(&z)?;
                let (loss, gy) = mse_loss(&y, &x)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch}"
                    )));
                }
                epoch_loss += loss * batch.len() as f64;
                n_samples += batch.len();
                let (gz, dec_grads) = self.decoder.backward(&dec_inputs, &gy)?;
                let (_, enc_grads) = self.encoder.backward(&enc_inputs, &gz)?;

                let enc_len = self.encoder.layers.len();
                let layers = self
                    .encoder
                    .layers
                    .iter_mut()
                    .chain(self.decoder.layers.iter_mut());
                for (li, layer) in layers.enumerate() {
                    let grads = if li < enc_len {
                        &enc_grads[li]
                    } else {
                        &dec_grads[li - enc_len]
                    };
                    if let (Some(g), Some((st_w, st_b)), Some((w, b))) =
                        (grads.as_ref(), adam[li].as_mut(), layer.params_mut())
                    {
                        adam_step(w, &g.weights.data, st_w)?;
                        adam_step(b, &g.bias, st_b)?;
                    }
                }
            }
            log.push(epoch_loss / n_samples as f64);
        }

        // record the achieved training reconstruction error in physical units
        let recon = self.reconstruct_set(train_set)?;
        let mut total = 0.0;
        for (truth, approx) in train_set.snapshots.iter().zip(&recon.snapshots) {
            total += relative_l2_error(truth, approx)?;
        }
        self.train_error_pct = Some(total / train_set.len() as f64);
        Ok(log)
    }

    /// decode(encode(x)) over a whole set, batched.
    pub fn reconstruct_set(&self, set: &SnapshotSet) -> Result<SnapshotSet> {
        let nc = self.grid.n_cells();
        let mut snapshots = Vec::with_capacity(set.len());
        for chunk in set.snapshots.chunks(self.config.batch_size.max(1)) {
            let refs: Vec<&Snapshot> = chunk.iter().collect();
            let x = self.batch_tensor(&refs)?;
            let z = self.encoder.forward(&x)?;
            let y = self.decoder.forward(&z)?;
            for (b, s) in chunk.iter().enumerate() {
                let values = y.data[b * nc..(b + 1) * nc]
                    .iter()
                    .map(|&v| self.norm.inverse(v))
                    .collect();
                snapshots.push(Snapshot::new(values, s.time));
            }
        }
        SnapshotSet::new(self.grid, snapshots, set.dt)
    }

    /// Write the "ROMW" checkpoint: model manifest (config echo, grid,
    /// normalization stats) followed by the encoder and decoder stacks.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = ByteWriter::new(BufWriter::new(file), path.display().to_string());
        w.bytes(CAE_MAGIC)?;
        w.u32(CAE_VERSION)?;
        let c = &self.config;
        w.u32(c.levels as u32)?;
        for &f in &c.filters {
            w.u32(f as u32)?;
        }
        w.u32(c.n_f as u32)?;
        w.u32(c.latent_dim as u32)?;
        w.u32(c.dense_widths.len() as u32)?;
        for &d in &c.dense_widths {
            w.u32(d as u32)?;
        }
        w.str(c.activation.name())?;
        w.u32(c.kernel as u32)?;
        w.u32(c.stride as u32)?;
        w.u64(c.seed)?;
        w.u32(c.epochs as u32)?;
        w.u32(c.batch_size as u32)?;
        w.f64(c.lr)?;
        let g = &self.grid;
        for v in [g.nx, g.ny, g.nz] {
            w.u32(v as u32)?;
        }
        for v in [g.dx, g.dy, g.dz, g.x0, g.y0, g.z0] {
            w.f64(v)?;
        }
        w.f64(self.norm.vmin)?;
        w.f64(self.norm.vmax)?;
        match self.train_error_pct {
            Some(e) => {
                w.u32(1)?;
                w.f64(e)?;
            }
            None => w.u32(0)?,
        }
        write_stack(&mut w, &self.encoder)?;
        write_stack(&mut w, &self.decoder)?;
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = ByteReader::new(BufReader::new(file), path.display().to_string());
        r.magic(CAE_MAGIC)?;
        let version = r.u32()?;
        if version != CAE_VERSION {
            return Err(Error::format(
                r.path(),
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let levels = r.u32()? as usize;
        let mut filters = Vec::with_capacity(levels);
        for _ in 0..levels {
            filters.push(r.u32()? as usize);
        }
        let n_f = r.u32()? as usize;
        let latent_dim = r.u32()? as usize;
        let n_dense = r.u32()? as usize;
        let mut dense_widths = Vec::with_capacity(n_dense);
        for _ in 0..n_dense {
            dense_widths.push(r.u32()? as usize);
        }
        let activation = Activation::from_name(&r.str()?)?;
        let kernel = r.u32()? as usize;
        let stride = r.u32()? as usize;
        let seed = r.u64()?;
        let epochs = r.u32()? as usize;
        let batch_size = r.u32()? as usize;
        let lr = r.f64()?;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let nz = r.u32()? as usize;
        let dx = r.f64()?;
        let dy = r.f64()?;
        let dz = r.f64()?;
        let x0 = r.f64()?;
        let y0 = r.f64()?;
        let z0 = r.f64()?;
        let norm = NormStats {
            vmin: r.f64()?,
            vmax: r.f64()?,
        };
        let train_error_pct = if r.u32()? != 0 { Some(r.f64()?) } else { None };
        let encoder = read_stack(&mut r)?;
        let decoder = read_stack(&mut r)?;
        Ok(Self {
            config: CaeConfig {
                levels,
                filters,
                n_f,
                latent_dim,
                dense_widths,
                activation,
                kernel,
                stride,
                seed,
                epochs,
                batch_size,
                lr,
            },
            grid: GridSpec {
                nx,
                ny,
                nz,
                dx,
                dy,
                dz,
                x0,
                y0,
                z0,
            },
            encoder,
            decoder,
            norm,
            train_error_pct,
        })
    }
}
