//! Reproducible pipeline stages behind the command line tool.
//!
//! Every stage takes a [`RunConfig`] and writes its results under
//! `cfg.out_dir`. One master seed fans out to per-stage seeds by fixed
//! offsets, so a single number reproduces a whole run.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::closed_loop::{rollout, ControlModel, RolloutConfig, RolloutLog};
use crate::control::{build_distance_field, enumerate_actions, ActionGrid, TargetSet};
use crate::error::{Error, Result};
use crate::foresight::{
    default_lengths, load_model, particles_from_image, predict_linear, rasterize_particles, save_model, train_switched_linear,
    transport_predict, SwitchedLinearModel, TransportModel,
};
use crate::geometry::{canonical_transform, pixel_center, push_rectangle, warp_image, Action};
use crate::imaging::{frobenius_distance, save_pgm, Grid, Image};
use crate::lsq::{FitMode, PairedDataset, SolverConfig, TransitionMatrix};
use crate::simulator::{apply_push, rasterize, spawn_scene, spawn_scene_groups, Region, Scene, SimConfig};

pub const DATASET_MAGIC: [u8; 4] = *b"SLDS";
pub const DATASET_VERSION: u32 = 1;

const SEED_COLLECT: u64 = 1_000;
const SEED_SPLIT: u64 = 2_000;
const SEED_EVAL: u64 = 3_000;
const SEED_TRANSPORT: u64 = 4_000;
const SEED_ROLLOUT: u64 = 10_000;

/// Rejection-sampling budget when looking for a push that meets a piece.
const ACTION_TRIES: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub grid_positions: usize,
    pub grid_angles: usize,
    pub grid_filter: bool,
    pub sim: SimConfig,
    pub solver: SolverConfig<f64>,
    pub lengths: Vec<f64>,
    pub samples_per_length: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Piece count range for training scenes.
    pub collect_pieces_min: usize,
    pub collect_pieces_max: usize,
    /// Side range of the random square that training scenes spawn in.
    pub collect_region_min: f64,
    pub collect_region_max: f64,
    /// Upper bound on extra pieces scattered over the whole board per training scene.
    pub collect_scatter_max: usize,
    pub eval_samples: usize,
    pub rollout_pieces: usize,
    pub rollout_region_lo: f64,
    pub rollout_region_hi: f64,
    pub runs: usize,
    pub max_steps: usize,
    pub v_stop: f64,
    pub p_norm: f64,
    pub target_side: f64,
    pub transport_band_depth: f64,
    pub transport_band_width: f64,
    /// Occupancy above which a pixel becomes a transport particle.
    pub particle_threshold: f64,
    pub save_frames: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let w = sim.pusher_width;
        Self {
            n: 32,
            grid_positions: 8,
            grid_angles: 8,
            grid_filter: true,
            sim,
            solver: SolverConfig::default(),
            lengths: default_lengths(),
            samples_per_length: 1000,
            test_fraction: 0.2,
            seed: 0,
            out_dir: PathBuf::from("out"),
            collect_pieces_min: 30,
            collect_pieces_max: 80,
            collect_region_min: 0.2,
            collect_region_max: 0.45,
            collect_scatter_max: 6,
            eval_samples: 1000,
            rollout_pieces: 50,
            rollout_region_lo: 0.1,
            rollout_region_hi: 0.9,
            runs: 10,
            max_steps: 40,
            v_stop: 0.02,
            p_norm: 2.0,
            target_side: 0.5,
            transport_band_depth: 0.5 * w,
            transport_band_width: w,
            particle_threshold: 0.25,
            save_frames: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n" => self.n = parse(key, v)?,
            "grid_positions" => self.grid_positions = parse(key, v)?,
            "grid_angles" => self.grid_angles = parse(key, v)?,
            "grid_filter" => self.grid_filter = parse_bool(key, v)?,
            "piece_radius" => self.sim.piece_radius = parse(key, v)?,
            "verts_per_piece" => self.sim.verts_per_piece = parse(key, v)?,
            "substeps_per_unit_length" => self.sim.substeps_per_unit_length = parse(key, v)?,
            "settle_iterations" => self.sim.settle_iterations = parse(key, v)?,
            "overlap_tol" => self.sim.overlap_tol = parse(key, v)?,
            "supersample" => self.sim.supersample = parse(key, v)?,
            "pusher_width" => self.sim.pusher_width = parse(key, v)?,
            "ridge" => self.solver.ridge = parse(key, v)?,
            "kkt_tol" => self.solver.kkt_tol = parse(key, v)?,
            "max_iters" => self.solver.max_iters = parse(key, v)?,
            "lengths" => {
                self.lengths = v.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?;
            }
            "samples_per_length" => self.samples_per_length = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "collect_pieces_min" => self.collect_pieces_min = parse(key, v)?,
            "collect_pieces_max" => self.collect_pieces_max = parse(key, v)?,
            "collect_region_min" => self.collect_region_min = parse(key, v)?,
            "collect_region_max" => self.collect_region_max = parse(key, v)?,
            "collect_scatter_max" => self.collect_scatter_max = parse(key, v)?,
            "eval_samples" => self.eval_samples = parse(key, v)?,
            "rollout_pieces" => self.rollout_pieces = parse(key, v)?,
            "rollout_region_lo" => self.rollout_region_lo = parse(key, v)?,
            "rollout_region_hi" => self.rollout_region_hi = parse(key, v)?,
            "runs" => self.runs = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "v_stop" => self.v_stop = parse(key, v)?,
            "p_norm" => self.p_norm = parse(key, v)?,
            "target_side" => self.target_side = parse(key, v)?,
            "transport_band_depth" => self.transport_band_depth = parse(key, v)?,
            "transport_band_width" => self.transport_band_width = parse(key, v)?,
            "particle_threshold" => self.particle_threshold = parse(key, v)?,
            "save_frames" => self.save_frames = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_text(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let lengths: Vec<String> = self.lengths.iter().map(|l| l.to_string()).collect();
        let entries: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("grid_positions", self.grid_positions.to_string()),
            ("grid_angles", self.grid_angles.to_string()),
            ("grid_filter", self.grid_filter.to_string()),
            ("piece_radius", self.sim.piece_radius.to_string()),
            ("verts_per_piece", self.sim.verts_per_piece.to_string()),
            ("substeps_per_unit_length", self.sim.substeps_per_unit_length.to_string()),
            ("settle_iterations", self.sim.settle_iterations.to_string()),
            ("overlap_tol", self.sim.overlap_tol.to_string()),
            ("supersample", self.sim.supersample.to_string()),
            ("pusher_width", self.sim.pusher_width.to_string()),
            ("ridge", self.solver.ridge.to_string()),
            ("kkt_tol", self.solver.kkt_tol.to_string()),
            ("max_iters", self.solver.max_iters.to_string()),
            ("lengths", lengths.join(",")),
            ("samples_per_length", self.samples_per_length.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("collect_pieces_min", self.collect_pieces_min.to_string()),
            ("collect_pieces_max", self.collect_pieces_max.to_string()),
            ("collect_region_min", self.collect_region_min.to_string()),
            ("collect_region_max", self.collect_region_max.to_string()),
            ("collect_scatter_max", self.collect_scatter_max.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("rollout_pieces", self.rollout_pieces.to_string()),
            ("rollout_region_lo", self.rollout_region_lo.to_string()),
            ("rollout_region_hi", self.rollout_region_hi.to_string()),
            ("runs", self.runs.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("v_stop", self.v_stop.to_string()),
            ("p_norm", self.p_norm.to_string()),
            ("target_side", self.target_side.to_string()),
            ("transport_band_depth", self.transport_band_depth.to_string()),
            ("transport_band_width", self.transport_band_width.to_string()),
            ("particle_threshold", self.particle_threshold.to_string()),
            ("save_frames", self.save_frames.to_string()),
        ];
        entries.into_iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        if self.samples_per_length < 10 {
            return bad(format!("samples_per_length = {} must be at least 10", self.samples_per_length));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction = {} must lie in (0, 1)", self.test_fraction));
        }
        if self.lengths.is_empty() || self.lengths.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("lengths must be a non-empty increasing list".into());
        }
        if self.lengths.iter().any(|&l| !(l > 0.0 && l <= crate::geometry::MAX_PUSH_LENGTH)) {
            return bad("lengths must lie in (0, 0.5]".into());
        }
        if self.collect_pieces_min == 0 || self.collect_pieces_min > self.collect_pieces_max {
            return bad("collect piece range is empty".into());
        }
        if !(self.collect_region_min > 0.0 && self.collect_region_min <= self.collect_region_max && self.collect_region_max <= 1.0) {
            return bad("collect region side range must lie in (0, 1]".into());
        }
        if !(self.rollout_region_lo < self.rollout_region_hi) {
            return bad("rollout region is empty".into());
        }
        if self.max_steps == 0 || self.runs == 0 {
            return bad("runs and max_steps must be positive".into());
        }
        if !(self.sim.pusher_width > 0.0) {
            return bad("pusher_width must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self, lengths: &[f64]) -> ActionGrid<f64> {
        ActionGrid::new(self.grid_positions, self.grid_angles, lengths.to_vec(), self.grid_filter)
    }

    pub fn transport_model(&self) -> TransportModel<f64> {
        TransportModel {
            band_depth: self.transport_band_depth,
            band_width: self.transport_band_width,
            pusher_width: self.sim.pusher_width,
            rng_seed_base: self.seed.wrapping_add(SEED_TRANSPORT),
        }
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        RolloutConfig {
            max_steps: self.max_steps,
            v_stop: self.v_stop,
            resolution: self.n,
            record_frames: self.save_frames,
            particle_threshold: self.particle_threshold,
            ..RolloutConfig::default()
        }
    }

    pub fn dataset_path(&self, bucket: usize) -> PathBuf {
        self.out_dir.join(format!("data_{bucket}.slds"))
    }

    pub fn model_path(&self, mode: FitMode) -> PathBuf {
        self.out_dir.join(format!("model_{}.slvf", mode.name()))
    }

    /// Initial scene of rollout `run`.
    pub fn rollout_scene(&self, run: usize) -> Result<Scene> {
        let region = Region::square(self.rollout_region_lo, self.rollout_region_hi);
        spawn_scene(&self.sim, self.rollout_pieces, region, self.seed.wrapping_add(SEED_ROLLOUT + run as u64))
    }
}

/// Canonical-frame image pairs for one push length.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub n: usize,
    pub length: f64,
    pub pairs: Vec<(Image<f64>, Image<f64>)>,
}

impl DatasetFile {
    pub fn to_paired(&self, bucket: usize) -> Result<PairedDataset<f64>> {
        PairedDataset::from_image_pairs(&self.pairs, bucket)
    }
}

pub fn write_dataset<W: Write>(d: &DatasetFile, mut w: W) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(d.n as u32).to_le_bytes())?;
    w.write_all(&d.length.to_le_bytes())?;
    w.write_all(&(d.pairs.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(d.n * d.n * 16);
    for (a, b) in &d.pairs {
        buf.clear();
        for v in a.as_slice().iter().chain(b.as_slice()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<DatasetFile> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let take = |pos: &mut usize, k: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - *pos < k {
            return Err(Error::Truncated(format!("dataset ended while reading {what}")));
        }
        *pos += k;
        Ok(&bytes[*pos - k..*pos])
    };
    let mut pos = 0;
    let magic: [u8; 4] = take(&mut pos, 4, "magic")?.try_into().expect("4 bytes");
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic { expected: DATASET_MAGIC, found: magic });
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch { expected: DATASET_VERSION, found: version });
    }
    let n = u32::from_le_bytes(take(&mut pos, 4, "resolution")?.try_into().expect("4 bytes")) as usize;
    let length = f64::from_le_bytes(take(&mut pos, 8, "length")?.try_into().expect("8 bytes"));
    let count = u32::from_le_bytes(take(&mut pos, 4, "pair count")?.try_into().expect("4 bytes")) as usize;
    let d = n * n;
    let mut pairs = Vec::with_capacity(count);
    for k in 0..count {
        let block = take(&mut pos, 16 * d, &format!("pair {k}"))?;
        let vals: Vec<f64> = block.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let (a, b) = vals.split_at(d);
        pairs.push((Image::new(n, a.to_vec())?, Image::new(n, b.to_vec())?));
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after {count} pairs", bytes.len() - pos)));
    }
    Ok(DatasetFile { n, length, pairs })
}

pub fn save_dataset(d: &DatasetFile, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(d, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetFile> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Whether any occupied pixel center lies inside the push rectangle.
pub fn rectangle_hits_mass(img: &Image<f64>, a: &Action<f64>, width: f64) -> bool {
    let rect = push_rectangle(a, width);
    let n = img.n();
    (0..n * n).any(|k| img.as_slice()[k] > 0.0 && rect.contains(pixel_center(n, k / n, k % n)))
}

/// Mass of the canonical image inside the canonical push corridor.
pub fn corridor_mass(canon: &Image<f64>, length: f64, width: f64) -> f64 {
    let a = Action::canonical(length).expect("valid canonical length");
    let rect = push_rectangle(&a, width);
    let n = canon.n();
    (0..n * n).filter(|&k| rect.contains(pixel_center(n, k / n, k % n))).map(|k| canon.as_slice()[k]).sum()
}

/// One simulated transition: scene, push and both rasterized frames.
#[derive(Clone, Debug)]
pub struct Transition {
    pub action: Action<f64>,
    pub before: Image<f64>,
    pub after: Image<f64>,
}

/// Spawns a random scene and a random push of the given length that meets
/// occupied pixels and stays on the board; retries with fresh scenes.
pub fn sample_transition(cfg: &RunConfig, length: f64, rng: &mut ChaCha8Rng) -> Result<Transition> {
    loop {
        let count = rng.gen_range(cfg.collect_pieces_min..=cfg.collect_pieces_max);
        let side = rng.gen_range(cfg.collect_region_min..=cfg.collect_region_max);
        let x0 = rng.gen_range(0.0..=1.0 - side);
        let y0 = rng.gen_range(0.0..=1.0 - side);
        let scatter = rng.gen_range(0..=cfg.collect_scatter_max);
        let groups = [(count, Region::new(x0, y0, x0 + side, y0 + side)), (scatter, Region::square(0.05, 0.95))];
        let scene = spawn_scene_groups(&cfg.sim, &groups, rng.gen())?;
        let before = rasterize(&scene, cfg.n, cfg.sim.supersample);
        for _ in 0..ACTION_TRIES {
            let a = Action::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen_range(0.0..std::f64::consts::TAU), length)?;
            let e = a.end();
            if !(0.0..=1.0).contains(&e.x) || !(0.0..=1.0).contains(&e.y) {
                continue;
            }
            if !rectangle_hits_mass(&before, &a, cfg.sim.pusher_width) {
                continue;
            }
            let canon_before = warp_image(&before, &canonical_transform(&a));
            if corridor_mass(&canon_before, length, cfg.sim.pusher_width) <= 0.0 {
                continue;
            }
            let after = rasterize(&apply_push(&scene, &a, &cfg.sim), cfg.n, cfg.sim.supersample);
            return Ok(Transition { action: a, before, after });
        }
    }
}

/// Collects one bucket of canonical-frame pairs.
pub fn collect_bucket(cfg: &RunConfig, bucket: usize) -> Result<DatasetFile> {
    let length = *cfg.lengths.get(bucket).ok_or_else(|| Error::OutOfRange(format!("bucket {bucket}")))?;
    // one stream per sample keeps the work parallel and the output order fixed
    let base = cfg.seed.wrapping_add(SEED_COLLECT * (bucket as u64 + 1));
    let pairs = (0..cfg.samples_per_length)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(s as u64);
            let tr = sample_transition(cfg, length, &mut rng)?;
            let t = canonical_transform(&tr.action);
            Ok((warp_image(&tr.before, &t), warp_image(&tr.after, &t)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetFile { n: cfg.n, length, pairs })
}

pub fn cmd_collect(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut paths = Vec::new();
    for bucket in 0..cfg.lengths.len() {
        let d = collect_bucket(cfg, bucket)?;
        let path = cfg.dataset_path(bucket);
        save_dataset(&d, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Seeded shuffle of `0..count`, split into `(train, test)`.
pub fn split_indices(count: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((count as f64 * test_fraction).round() as usize).clamp(1, count.saturating_sub(1).max(1));
    let test = idx.split_off(count - n_test);
    (idx, test)
}

/// Mean Frobenius distance between `clamp(A y0)` and `y1`.
pub fn mean_clamped_error(a: &TransitionMatrix<f64>, data: &PairedDataset<f64>) -> f64 {
    if data.samples() == 0 {
        return 0.0;
    }
    let total: f64 = (0..data.samples())
        .into_par_iter()
        .map(|s| {
            let pred = a.apply(data.pre_column(s));
            pred.iter().zip(data.post_column(s)).map(|(&p, &y)| (p.clamp(0.0, 1.0) - y).powi(2)).sum::<f64>().sqrt()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / data.samples() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRow {
    pub mode: FitMode,
    pub bucket: usize,
    pub length: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_err: f64,
    pub test_err: f64,
}

pub const TRAIN_CSV_HEADER: &str = "mode,bucket,length,n_train,n_test,train_err,test_err";
pub const EVAL_CSV_HEADER: &str = "model,n_test,mean_err";
pub const ROLLOUT_CSV_HEADER: &str = "run,step,V_pred,V_real,status";

pub fn train_csv(rows: &[TrainRow]) -> String {
    let mut s = format!("{TRAIN_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.mode, r.bucket, r.length, r.n_train, r.n_test, r.train_err, r.test_err);
    }
    s
}

/// Fits one model per mode on the same split, writes the model files and
/// `train_errors.csv`.
pub fn cmd_train(cfg: &RunConfig, modes: &[FitMode]) -> Result<Vec<TrainRow>> {
    cfg.validate()?;
    let mut train_sets = Vec::new();
    let mut test_sets = Vec::new();
    let mut lengths = Vec::new();
    for bucket in 0..cfg.lengths.len() {
        let path = cfg.dataset_path(bucket);
        if !path.exists() {
            return Err(Error::Config(format!("missing dataset {}", path.display())));
        }
        let file = load_dataset(&path)?;
        if file.pairs.is_empty() {
            return Err(Error::EmptyBucket(bucket));
        }
        let data = file.to_paired(bucket)?;
        let (tr, te) = split_indices(data.samples(), cfg.test_fraction, cfg.seed.wrapping_add(SEED_SPLIT + bucket as u64));
        train_sets.push(data.subset(&tr));
        test_sets.push(data.subset(&te));
        lengths.push(file.length);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &mode in modes {
        let model = train_switched_linear(&train_sets, &lengths, mode, &cfg.solver, cfg.sim.pusher_width)?;
        save_model(&model, cfg.model_path(mode))?;
        for (bucket, m) in model.matrices().iter().enumerate() {
            rows.push(TrainRow {
                mode,
                bucket,
                length: lengths[bucket],
                n_train: train_sets[bucket].samples(),
                n_test: test_sets[bucket].samples(),
                train_err: mean_clamped_error(m, &train_sets[bucket]),
                test_err: mean_clamped_error(m, &test_sets[bucket]),
            });
        }
    }
    fs::write(cfg.out_dir.join("train_errors.csv"), train_csv(&rows))?;
    Ok(rows)
}

/// Mean held-out error across buckets for one mode, weighted by test size.
pub fn pooled_test_error(rows: &[TrainRow], mode: FitMode) -> f64 {
    let (num, den) =
        rows.iter().filter(|r| r.mode == mode).fold((0.0, 0usize), |(s, c), r| (s + r.test_err * r.n_test as f64, c + r.n_test));
    num / den.max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub n_test: usize,
    pub mean_err: f64,
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = format!("{EVAL_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.model, r.n_test, r.mean_err);
    }
    s
}

/// Fresh transitions for evaluation, lengths drawn uniformly from the model's set.
pub fn eval_transitions(cfg: &RunConfig, lengths: &[f64], count: usize, seed: u64) -> Result<Vec<Transition>> {
    let base = seed.wrapping_add(SEED_EVAL);
    (0..count)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(s as u64);
            let l = lengths[rng.gen_range(0..lengths.len())];
            sample_transition(cfg, l, &mut rng)
        })
        .collect()
}

/// Mean Frobenius error of the linear, transport and identity predictors on
/// `n_test` fresh transitions. Writes `eval.csv`.
pub fn cmd_eval(cfg: &RunConfig, model: &SwitchedLinearModel<f64>, n_test: usize, seed: u64) -> Result<Vec<EvalRow>> {
    if model.n() != cfg.n {
        return Err(Error::ResolutionMismatch { left: cfg.n, right: model.n() });
    }
    let data = eval_transitions(cfg, model.lengths(), n_test, seed)?;
    let tm = cfg.transport_model();
    let errs = data
        .par_iter()
        .enumerate()
        .map(|(s, tr)| {
            let lin = frobenius_distance(&predict_linear(model, &tr.before, &tr.action)?, &tr.after)?;
            let parts = particles_from_image(&tr.before, cfg.particle_threshold);
            let moved = transport_predict(&tm, &parts, &tr.action, s as u64);
            let trn = frobenius_distance(&rasterize_particles(&moved, cfg.n), &tr.after)?;
            let id = frobenius_distance(&tr.before, &tr.after)?;
            Ok([lin, trn, id])
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    let denom = errs.len().max(1) as f64;
    let rows = ["linear", "transport", "identity"]
        .iter()
        .enumerate()
        .map(|(k, name)| EvalRow {
            model: (*name).to_string(),
            n_test: errs.len(),
            mean_err: errs.iter().map(|e| e[k]).sum::<f64>() / denom,
        })
        .collect::<Vec<_>>();
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("eval.csv"), eval_csv(&rows))?;
    Ok(rows)
}

/// Planning model for `cmd_rollout`.
#[derive(Clone, Debug)]
pub enum Planner {
    Linear(SwitchedLinearModel<f64>),
    Transport,
    Oracle,
}

impl Planner {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear(_) => "linear",
            Self::Transport => "transport",
            Self::Oracle => "oracle",
        }
    }
}

pub fn rollout_csv(logs: &[RolloutLog]) -> String {
    let mut s = format!("{ROLLOUT_CSV_HEADER}\n");
    for (run, log) in logs.iter().enumerate() {
        let _ = writeln!(s, "{run},0,{},{},{}", log.v_initial, log.v_initial, log.status);
        for st in &log.steps {
            let _ = writeln!(s, "{run},{},{},{},{}", st.step, st.v_pred, st.v_real, log.status);
        }
    }
    s
}

/// Greedy rollouts on `cfg.runs` seeded scenes. Writes `rollout_<planner>.csv`
/// and, when `save_frames` is set, one PGM per step.
pub fn cmd_rollout(cfg: &RunConfig, planner: &Planner, target: &TargetSet) -> Result<Vec<RolloutLog>> {
    cfg.validate()?;
    if target.n() != cfg.n {
        return Err(Error::ResolutionMismatch { left: cfg.n, right: target.n() });
    }
    let f = build_distance_field(target, cfg.p_norm)?;
    let lengths = match planner {
        Planner::Linear(m) => m.lengths().to_vec(),
        _ => cfg.lengths.clone(),
    };
    let actions = enumerate_actions(&cfg.grid(&lengths))?;
    let tm = cfg.transport_model();
    let rc = cfg.rollout_config();
    let mut logs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let scene = cfg.rollout_scene(run)?;
        let model = match planner {
            Planner::Linear(m) => ControlModel::Linear(m),
            Planner::Transport => ControlModel::Transport(&tm),
            Planner::Oracle => ControlModel::Oracle,
        };
        logs.push(rollout(&scene, model, &f, &actions, &cfg.sim, &rc)?);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(format!("rollout_{}.csv", planner.name())), rollout_csv(&logs))?;
    if cfg.save_frames {
        let dir = cfg.out_dir.join(format!("frames_{}", planner.name()));
        fs::create_dir_all(&dir)?;
        for (run, log) in logs.iter().enumerate() {
            for (step, frame) in log.frames.iter().enumerate() {
                save_pgm(frame, dir.join(format!("run{run:02}_step{step:03}.pgm")))?;
            }
        }
    }
    Ok(logs)
}

fn grid_csv(g: &Grid<f64>) -> String {
    let n = g.n();
    let mut s = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| g.get(i, j).to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Writes normalized PGM and raw CSV kernels for each pixel and length.
pub fn cmd_kernels(model: &SwitchedLinearModel<f64>, pixels: &[(usize, usize)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for k in 0..model.lengths().len() {
        for &(i, j) in pixels {
            let g = model.extract_kernel(k, i, j)?;
            let stem = out_dir.join(format!("kernel_k{k}_i{i}_j{j}"));
            let pgm = stem.with_extension("pgm");
            save_pgm(&g.normalized(), &pgm)?;
            fs::write(stem.with_extension("csv"), grid_csv(&g))?;
            written.push(pgm);
        }
    }
    Ok(written)
}

/// Writes one normalized step-response PGM and raw CSV per length.
pub fn cmd_step_response(model: &SwitchedLinearModel<f64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for k in 0..model.lengths().len() {
        let g = model.step_response(k)?;
        let stem = out_dir.join(format!("step_response_k{k}"));
        let pgm = stem.with_extension("pgm");
        save_pgm(&g.normalized(), &pgm)?;
        fs::write(stem.with_extension("csv"), grid_csv(&g))?;
        written.push(pgm);
    }
    Ok(written)
}

pub fn load_linear_model(path: impl AsRef<Path>) -> Result<SwitchedLinearModel<f64>> {
    load_model(path)
}
