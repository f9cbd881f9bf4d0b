//! Data collection and training: sample command tuples, roll out the expert, store
//! three row-aligned datasets, and clone one policy per conditioning.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{self, EpochLog, InferenceMlp, Mlp, NetError, Normalizer, TrainConfig};
use crate::plant::{Gait, Vec2};
use crate::rollout::{
    run_episode, Conditioning, Controller, EpisodeConfig, Policy, Recording, RolloutTuple, Sample,
    ACTION_DIM, SHARED_DIM,
};

const DATASET_MAGIC: &[u8; 8] = b"GBCDATA\0";
const DATASET_VERSION: u32 = 1;

/// Output scale of action columns the expert holds constant (e.g. the height reference).
pub const CONSTANT_TARGET_SCALE: f64 = 1e-3;

pub const VELOCITY_RANGE: (f64, f64) = (-1.0, 1.3);
pub const DURATION_RANGE: (f64, f64) = (1.0, 3.0);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: not a dataset file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported dataset version {version}")]
    BadVersion { path: PathBuf, version: u32 },
    #[error("{path}: corrupt dataset ({what})")]
    Corrupt { path: PathBuf, what: &'static str },
    #[error("dataset is conditioned on {found}, expected {expected}")]
    ConditioningMismatch { expected: Conditioning, found: Conditioning },
    #[error("datasets are not from the same collection: {0}")]
    NotAligned(String),
    #[error("dataset has too few episodes ({0}) for a held-out split")]
    TooFewEpisodes(usize),
    #[error("model: {0}")]
    Net(#[from] NetError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// i.i.d. draws from U(v) × U(T) × {walk, run}, sagittal velocity only.
pub fn sample_rollout_tuples<R: Rng>(rng: &mut R, count: usize) -> Vec<RolloutTuple> {
    assert!(count >= 1, "need at least one tuple");
    (0..count)
        .map(|_| {
            let v = rng.gen_range(VELOCITY_RANGE.0..=VELOCITY_RANGE.1);
            let duration = rng.gen_range(DURATION_RANGE.0..=DURATION_RANGE.1);
            let gait = if rng.gen_bool(0.5) { Gait::Walk } else { Gait::Run };
            RolloutTuple { v_d: Vec2::new(v, 0.0), duration, gait }
        })
        .collect()
}

/// Command sequence of collection episode `index`: one to three tuples.
pub fn collection_tuples(seed: u64, index: u64) -> Vec<RolloutTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index));
    let count = rng.gen_range(1..=3);
    sample_rollout_tuples(&mut rng, count)
}

/// Columnar store of `[s_shared, goal, action]` rows in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub conditioning: Conditioning,
    pub seed: u64,
    /// Tick count of every episode, in row order.
    pub episode_lengths: Vec<u64>,
    pub rows: Vec<f32>,
}

impl Dataset {
    pub fn goal_dim(&self) -> usize {
        self.conditioning.goal_dim()
    }

    pub fn width(&self) -> usize {
        SHARED_DIM + self.goal_dim() + ACTION_DIM
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.rows[i * w..(i + 1) * w]
    }

    /// Row ranges of every episode.
    pub fn episode_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.episode_lengths
            .iter()
            .map(|&n| {
                let r = start..start + n as usize;
                start = r.end;
                r
            })
            .collect()
    }

    pub fn from_samples(conditioning: Conditioning, seed: u64, episodes: &[&[Sample]]) -> Self {
        let width = SHARED_DIM + conditioning.goal_dim() + ACTION_DIM;
        let total: usize = episodes.iter().map(|e| e.len()).sum();
        let mut rows = Vec::with_capacity(total * width);
        for ep in episodes {
            for s in ep.iter() {
                rows.extend_from_slice(&s.shared);
                match conditioning {
                    Conditioning::Cc => rows.extend_from_slice(&s.cc),
                    Conditioning::Tcc => rows.extend_from_slice(&s.tcc),
                    Conditioning::Vc => rows.extend_from_slice(&s.vc),
                }
                rows.extend_from_slice(&s.action);
            }
        }
        Self {
            conditioning,
            seed,
            episode_lengths: episodes.iter().map(|e| e.len() as u64).collect(),
            rows,
        }
    }

    /// Byte layout, all little-endian: 8-byte magic, u32 version, u8 conditioning tag,
    /// u32 shared/goal/action widths, u64 seed, u64 episode count, one u64 tick count
    /// per episode, u64 row count, then the rows as f32.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&[self.conditioning.tag()])?;
        for d in [SHARED_DIM, self.goal_dim(), ACTION_DIM] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.episode_lengths.len() as u64).to_le_bytes())?;
        for n in &self.episode_lengths {
            w.write_all(&n.to_le_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.rows.len() * 4);
        for v in &self.rows {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
        self.write_to(&mut f).and_then(|_| f.flush()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err(path))?)
            .read_to_end(&mut bytes)
            .map_err(io_err(path))?;
        Self::parse(&bytes).map_err(|e| match e {
            ParseError::Magic => PipelineError::BadMagic { path: path.to_path_buf() },
            ParseError::Version(version) => PipelineError::BadVersion { path: path.to_path_buf(), version },
            ParseError::Corrupt(what) => PipelineError::Corrupt { path: path.to_path_buf(), what },
        })
    }

    fn parse(bytes: &[u8]) -> Result<Self, ParseError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != DATASET_MAGIC {
            return Err(ParseError::Magic);
        }
        let version = cur.u32()?;
        if version != DATASET_VERSION {
            return Err(ParseError::Version(version));
        }
        let conditioning =
            Conditioning::from_tag(cur.take(1)?[0]).ok_or(ParseError::Corrupt("conditioning tag"))?;
        let dims = [cur.u32()?, cur.u32()?, cur.u32()?];
        if dims != [SHARED_DIM as u32, conditioning.goal_dim() as u32, ACTION_DIM as u32] {
            return Err(ParseError::Corrupt("feature widths"));
        }
        let seed = cur.u64()?;
        let n_ep = cur.u64()? as usize;
        if n_ep > bytes.len() / 8 {
            return Err(ParseError::Corrupt("episode count"));
        }
        let episode_lengths = (0..n_ep).map(|_| cur.u64()).collect::<Result<Vec<_>, _>>()?;
        let n_rows = cur.u64()? as usize;
        if episode_lengths.iter().sum::<u64>() != n_rows as u64 {
            return Err(ParseError::Corrupt("episode lengths do not sum to the row count"));
        }
        let width = SHARED_DIM + conditioning.goal_dim() + ACTION_DIM;
        let body = cur.take(n_rows.checked_mul(width * 4).ok_or(ParseError::Corrupt("row count"))?)?;
        if cur.pos != bytes.len() {
            return Err(ParseError::Corrupt("trailing bytes"));
        }
        let rows = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self { conditioning, seed, episode_lengths, rows })
    }

    /// Lossless text export: floats are printed with round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header: Vec<String> = vec!["episode".into()];
        header.extend((0..SHARED_DIM).map(|i| format!("s{i}")));
        header.extend((0..self.goal_dim()).map(|i| format!("g{i}")));
        header.extend((0..ACTION_DIM).map(|i| format!("a{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (ep, range) in self.episode_ranges().into_iter().enumerate() {
            for i in range {
                write!(w, "{ep}")?;
                for v in self.row(i) {
                    write!(w, ",{v:?}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

enum ParseError {
    Magic,
    Version(u32),
    Corrupt(&'static str),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(ParseError::Corrupt("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ParseError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Audit record of a collection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionManifest {
    pub seed: u64,
    pub episodes: usize,
    /// Collection indices of the kept episodes, in row order.
    pub kept: Vec<u64>,
    /// Collection indices of expert episodes that failed and were dropped.
    pub excluded: Vec<u64>,
    pub rows: usize,
    pub tuples_per_episode: Vec<usize>,
    pub durations: Vec<f64>,
}

/// Expert episodes of one collection run, in index order.
pub struct Collection {
    pub manifest: CollectionManifest,
    pub samples: Vec<Vec<Sample>>,
}

impl Collection {
    /// The first `n` kept episodes; equal to collecting `n` episodes from scratch.
    pub fn prefix(&self, n: usize) -> Collection {
        let n = n.min(self.samples.len());
        let last = self.manifest.kept.get(n.wrapping_sub(1)).copied();
        let excluded = self
            .manifest
            .excluded
            .iter()
            .copied()
            .filter(|&i| last.is_some_and(|l| i < l))
            .collect();
        Collection {
            manifest: CollectionManifest {
                seed: self.manifest.seed,
                episodes: n,
                kept: self.manifest.kept[..n].to_vec(),
                excluded,
                rows: self.samples[..n].iter().map(|s| s.len()).sum(),
                tuples_per_episode: self.manifest.tuples_per_episode[..n].to_vec(),
                durations: self.manifest.durations[..n].to_vec(),
            },
            samples: self.samples[..n].to_vec(),
        }
    }

    pub fn dataset(&self, conditioning: Conditioning) -> Dataset {
        let eps: Vec<&[Sample]> = self.samples.iter().map(|s| s.as_slice()).collect();
        Dataset::from_samples(conditioning, self.manifest.seed, &eps)
    }
}

/// Rolls out the expert until `n_episodes` successful episodes exist. Episode `i`
/// draws its commands from seed `seed + i`; failures are skipped and recorded, so the
/// result for `n` is always a prefix of the result for any larger count.
pub fn collect(n_episodes: usize, seed: u64, config: &EpisodeConfig) -> Collection {
    let mut kept = Vec::with_capacity(n_episodes);
    let mut excluded = Vec::new();
    let mut samples = Vec::with_capacity(n_episodes);
    let mut tuples_per_episode = Vec::with_capacity(n_episodes);
    let mut durations = Vec::with_capacity(n_episodes);
    let mut next = 0u64;
    while kept.len() < n_episodes {
        let want = (n_episodes - kept.len()) as u64;
        let batch: Vec<_> = (next..next + want)
            .into_par_iter()
            .map(|i| {
                let tuples = collection_tuples(seed, i);
                let rec = Recording { samples: true, trajectory: false };
                (i, tuples.clone(), run_episode(&tuples, &Controller::Expert, config, rec))
            })
            .collect();
        next += want;
        for (i, tuples, out) in batch {
            if out.survived() {
                kept.push(i);
                tuples_per_episode.push(tuples.len());
                durations.push(out.expected_duration);
                samples.push(out.samples);
            } else {
                warn!("expert failed in collection episode {i} ({:?}); excluded", out.failure);
                excluded.push(i);
            }
        }
    }
    let rows = samples.iter().map(|s| s.len()).sum();
    Collection {
        manifest: CollectionManifest { seed, episodes: n_episodes, kept, excluded, rows, tuples_per_episode, durations },
        samples,
    }
}

pub fn dataset_path(dir: &Path, c: Conditioning) -> PathBuf {
    dir.join(format!("{c}.bin"))
}

/// Writes the three datasets, their CSV exports (optional), and the manifest.
pub fn write_collection(dir: &Path, collection: &Collection, csv: bool) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for c in Conditioning::ALL {
        let ds = collection.dataset(c);
        ds.save(&dataset_path(dir, c))?;
        if csv {
            let p = dir.join(format!("{c}.csv"));
            let f = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
            ds.write_csv(f).map_err(io_err(&p))?;
        }
    }
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_string_pretty(&collection.manifest)? + "\n").map_err(io_err(&p))?;
    Ok(())
}

/// Checks that datasets share episode structure and identical shared/action bytes.
pub fn check_alignment(sets: &[&Dataset]) -> Result<(), PipelineError> {
    let Some(first) = sets.first() else { return Ok(()) };
    for d in &sets[1..] {
        if d.episode_lengths != first.episode_lengths || d.seed != first.seed {
            return Err(PipelineError::NotAligned("episode structure differs".into()));
        }
        for i in 0..first.len() {
            let (a, b) = (first.row(i), d.row(i));
            let (ga, gb) = (first.goal_dim(), d.goal_dim());
            let same = |x: &[f32], y: &[f32]| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
            if !same(&a[..SHARED_DIM], &b[..SHARED_DIM]) || !same(&a[SHARED_DIM + ga..], &b[SHARED_DIM + gb..]) {
                return Err(PipelineError::NotAligned(format!("row {i} differs outside the goal columns")));
            }
        }
    }
    Ok(())
}

/// A cloned policy: network plus the goal layout it was trained on.
#[derive(Clone, Debug)]
pub struct PolicyModel {
    pub conditioning: Conditioning,
    pub net: Mlp,
    fast: InferenceMlp,
}

impl PolicyModel {
    pub fn new(conditioning: Conditioning, mut net: Mlp) -> Result<Self, PipelineError> {
        if net.input_dim() != conditioning.input_dim() || net.output_dim() != ACTION_DIM {
            return Err(PipelineError::Net(NetError::DimMismatch {
                expected: conditioning.input_dim(),
                got: net.input_dim(),
            }));
        }
        net.tag = conditioning.tag();
        let fast = InferenceMlp::new(&net);
        Ok(Self { conditioning, net, fast })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        self.net.save(path).map_err(|e| match e {
            NetError::Io(source) => PipelineError::Io { path: path.to_path_buf(), source },
            e => e.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let net = Mlp::load(path).map_err(|e| match e {
            NetError::Io(source) => PipelineError::Io { path: path.to_path_buf(), source },
            e => e.into(),
        })?;
        let c = Conditioning::from_tag(net.tag)
            .ok_or(PipelineError::Corrupt { path: path.to_path_buf(), what: "model has no conditioning tag" })?;
        Self::new(c, net)
    }
}

impl Policy for PolicyModel {
    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn act(&self, input: &[f64], out: &mut [f64; ACTION_DIM]) {
        self.fast.forward_into(input, out);
    }
}

/// Outcome of training one policy.
#[derive(Clone, Debug)]
pub struct TrainedPolicy {
    pub model: PolicyModel,
    pub log: Vec<EpochLog>,
    pub held_out_episodes: Vec<usize>,
}

/// Episode indices held out for validation, chosen by a seeded shuffle.
pub fn held_out_episodes(n_episodes: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((n_episodes as f64 * fraction).round() as usize).clamp(1, n_episodes - 1);
    let mut idx: Vec<usize> = (0..n_episodes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee);
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut held = idx[..k].to_vec();
    held.sort_unstable();
    held
}

fn to_matrix(ds: &Dataset, ranges: &[std::ops::Range<usize>]) -> (Array2<f64>, Array2<f64>) {
    let n: usize = ranges.iter().map(|r| r.len()).sum();
    let input = SHARED_DIM + ds.goal_dim();
    let mut x = Array2::zeros((n, input));
    let mut y = Array2::zeros((n, ACTION_DIM));
    let mut k = 0;
    for r in ranges {
        for i in r.clone() {
            let row = ds.row(i);
            for j in 0..input {
                x[[k, j]] = row[j] as f64;
            }
            for j in 0..ACTION_DIM {
                y[[k, j]] = row[input + j] as f64;
            }
            k += 1;
        }
    }
    (x, y)
}

/// Clones one policy from `ds`; refuses a dataset of another conditioning.
pub fn train_policy(
    ds: &Dataset,
    expected: Conditioning,
    cfg: &TrainConfig,
) -> Result<TrainedPolicy, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    if ds.conditioning != expected {
        return Err(PipelineError::ConditioningMismatch { expected, found: ds.conditioning });
    }
    let n_ep = ds.episode_lengths.len();
    if n_ep < 2 {
        return Err(PipelineError::TooFewEpisodes(n_ep));
    }
    let held = held_out_episodes(n_ep, cfg.held_out_fraction, cfg.seed);
    let ranges = ds.episode_ranges();
    let (train_r, held_r): (Vec<_>, Vec<_>) =
        ranges.into_iter().enumerate().partition(|(i, _)| held.binary_search(i).is_err());
    let train_r: Vec<_> = train_r.into_iter().map(|(_, r)| r).collect();
    let held_r: Vec<_> = held_r.into_iter().map(|(_, r)| r).collect();
    let (mut tx, mut ty) = to_matrix(ds, &train_r);
    let (mut hx, mut hy) = to_matrix(ds, &held_r);

    let dims = [expected.input_dim(), cfg.hidden[0], cfg.hidden[1], cfg.hidden[2], ACTION_DIM];
    let mut mlp = Mlp::new(&dims, cfg.seed);
    mlp.input_norm = Normalizer::fit(tx.view());
    mlp.output_norm = Normalizer::fit_with_floor(ty.view(), CONSTANT_TARGET_SCALE);
    mlp.input_norm.apply(&mut tx);
    mlp.input_norm.apply(&mut hx);
    mlp.output_norm.apply(&mut ty);
    mlp.output_norm.apply(&mut hy);
    info!("training {expected} on {} rows ({} held out)", tx.nrows(), hx.nrows());
    let log = net::train(&mut mlp, &tx, &ty, &hx, &hy, cfg);
    Ok(TrainedPolicy { model: PolicyModel::new(expected, mlp)?, log, held_out_episodes: held })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = sample_rollout_tuples(&mut rng, 100_000);
        let mean = t.iter().map(|t| t.v_d.x).sum::<f64>() / t.len() as f64;
        assert!((mean - 0.15).abs() < 0.02, "{mean}");
        assert!(t.iter().all(|t| (-1.0..=1.3).contains(&t.v_d.x) && t.v_d.y == 0.0));
        assert!(t.iter().all(|t| (1.0..=3.0).contains(&t.duration)));
        let runs = t.iter().filter(|t| t.gait == Gait::Run).count();
        assert!((runs as f64 / 1e5 - 0.5).abs() < 0.01);
        let again = sample_rollout_tuples(&mut ChaCha8Rng::seed_from_u64(3), 100_000);
        assert_eq!(t, again);
    }

    #[test]
    fn collection_episode_lengths() {
        for i in 0..200 {
            let t = collection_tuples(9, i);
            assert!((1..=3).contains(&t.len()));
            let d: f64 = t.iter().map(|t| t.duration).sum();
            assert!((1.0..=9.0).contains(&d));
        }
    }

    #[test]
    fn dataset_round_trip_and_corruption() {
        let c = collect(3, 5, &EpisodeConfig::default());
        let ds = c.dataset(Conditioning::Tcc);
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let back = Dataset::parse(&bytes).ok().unwrap();
        assert_eq!(back, ds);
        assert_eq!(ds.episode_lengths.iter().sum::<u64>() as usize, ds.len());
        assert!(matches!(Dataset::parse(&bytes[..bytes.len() - 1]), Err(ParseError::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert!(matches!(Dataset::parse(&bad), Err(ParseError::Magic)));
    }

    #[test]
    fn prefix_equals_fresh_collection() {
        let cfg = EpisodeConfig::default();
        let big = collect(6, 11, &cfg);
        let small = collect(4, 11, &cfg);
        let p = big.prefix(4);
        assert_eq!(p.manifest, small.manifest);
        assert_eq!(p.dataset(Conditioning::Cc), small.dataset(Conditioning::Cc));
    }

    #[test]
    fn datasets_are_row_aligned() {
        let c = collect(3, 2, &EpisodeConfig::default());
        let sets: Vec<Dataset> = Conditioning::ALL.iter().map(|&k| c.dataset(k)).collect();
        check_alignment(&sets.iter().collect::<Vec<_>>()).unwrap();
        let mut broken = sets[1].clone();
        broken.rows[0] += 1.0;
        assert!(check_alignment(&[&sets[0], &broken]).is_err());
    }

    #[test]
    fn training_rejects_wrong_conditioning() {
        let c = collect(2, 1, &EpisodeConfig::default());
        let ds = c.dataset(Conditioning::Cc);
        let cfg = TrainConfig { hidden: [8, 8, 8], epochs: 1, updates_per_epoch: Some(2), ..Default::default() };
        assert!(matches!(
            train_policy(&ds, Conditioning::Vc, &cfg),
            Err(PipelineError::ConditioningMismatch { expected: Conditioning::Vc, found: Conditioning::Cc })
        ));
        assert!(train_policy(&ds, Conditioning::Cc, &cfg).is_ok());
    }

    #[test]
    fn held_out_split_is_by_episode() {
        let h = held_out_episodes(50, 0.1, 3);
        assert_eq!(h.len(), 5);
        assert_eq!(h, held_out_episodes(50, 0.1, 3));
        assert_eq!(held_out_episodes(2, 0.1, 0).len(), 1);
    }
}
