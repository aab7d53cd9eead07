//! Ground-truth fold trajectories on disk: a binary record per garment
//! and a `key=value` manifest describing the whole set.
//!
//! Record layout, all little-endian:
//!
//! ```text
//! magic "GFTR" | version u16
//! id: u16 length + UTF-8 | category u8 | stage count u8 + stage codes u8
//! n_points u32 | n_frames u32 | frame_period f64 | split u8
//! payload length u64 + n_frames * n_points * 3 f32
//! annotation count u32 + (u32 length + UTF-8) each
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{FoldError, Result};
use crate::garment::{build_garment, default_stage_sequence, Category, GarmentSpec, StageId};
use crate::geometry::Point3;
use crate::instruction::Lexicon;
use crate::metrics::parse_kv;
use crate::planner::{rollout_oracle_trajectory, RolloutParams};
use crate::sim::{Observer, SimParams, Simulator};

const MAGIC: &[u8; 4] = b"GFTR";
const VERSION: u16 = 1;
pub const RECORD_EXTENSION: &str = "gftr";

/// Size of the reference dataset this one scales down.
pub const REFERENCE_GARMENTS: usize = 1210;
pub const REFERENCE_TRAJECTORIES: usize = 3376;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// Garment-level split: the whole garment goes to one side, decided
    /// by a hash of its id.
    pub fn for_garment(id: &str, test_fraction: f64) -> Split {
        let bucket = fnv1a(id.bytes()) % 10_000;
        if (bucket as f64) < test_fraction * 10_000.0 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(FoldError::BadParam { field: "split", reason: format!("unknown `{s}`") }),
        }
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// All stages of one garment's fold, observed at a fixed point subset.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub garment_id: String,
    pub category: Category,
    pub stages: Vec<StageId>,
    pub n_points: usize,
    pub n_frames: usize,
    /// Seconds between frames within a stage.
    pub frame_period: f64,
    pub split: Split,
    /// `n_frames * n_points * 3` coordinates, frame-major.
    pub frames: Vec<f32>,
    pub annotations: Vec<String>,
}

impl TrajectoryRecord {
    pub fn frame(&self, i: usize) -> Vec<Point3> {
        let width = self.n_points * 3;
        self.frames[i * width..(i + 1) * width]
            .chunks_exact(3)
            .map(|c| Point3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2])))
            .collect()
    }

    /// Frames recorded per stage.
    pub fn frames_per_stage(&self) -> usize {
        self.n_frames / self.stages.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.n_frames * self.n_points * 3;
        if self.frames.len() != expected {
            return Err(FoldError::SizeMismatch { expected, actual: self.frames.len() });
        }
        if self.annotations.is_empty() {
            return Err(FoldError::BadParam { field: "annotations", reason: "need at least one".into() });
        }
        if self.stages.is_empty() || self.n_frames % self.stages.len() != 0 {
            return Err(FoldError::BadParam { field: "stages", reason: "frames must split evenly over stages".into() });
        }
        if self.garment_id.len() > usize::from(u16::MAX) || self.stages.len() > usize::from(u8::MAX) {
            return Err(FoldError::BadParam { field: "header", reason: "field too long".into() });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(64 + self.frames.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.garment_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.garment_id.as_bytes());
        out.push(self.category.code());
        out.push(self.stages.len() as u8);
        out.extend(self.stages.iter().map(|s| s.code()));
        out.extend_from_slice(&(self.n_points as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_period.to_le_bytes());
        out.push(match self.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        out.extend_from_slice(&((self.frames.len() * 4) as u64).to_le_bytes());
        for c in &self.frames {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&(self.annotations.len() as u32).to_le_bytes());
        for a in &self.annotations {
            out.extend_from_slice(&(a.len() as u32).to_le_bytes());
            out.extend_from_slice(a.as_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrajectoryRecord> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.error(0, "not a trajectory record"));
        }
        let version_at = r.at;
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(r.error(version_at, &format!("unsupported version {version}")));
        }
        let id_len = usize::from(r.u16("id length")?);
        let garment_id = r.utf8(id_len, "garment id")?;
        let category_at = r.at;
        let category = Category::from_code(r.u8("category")?).ok_or_else(|| r.error(category_at, "bad category"))?;
        let n_stages = usize::from(r.u8("stage count")?);
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            let at = r.at;
            stages.push(StageId::from_code(r.u8("stage")?).ok_or_else(|| r.error(at, "bad stage"))?);
        }
        let n_points = r.u32("n_points")? as usize;
        let n_frames = r.u32("n_frames")? as usize;
        let frame_period = f64::from_le_bytes(r.array("frame period")?);
        let split_at = r.at;
        let split = match r.u8("split")? {
            0 => Split::Train,
            1 => Split::Test,
            _ => return Err(r.error(split_at, "bad split")),
        };
        let payload_len = u64::from_le_bytes(r.array("payload length")?) as usize;
        let expected = n_frames * n_points * 3 * 4;
        if payload_len != expected {
            return Err(FoldError::SizeMismatch { expected, actual: payload_len });
        }
        let frames = r.take(payload_len, "payload")?.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let n_annotations = r.u32("annotation count")? as usize;
        if n_annotations == 0 {
            return Err(r.error(r.at - 4, "record has no annotations"));
        }
        let mut annotations = Vec::with_capacity(n_annotations.min(1024));
        for _ in 0..n_annotations {
            let len = r.u32("annotation length")? as usize;
            annotations.push(r.utf8(len, "annotation")?);
        }
        if r.at != bytes.len() {
            return Err(r.error(r.at, "trailing bytes after record"));
        }
        Ok(TrajectoryRecord { garment_id, category, stages, n_points, n_frames, frame_period, split, frames, annotations })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<TrajectoryRecord> {
        TrajectoryRecord::from_bytes(&std::fs::read(path)?)
    }
}

/// Byte cursor that reports where a read fell short.
struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: &str) -> FoldError {
        FoldError::Parse { offset, message: message.to_string() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.at..end];
                self.at = end;
                Ok(out)
            }
            None => Err(self.error(self.at, &format!("truncated {what}: need {n} bytes"))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        let at = self.at;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.error(at, &format!("{what} is not UTF-8")))
    }
}

/// What to generate.
#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub name: String,
    /// Garments per category, in category order.
    pub counts: Vec<(Category, usize)>,
    pub seed: u64,
    /// Observed points per frame, clamped to the vertex count.
    pub n_points: usize,
    /// Frames per stage trajectory.
    pub frames_per_stage: usize,
    pub test_fraction: f64,
    /// Frame cap for the initial settle.
    pub settle_frames: usize,
    pub rollout: RolloutParams,
    pub sim: SimParams,
}

impl Default for Recipe {
    /// Desk-scale set: 10 garments of each category.
    fn default() -> Self {
        Recipe::uniform(10)
    }
}

impl Recipe {
    pub fn uniform(per_category: usize) -> Recipe {
        Recipe {
            name: "desk-scale".into(),
            counts: Category::ALL.iter().map(|&c| (c, per_category)).collect(),
            seed: 7,
            n_points: 512,
            frames_per_stage: 30,
            test_fraction: 0.2,
            settle_frames: 240,
            rollout: RolloutParams::default(),
            sim: SimParams::default(),
        }
    }

    pub fn garments(&self) -> usize {
        self.counts.iter().map(|(_, n)| n).sum()
    }

    /// Stage trajectories the recipe produces when nothing is skipped.
    pub fn stage_trajectories(&self) -> usize {
        self.counts.iter().map(|&(c, n)| n * crate::garment::default_stage_ids(c).len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(FoldError::BadParam { field, reason: reason.into() });
        if self.n_points == 0 {
            return bad("n_points", "must be at least 1");
        }
        if self.frames_per_stage < 3 {
            return bad("frames", "rollouts need at least 3 frames");
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return bad("test_fraction", "must lie in [0, 1]");
        }
        if !(self.rollout.duration > 0.0) || !(self.rollout.alpha >= 0.0) {
            return bad("rollout", "duration must be positive and alpha non-negative");
        }
        self.sim.validate()
    }

    /// `key=value` form; [`Recipe::from_kv`] reads it back exactly.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("name", self.name.clone());
        put("seed", self.seed.to_string());
        for (c, n) in &self.counts {
            put(&format!("count.{c}"), n.to_string());
        }
        put("n_points", self.n_points.to_string());
        put("frames", self.frames_per_stage.to_string());
        put("test_fraction", self.test_fraction.to_string());
        put("settle_frames", self.settle_frames.to_string());
        put("rollout.duration", self.rollout.duration.to_string());
        put("rollout.alpha", self.rollout.alpha.to_string());
        put("rollout.settle_frames", self.rollout.settle_frames.to_string());
        let sim = crate::config::snapshot(&crate::executor::EpisodeConfig { sim: self.sim.clone(), ..Default::default() });
        for line in sim.lines().filter(|l| l.starts_with("sim.")) {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Starts from the defaults and applies the recognized keys of `map`;
    /// other keys are ignored so a manifest can be read back as a recipe.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Recipe> {
        let mut r = Recipe::default();
        let bad = |k: &str, v: &str| FoldError::BadParam { field: "recipe", reason: format!("bad value `{v}` for `{k}`") };
        let mut sim_keys = BTreeMap::new();
        let mut counts: Option<Vec<(Category, usize)>> = None;
        for (k, v) in map {
            macro_rules! num {
                () => {
                    v.parse().map_err(|_| bad(k, v))?
                };
            }
            match k.as_str() {
                "name" => r.name = v.clone(),
                "seed" => r.seed = num!(),
                "n_points" => r.n_points = num!(),
                "frames" => r.frames_per_stage = num!(),
                "test_fraction" => r.test_fraction = num!(),
                "settle_frames" => r.settle_frames = num!(),
                "rollout.duration" => r.rollout.duration = num!(),
                "rollout.alpha" => r.rollout.alpha = num!(),
                "rollout.settle_frames" => r.rollout.settle_frames = num!(),
                _ if k.starts_with("sim.") => {
                    sim_keys.insert(k.clone(), v.clone());
                }
                _ => {
                    if let Some(cat) = k.strip_prefix("count.") {
                        let cat: Category = cat.parse().map_err(|_| bad(k, v))?;
                        let list = counts.get_or_insert_with(Vec::new);
                        list.retain(|(c, _)| *c != cat);
                        list.push((cat, num!()));
                    }
                }
            }
        }
        if let Some(mut list) = counts {
            list.sort_by_key(|(c, _)| *c);
            r.counts = list;
        }
        if !sim_keys.is_empty() {
            let mut config = crate::executor::EpisodeConfig::default();
            crate::config::apply(&mut config, &sim_keys)?;
            r.sim = config.sim;
        }
        r.validate()?;
        Ok(r)
    }

    pub fn from_kv(text: &str) -> Result<Recipe> {
        Recipe::from_map(&parse_kv(text)?)
    }

    /// Seed of the `index`-th garment of `category`.
    pub fn garment_seed(&self, id: &str) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(id.bytes())
    }
}

pub fn garment_id(category: Category, index: usize) -> String {
    format!("{category}-{index:03}")
}

/// Settles a jittered garment and records the rollout of every stage of
/// its default sequence, back to back.
pub fn generate_record(recipe: &Recipe, category: Category, index: usize, lexicon: &Lexicon) -> Result<TrajectoryRecord> {
    let id = garment_id(category, index);
    let spec = GarmentSpec::jittered(category, recipe.garment_seed(&id));
    let mesh = Arc::new(build_garment(&spec)?);
    let mut sim = Simulator::new(mesh.clone(), recipe.sim.clone())?;
    sim.settle(5e-3, recipe.settle_frames)?;
    let n_points = recipe.n_points.min(sim.vertex_count());
    let mut observer = Observer::new(n_points);
    let stages = default_stage_sequence(&mesh);
    let mut frames = Vec::new();
    let mut annotations = Vec::new();
    let mut frame_period = 0.0;
    for stage in &stages {
        let traj = rollout_oracle_trajectory(&mut sim, &mut observer, stage, recipe.frames_per_stage, &recipe.rollout)?;
        frame_period = traj.frame_period;
        for frame in &traj.frames {
            frames.extend(frame.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]));
        }
        annotations.extend(lexicon.descriptions_for(stage.id).into_iter().map(str::to_string));
    }
    let record = TrajectoryRecord {
        split: Split::for_garment(&id, recipe.test_fraction),
        garment_id: id,
        category,
        stages: stages.iter().map(|s| s.id).collect(),
        n_points,
        n_frames: recipe.frames_per_stage * stages.len(),
        frame_period,
        frames,
        annotations,
    };
    record.validate()?;
    Ok(record)
}

/// Summary of a generated dataset, stored as `manifest.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub recipe: Recipe,
    /// Written records per category.
    pub counts: Vec<(Category, usize)>,
    pub stage_trajectories: usize,
    /// (garment id, split) of each written record, in generation order.
    pub records: Vec<(String, Split)>,
    /// Garments that failed to generate.
    pub skipped: Vec<String>,
}

impl Manifest {
    pub fn split_count(&self, split: Split) -> usize {
        self.records.iter().filter(|(_, s)| *s == split).count()
    }

    pub fn record_path(dir: &Path, id: &str) -> PathBuf {
        dir.join("records").join(format!("{id}.{RECORD_EXTENSION}"))
    }

    pub fn to_kv(&self) -> String {
        let mut out = self.recipe.to_kv();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        for (c, n) in &self.counts {
            put(&format!("written.{c}"), n.to_string());
        }
        put("total", self.records.len().to_string());
        put("stage_trajectories", self.stage_trajectories.to_string());
        put("split.train", self.split_count(Split::Train).to_string());
        put("split.test", self.split_count(Split::Test).to_string());
        put("skipped", self.skipped.join(","));
        put("reference.garments", REFERENCE_GARMENTS.to_string());
        put("reference.trajectories", REFERENCE_TRAJECTORIES.to_string());
        put(
            "reference.scale",
            format!("{:.4}", self.stage_trajectories as f64 / REFERENCE_TRAJECTORIES as f64),
        );
        for (id, split) in &self.records {
            put(&format!("record.{id}"), split.to_string());
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Manifest> {
        let map = parse_kv(text)?;
        let recipe = Recipe::from_map(&map)?;
        let bad = |k: &str| FoldError::BadParam { field: "manifest", reason: format!("bad or missing `{k}`") };
        let num = |k: &str| -> Result<usize> { map.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(k)) };
        let mut counts = Vec::new();
        for (k, v) in &map {
            if let Some(cat) = k.strip_prefix("written.") {
                counts.push((cat.parse::<Category>().map_err(|_| bad(k))?, v.parse().map_err(|_| bad(k))?));
            }
        }
        counts.sort_by_key(|(c, _)| *c);
        let mut records: Vec<(String, Split)> = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("record.").map(|id| (id.to_string(), v)))
            .map(|(id, v)| Ok((id, v.parse()?)))
            .collect::<Result<_>>()?;
        // Generation order is category order, then index.
        records.sort_by_key(|(id, _)| id_order(id));
        let skipped = map.get("skipped").map(|s| s.split(',').filter(|x| !x.is_empty()).map(String::from).collect()).unwrap_or_default();
        let manifest = Manifest { recipe, counts, stage_trajectories: num("stage_trajectories")?, records, skipped };
        if num("total")? != manifest.records.len()
            || num("split.train")? != manifest.split_count(Split::Train)
            || num("split.test")? != manifest.split_count(Split::Test)
        {
            return Err(FoldError::BadParam { field: "manifest", reason: "counts disagree with record list".into() });
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.txt"), self.to_kv())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        Manifest::from_kv(&std::fs::read_to_string(dir.join("manifest.txt"))?)
    }

    /// Checks the record files against the manifest: every listed record
    /// exists with the listed split and category, and nothing extra is on
    /// disk.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let mismatch = |reason: String| FoldError::BadParam { field: "manifest", reason };
        let mut per_category: BTreeMap<Category, usize> = BTreeMap::new();
        let mut stage_total = 0;
        for (id, split) in &self.records {
            let rec = TrajectoryRecord::read(&Manifest::record_path(dir, id))?;
            if rec.garment_id != *id || rec.split != *split {
                return Err(mismatch(format!("record `{id}` disagrees with the manifest")));
            }
            *per_category.entry(rec.category).or_default() += 1;
            stage_total += rec.stages.len();
        }
        let listed: BTreeMap<Category, usize> = self.counts.iter().copied().filter(|(_, n)| *n > 0).collect();
        if per_category != listed || stage_total != self.stage_trajectories {
            return Err(mismatch("per-category or stage counts disagree with the records".into()));
        }
        let on_disk = std::fs::read_dir(dir.join("records"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == RECORD_EXTENSION))
            .count();
        if on_disk != self.records.len() {
            return Err(mismatch(format!("{on_disk} record files on disk, manifest lists {}", self.records.len())));
        }
        Ok(())
    }
}

fn id_order(id: &str) -> (Option<Category>, usize) {
    let (cat, index) = id.rsplit_once('-').unwrap_or((id, ""));
    (cat.parse().ok(), index.parse().unwrap_or(usize::MAX))
}

/// Generates every garment of the recipe (in parallel), writes the
/// records under `dir/records/` and the manifest to `dir/manifest.txt`.
/// Garments that fail are logged and listed in the manifest.
pub fn generate_dataset(recipe: &Recipe, dir: &Path, lexicon: &Lexicon) -> Result<Manifest> {
    recipe.validate()?;
    let records_dir = dir.join("records");
    std::fs::create_dir_all(&records_dir)?;
    for entry in std::fs::read_dir(&records_dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == RECORD_EXTENSION) {
            std::fs::remove_file(path)?;
        }
    }
    let jobs: Vec<(Category, usize)> =
        recipe.counts.iter().flat_map(|&(c, n)| (0..n).map(move |i| (c, i))).collect();
    let results: Vec<Result<TrajectoryRecord>> =
        jobs.par_iter().map(|&(c, i)| generate_record(recipe, c, i, lexicon)).collect();

    let mut manifest = Manifest {
        recipe: recipe.clone(),
        counts: recipe.counts.iter().map(|&(c, _)| (c, 0)).collect(),
        stage_trajectories: 0,
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for (&(category, index), result) in jobs.iter().zip(results) {
        let id = garment_id(category, index);
        match result {
            Ok(record) => {
                record.write(&Manifest::record_path(dir, &id))?;
                manifest.stage_trajectories += record.stages.len();
                if let Some(slot) = manifest.counts.iter_mut().find(|(c, _)| *c == category) {
                    slot.1 += 1;
                }
                manifest.records.push((id, record.split));
            }
            Err(e) => {
                warn!("skipping {id}: {e}");
                manifest.skipped.push(id);
            }
        }
    }
    manifest.write(dir)?;
    info!(
        "wrote {} records ({} stage trajectories, {} skipped) to {}",
        manifest.records.len(),
        manifest.stage_trajectories,
        manifest.skipped.len(),
        dir.display()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_record(n_points: usize, n_frames: usize) -> TrajectoryRecord {
        TrajectoryRecord {
            garment_id: "short-sleeve-004".into(),
            category: Category::ShortSleeve,
            stages: vec![StageId::LeftSleeve, StageId::RightSleeve, StageId::BottomUp],
            n_points,
            n_frames: n_frames * 3,
            frame_period: 0.1,
            split: Split::Test,
            frames: (0..n_frames * 3 * n_points * 3).map(|i| (i as f32).sin() * 0.3).collect(),
            annotations: vec!["fold the left sleeve".into(), "fold the right sleeve".into()],
        }
    }

    fn tiny_recipe() -> Recipe {
        Recipe {
            counts: vec![(Category::NoSleeve, 2)],
            n_points: 64,
            frames_per_stage: 5,
            settle_frames: 30,
            rollout: RolloutParams { duration: 0.5, alpha: 0.5, settle_frames: 10 },
            ..Recipe::default()
        }
    }

    #[test]
    fn record_round_trip_is_bit_exact() {
        let rec = sample_record(7, 4);
        let bytes = rec.to_bytes().unwrap();
        let back = TrajectoryRecord::from_bytes(&bytes).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.frames_per_stage(), 4);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let bytes = sample_record(5, 2).to_bytes().unwrap();
        let cut = bytes.len() - 200;
        match TrajectoryRecord::from_bytes(&bytes[..cut]) {
            Err(FoldError::Parse { offset, .. }) => assert!(offset > 0 && offset < cut),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_header_reports_offset() {
        let mut bytes = sample_record(5, 2).to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(TrajectoryRecord::from_bytes(&bytes), Err(FoldError::Parse { offset: 0, .. })));
        let mut bytes = sample_record(5, 2).to_bytes().unwrap();
        // Category byte sits after magic, version and the id.
        let at = 4 + 2 + 2 + "short-sleeve-004".len();
        bytes[at] = 42;
        assert!(matches!(TrajectoryRecord::from_bytes(&bytes), Err(FoldError::Parse { offset, .. }) if offset == at));
    }

    #[test]
    fn header_point_count_disagreeing_with_payload_is_size_mismatch() {
        let rec = sample_record(5, 2);
        let mut bytes = rec.to_bytes().unwrap();
        // n_points follows the stage codes.
        let at = 4 + 2 + 2 + rec.garment_id.len() + 1 + 1 + rec.stages.len();
        bytes[at..at + 4].copy_from_slice(&6u32.to_le_bytes());
        assert!(matches!(TrajectoryRecord::from_bytes(&bytes), Err(FoldError::SizeMismatch { .. })));
    }

    #[test]
    fn records_need_an_annotation() {
        let mut rec = sample_record(3, 1);
        rec.annotations.clear();
        assert!(rec.to_bytes().is_err());
    }

    #[test]
    fn split_is_stable_and_roughly_proportional() {
        let ids: Vec<String> = (0..2000).map(|i| garment_id(Category::Pants, i)).collect();
        let test = ids.iter().filter(|id| Split::for_garment(id, 0.2) == Split::Test).count();
        assert!((300..500).contains(&test), "{test}");
        assert!(ids.iter().all(|id| Split::for_garment(id, 0.0) == Split::Train));
        assert!(ids.iter().all(|id| Split::for_garment(id, 1.0) == Split::Test));
    }

    #[test]
    fn recipe_counts_match_stage_arithmetic() {
        let r = Recipe::uniform(10);
        assert_eq!(r.garments(), 40);
        assert_eq!(r.stage_trajectories(), 10 + 30 + 30 + 20);
        assert_eq!(Recipe::from_kv(&r.to_kv()).unwrap(), r);
        let custom = Recipe::from_kv("count.pants=3\ncount.no-sleeve=1\nseed=9\n").unwrap();
        assert_eq!(custom.counts, vec![(Category::NoSleeve, 1), (Category::Pants, 3)]);
        assert_eq!(custom.seed, 9);
    }

    #[test]
    fn generation_is_deterministic_and_starts_at_rest() {
        let recipe = tiny_recipe();
        let lex = Lexicon::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_dataset(&recipe, a.path(), &lex).unwrap();
        let mb = generate_dataset(&recipe, b.path(), &lex).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.records.len(), 2);
        assert_eq!(ma.stage_trajectories, 2);
        for (id, _) in &ma.records {
            let fa = std::fs::read(Manifest::record_path(a.path(), id)).unwrap();
            let fb = std::fs::read(Manifest::record_path(b.path(), id)).unwrap();
            assert_eq!(fa, fb);
        }
        assert_eq!(Manifest::read(a.path()).unwrap(), ma);
        ma.verify(a.path()).unwrap();

        // Frame 0 is the settled rest observation.
        let rec = TrajectoryRecord::read(&Manifest::record_path(a.path(), &ma.records[0].0)).unwrap();
        assert!(rec.annotations.len() >= 2);
        let spec = GarmentSpec::jittered(Category::NoSleeve, recipe.garment_seed(&rec.garment_id));
        let mut sim = Simulator::new(Arc::new(build_garment(&spec).unwrap()), recipe.sim.clone()).unwrap();
        sim.settle(5e-3, recipe.settle_frames).unwrap();
        let rest = Observer::new(rec.n_points).observe(&sim).unwrap();
        for (p, q) in rec.frame(0).iter().zip(&rest.points) {
            assert!((p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn verify_catches_missing_files() {
        let recipe = Recipe { counts: vec![(Category::NoSleeve, 1)], ..tiny_recipe() };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&recipe, dir.path(), &Lexicon::default()).unwrap();
        std::fs::remove_file(Manifest::record_path(dir.path(), &m.records[0].0)).unwrap();
        assert!(m.verify(dir.path()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_records_round_trip(
            n in 1usize..20, m in 1usize..6, seed in any::<u32>(),
            notes in proptest::collection::vec("[a-z ]{0,30}", 1..4),
        ) {
            let mut rec = sample_record(n, m);
            rec.stages.truncate(1);
            rec.n_frames = m;
            rec.frames = (0..m * n * 3).map(|i| f32::from_bits(seed.wrapping_mul(i as u32 + 1) & 0x7f7f_ffff)).collect();
            rec.annotations = notes;
            let back = TrajectoryRecord::from_bytes(&rec.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), rec.to_bytes().unwrap());
        }
    }
}
