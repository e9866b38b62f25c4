//! On-disk artifact formats.
//!
//! | artifact      | format | shape |
//! |---------------|--------|-------|
//! | trajectory    | JSONL  | header `{rate_hz, joints[, meta]}`, then `{t, q, v, ee}` per frame |
//! | trajectory    | CSV    | optional `# rate_hz=.. joints=..` line, columns `t,q1..q4,v1..v4,x,y,z,phi` |
//! | segments      | JSONL  | `{demo, primitive_id, e, start, end, s, mean_v, var_v}` per segment |
//! | subgoals      | JSON   | `{lambda, subgoals: [{id, object, mu, sigma[16], member_count}]}` |
//! | policy        | JSON   | `{subgoals_ref, min_len, velocity_clusters, pi, chains, emissions, pooled}` |
//! | task, script  | JSON   | serde form of [`TaskConfig`] and [`ExpertScript`] |
//! | session log   | JSONL  | header `{seed, style, min_len, initial, ...}`, then one record per tick |
//!
//! Velocities are optional in trajectory files and are rebuilt from `q` by
//! central differences when any frame lacks them.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, ensure, Context, Result};
use coteach_core::demo::{DemoOracle, ExpertScript};
use coteach_core::dpmirl::{Subgoal, SubgoalSet};
use coteach_core::engine::{EngineModel, Instruction, InstructionStyle, LogRecord, SessionLog};
use coteach_core::kinematics::{EndEffectorPose, JointState};
use coteach_core::math::Gaussian4;
use coteach_core::policy::{Emission, InstructionPolicyModel, PrimitiveChain};
use coteach_core::primitive::ActionPrimitive;
use coteach_core::segmentation::{PrimitiveSegment, VelocityClusterModel};
use coteach_core::task::TaskConfig;
use coteach_core::trajectory::{central_differences, Frame, Trajectory};
use coteach_core::Vec4;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    rate_hz: f64,
    joints: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    q: Vec4,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<Vec4>,
    ee: [f64; 4],
}

fn finish(
    rate_hz: f64,
    joints: Vec<String>,
    meta: BTreeMap<String, String>,
    rows: Vec<(f64, Vec4, Option<Vec4>, [f64; 4])>,
) -> Result<Trajectory> {
    let rebuild = rows.iter().any(|r| r.2.is_none());
    let mut traj = Trajectory {
        rate_hz,
        joints,
        frames: Vec::with_capacity(rows.len()),
        meta,
    };
    let v_fd = if rebuild {
        let q: Vec<Vec4> = rows.iter().map(|r| r.1).collect();
        central_differences(&q, 1.0 / rate_hz)
    } else {
        Vec::new()
    };
    for (i, (t, q, v, ee)) in rows.into_iter().enumerate() {
        let v = if rebuild {
            v_fd[i]
        } else {
            v.unwrap_or_default()
        };
        traj.frames.push(Frame {
            t,
            q,
            v,
            ee: EndEffectorPose::from_array(ee),
        });
    }
    traj.validate().context("trajectory invariants")?;
    Ok(traj)
}

pub fn load_trajectory(source: impl Read, format: Format) -> Result<Trajectory> {
    match format {
        Format::Jsonl => load_trajectory_jsonl(source),
        Format::Csv => load_trajectory_csv(source),
    }
}

fn load_trajectory_jsonl(source: impl Read) -> Result<Trajectory> {
    let mut lines = BufReader::new(source).lines().enumerate();
    let header: TrajectoryHeader = loop {
        let Some((i, line)) = lines.next() else {
            bail!("missing header line")
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break serde_json::from_str(&line)
            .with_context(|| format!("line {}: bad header", i + 1))?;
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FrameRecord =
            serde_json::from_str(&line).with_context(|| format!("line {}: bad frame", i + 1))?;
        rows.push((r.t, r.q, r.v, r.ee));
    }
    finish(header.rate_hz, header.joints, header.meta, rows)
}

const CSV_COLUMNS: [&str; 13] = [
    "t", "q1", "q2", "q3", "q4", "v1", "v2", "v3", "v4", "x", "y", "z", "phi",
];

fn load_trajectory_csv(source: impl Read) -> Result<Trajectory> {
    let mut text = String::new();
    BufReader::new(source).read_to_string(&mut text)?;
    let mut rate_hz = None;
    let mut joints: Vec<String> = coteach_core::JOINT_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut body = text.as_str();
    let mut skipped = 0u64;
    if let Some(rest) = body.strip_prefix('#') {
        let (first, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        for kv in first.split_whitespace() {
            match kv.split_once('=') {
                Some(("rate_hz", v)) => {
                    rate_hz = Some(v.parse::<f64>().context("line 1: bad rate_hz")?)
                }
                Some(("joints", v)) => joints = v.split(',').map(str::to_string).collect(),
                _ => bail!("line 1: unknown header field `{kv}`"),
            }
        }
        body = tail;
        skipped = 1;
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader.headers().context("header row")?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [None; 13];
    for (k, name) in CSV_COLUMNS.iter().enumerate() {
        idx[k] = col(name);
        let optional = (5..9).contains(&k);
        if idx[k].is_none() && !optional {
            bail!("header (line {}): missing column `{name}`", skipped + 1);
        }
    }
    let has_v = idx[5..9].iter().all(Option::is_some);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.context("malformed row")?;
        let line = rec.position().map_or(0, |p| p.line()) + skipped;
        let get = |k: usize| -> Result<f64> {
            let i = idx[k].expect("required column");
            let cell = rec
                .get(i)
                .ok_or_else(|| anyhow!("line {line}: missing field `{}`", CSV_COLUMNS[k]))?;
            cell.parse().with_context(|| {
                format!("line {line}: bad number `{cell}` in `{}`", CSV_COLUMNS[k])
            })
        };
        let q = [get(1)?, get(2)?, get(3)?, get(4)?];
        let v = if has_v {
            Some([get(5)?, get(6)?, get(7)?, get(8)?])
        } else {
            None
        };
        let ee = [get(9)?, get(10)?, get(11)?, get(12)?];
        rows.push((get(0)?, q, v, ee));
    }
    let rate_hz = match rate_hz {
        Some(r) => r,
        None if rows.len() >= 2 => 1.0 / (rows[1].0 - rows[0].0),
        None => coteach_core::DEFAULT_RATE_HZ,
    };
    finish(rate_hz, joints, BTreeMap::new(), rows)
}

pub fn save_trajectory(traj: &Trajectory, format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Jsonl => {
            let header = TrajectoryHeader {
                rate_hz: traj.rate_hz,
                joints: traj.joints.clone(),
                meta: traj.meta.clone(),
            };
            serde_json::to_writer(&mut out, &header)?;
            writeln!(out)?;
            for f in &traj.frames {
                let r = FrameRecord {
                    t: f.t,
                    q: f.q,
                    v: Some(f.v),
                    ee: f.ee.to_array(),
                };
                serde_json::to_writer(&mut out, &r)?;
                writeln!(out)?;
            }
        }
        Format::Csv => {
            writeln!(
                out,
                "# rate_hz={} joints={}",
                traj.rate_hz,
                traj.joints.join(",")
            )?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(CSV_COLUMNS)?;
            for f in &traj.frames {
                let ee = f.ee.to_array();
                let row: Vec<String> = std::iter::once(f.t)
                    .chain(f.q)
                    .chain(f.v)
                    .chain(ee)
                    .map(|x| x.to_string())
                    .collect();
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_trajectory(path: &Path, format: Option<Format>) -> Result<Trajectory> {
    let file = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    load_trajectory(file, format.unwrap_or_else(|| Format::from_path(path)))
        .with_context(|| format!("read {}", path.display()))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, format: Format) -> Result<()> {
    let mut buf = Vec::new();
    save_trajectory(traj, format, &mut buf)?;
    write_bytes(path, &buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub demo: usize,
    pub primitive_id: u16,
    pub e: [u8; 4],
    pub start: usize,
    pub end: usize,
    pub s: [f64; 4],
    pub mean_v: Vec4,
    pub var_v: Vec4,
}

impl SegmentRecord {
    pub fn new(demo: usize, seg: &PrimitiveSegment) -> Self {
        Self {
            demo,
            primitive_id: seg.primitive.id(),
            e: seg.primitive.codes(),
            start: seg.start_frame,
            end: seg.end_frame,
            s: seg.s.to_array(),
            mean_v: seg.mean_v,
            var_v: seg.var_v,
        }
    }

    pub fn to_segment(&self) -> Result<PrimitiveSegment> {
        let primitive = ActionPrimitive::from_codes(self.e)
            .map_err(|e| anyhow!("bad primitive codes {:?}: {e}", self.e))?;
        ensure!(
            primitive.id() == self.primitive_id,
            "primitive_id {} does not match e {:?}",
            self.primitive_id,
            self.e
        );
        ensure!(
            self.start <= self.end,
            "segment start {} after end {}",
            self.start,
            self.end
        );
        Ok(PrimitiveSegment {
            primitive,
            start_frame: self.start,
            end_frame: self.end,
            s: EndEffectorPose::from_array(self.s),
            mean_v: self.mean_v,
            var_v: self.var_v,
        })
    }
}

pub fn save_segments(demos: &[Vec<PrimitiveSegment>], mut out: impl Write) -> Result<()> {
    for (d, segs) in demos.iter().enumerate() {
        for s in segs {
            serde_json::to_writer(&mut out, &SegmentRecord::new(d, s))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Segments grouped by demo index; missing indices become empty lists.
pub fn load_segments(source: impl Read) -> Result<Vec<Vec<PrimitiveSegment>>> {
    let mut demos: Vec<Vec<PrimitiveSegment>> = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentRecord =
            serde_json::from_str(&line).with_context(|| format!("line {}: bad segment", i + 1))?;
        let seg = rec
            .to_segment()
            .with_context(|| format!("line {}", i + 1))?;
        if demos.len() <= rec.demo {
            demos.resize_with(rec.demo + 1, Vec::new);
        }
        demos[rec.demo].push(seg);
    }
    Ok(demos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalRecord {
    pub id: usize,
    pub object: usize,
    pub mu: Vec4,
    /// Row-major 4x4.
    pub sigma: [f64; 16],
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalsFile {
    pub lambda: f64,
    pub subgoals: Vec<SubgoalRecord>,
}

impl SubgoalsFile {
    pub fn from_set(sgs: &SubgoalSet) -> Self {
        let subgoals = sgs
            .subgoals
            .iter()
            .map(|s| SubgoalRecord {
                id: s.id,
                object: s.object,
                mu: s.mu,
                sigma: std::array::from_fn(|k| s.sigma[k / 4][k % 4]),
                member_count: s.member_count,
            })
            .collect();
        Self {
            lambda: sgs.lambda,
            subgoals,
        }
    }

    pub fn into_set(self, task: &TaskConfig) -> Result<SubgoalSet> {
        let mut subgoals = Vec::with_capacity(self.subgoals.len());
        for (i, r) in self.subgoals.into_iter().enumerate() {
            ensure!(
                r.id == i,
                "subgoal ids must be dense from 0, found {} at position {i}",
                r.id
            );
            ensure!(
                r.object < task.objects.len(),
                "subgoal {i} refers to object {} of {}",
                r.object,
                task.objects.len()
            );
            let sigma = std::array::from_fn(|a| std::array::from_fn(|b| r.sigma[4 * a + b]));
            ensure!(
                Gaussian4::new(r.mu, &sigma).is_some(),
                "subgoal {i}: covariance is not positive definite"
            );
            subgoals.push(Subgoal {
                id: r.id,
                object: r.object,
                mu: r.mu,
                sigma,
                member_count: r.member_count,
            });
        }
        Ok(SubgoalSet {
            subgoals,
            task: task.clone(),
            lambda: self.lambda,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    /// Path of the subgoal file, relative to the policy file.
    pub subgoals_ref: String,
    pub min_len: usize,
    pub velocity_clusters: VelocityClusterModel,
    pub pi: Vec<Vec<f64>>,
    pub chains: Vec<PrimitiveChain>,
    pub emissions: Vec<Emission>,
    pub pooled: Vec<Emission>,
}

impl PolicyFile {
    pub fn new(model: &EngineModel, subgoals_ref: String) -> Self {
        let p = &model.policy;
        Self {
            subgoals_ref,
            min_len: model.min_len,
            velocity_clusters: model.clusters.clone(),
            pi: p.pi.clone(),
            chains: p.chains.clone(),
            emissions: p.emissions.clone(),
            pooled: p.pooled.clone(),
        }
    }

    pub fn into_model(self, subgoals: SubgoalSet) -> Result<EngineModel> {
        let p = subgoals.subgoals.len();
        ensure!(
            self.pi.len() == p && self.chains.len() == p,
            "policy has {} subgoal rows but the subgoal file has {p}",
            self.pi.len()
        );
        ensure!(
            self.pi.iter().all(|r| r.len() == p),
            "transition matrix is not square"
        );
        ensure!(self.min_len >= 1, "min_len must be at least 1");
        let policy = InstructionPolicyModel {
            subgoals,
            pi: self.pi,
            chains: self.chains,
            emissions: self.emissions,
            pooled: self.pooled,
        };
        Ok(EngineModel {
            policy,
            clusters: self.velocity_clusters,
            min_len: self.min_len,
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("open {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("write {}", path.display()))
}

/// Task from a JSON file, or the bundled truck-loading layout.
pub fn read_task(path: Option<&Path>) -> Result<TaskConfig> {
    let task = match path {
        Some(p) => read_json::<TaskConfig>(p)?,
        None => TaskConfig::truck_loading(),
    };
    task.validate().context("task")?;
    Ok(task)
}

/// Script from a JSON file, or the bundled truck-loading script.
pub fn read_script(path: Option<&Path>) -> Result<ExpertScript> {
    match path {
        Some(p) => read_json(p),
        None => Ok(ExpertScript::truck_loading()),
    }
}

pub fn read_oracle(path: &Path) -> Result<DemoOracle> {
    read_json(path)
}

fn resolve(base: &Path, reference: &str) -> PathBuf {
    let r = Path::new(reference);
    if r.is_absolute() {
        r.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(r)
    }
}

fn relative_ref(from: &Path, to: &Path) -> String {
    let same_dir =
        from.parent().map(|p| p.canonicalize().ok()) == to.parent().map(|p| p.canonicalize().ok());
    match (same_dir, to.file_name()) {
        (true, Some(name)) => name.to_string_lossy().into_owned(),
        _ => to
            .canonicalize()
            .unwrap_or_else(|_| to.to_path_buf())
            .to_string_lossy()
            .into_owned(),
    }
}

pub fn write_model(policy_path: &Path, subgoals_path: &Path, model: &EngineModel) -> Result<()> {
    write_json(subgoals_path, &SubgoalsFile::from_set(model.subgoals()))?;
    if let Some(dir) = policy_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    }
    let file = PolicyFile::new(model, relative_ref(policy_path, subgoals_path));
    write_json(policy_path, &file)
}

/// Loads a policy file and the subgoal file it references.
pub fn read_model(policy_path: &Path, task: &TaskConfig) -> Result<Arc<EngineModel>> {
    let file: PolicyFile = read_json(policy_path)?;
    let sg_path = resolve(policy_path, &file.subgoals_ref);
    let subgoals = read_json::<SubgoalsFile>(&sg_path)?
        .into_set(task)
        .with_context(|| format!("subgoals {}", sg_path.display()))?;
    Ok(Arc::new(file.into_model(subgoals).with_context(|| {
        format!("policy {}", policy_path.display())
    })?))
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    seed: u64,
    style: InstructionStyle,
    min_len: usize,
    initial: JointState,
    initial_pose: EndEffectorPose,
    initial_instruction: Instruction,
}

pub fn save_session_log(log: &SessionLog, mut out: impl Write) -> Result<()> {
    let header = LogHeader {
        seed: log.seed,
        style: log.style,
        min_len: log.min_len,
        initial: log.initial,
        initial_pose: log.initial_pose,
        initial_instruction: log.initial_instruction.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    writeln!(out)?;
    for r in &log.records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_session_log(source: impl Read) -> Result<SessionLog> {
    let mut lines = BufReader::new(source)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| anyhow!("empty session log"))?;
    let h: LogHeader = serde_json::from_str(&first?).context("line 1: bad session header")?;
    let mut records: Vec<LogRecord> = Vec::new();
    for (i, line) in lines {
        let r: LogRecord =
            serde_json::from_str(&line?).with_context(|| format!("line {}: bad record", i + 1))?;
        if let Some(prev) = records.last() {
            ensure!(r.t > prev.t, "line {}: records out of time order", i + 1);
        }
        records.push(r);
    }
    Ok(SessionLog {
        seed: h.seed,
        style: h.style,
        min_len: h.min_len,
        initial: h.initial,
        initial_pose: h.initial_pose,
        initial_instruction: h.initial_instruction,
        records,
    })
}
