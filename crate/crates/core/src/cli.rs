//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{run_benchmark, write_report, BenchmarkConfig, Transformation};
use crate::checkpoint::{read_checkpoint, save_checkpoint_with};
use crate::error::{Error, Result};
use crate::geometry::{
    normalize_to_unit_box, parse_off, read_points, sample_surface, write_points, PointSet, ScaleRecord,
};
use crate::net::{FptArch, FptModel};
use crate::shapes;
use crate::spine::{
    format_landmarks, measure_case, read_landmarks, surrogate_mesh, LabeledSpineModel, Prealign, SpineBend,
    SURROGATE_AP_AXIS,
};
use crate::train::{train, write_loss_log, Occlusion, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "fpt", version, about = "Free Point Transformer point set registration")]
struct Cli {
    /// Worker threads for batch augmentation and per-case evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a point set from a mesh surface.
    Sample(SampleArgs),
    /// Train a model on synthetic pairs.
    Train(TrainArgs),
    /// Register a source point set to a target with a trained model.
    Register(RegisterArgs),
    /// Compare FPT checkpoints against ICP.
    Benchmark(BenchmarkArgs),
    /// Measure the transverse process angle after spine registration.
    Txa(TxaArgs),
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    /// OFF mesh to sample.
    #[arg(long, conflicts_with = "primitive", required_unless_present = "primitive")]
    mesh: Option<PathBuf>,
    /// Built-in shape name, or `spine` for the synthetic spine.
    #[arg(long)]
    primitive: Option<String>,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map the samples into [-1, 1]^3 per axis.
    #[arg(long)]
    normalize: bool,
    /// Bend the synthetic spine with this seed (spine only).
    #[arg(long, requires = "primitive")]
    bend_seed: Option<u64>,
    /// Write the synthetic spine's landmarks here (spine only).
    #[arg(long, requires = "primitive")]
    landmarks_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ArchPreset {
    Default,
    Compact,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum OcclusionArg {
    None,
    PartialToFull,
    PartialToPartial,
}

impl From<OcclusionArg> for Occlusion {
    fn from(o: OcclusionArg) -> Self {
        match o {
            OcclusionArg::None => Occlusion::None,
            OcclusionArg::PartialToFull => Occlusion::PartialToFull,
            OcclusionArg::PartialToPartial => Occlusion::PartialToPartial,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON training config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of .off meshes or point files. Defaults to the built-in
    /// training shapes.
    #[arg(long)]
    shapes: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// CSV loss log.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Directory for periodic checkpoints.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    num_points: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long, value_enum)]
    occlusion: Option<OcclusionArg>,
    #[arg(long)]
    occlusion_k: Option<usize>,
    /// Enable or disable RBF deformation of the source.
    #[arg(long)]
    deform: Option<bool>,
    #[arg(long)]
    rot_range_deg: Option<f64>,
    #[arg(long)]
    trans_range: Option<f64>,
    #[arg(long, value_enum)]
    arch: Option<ArchPreset>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NormalizeArg {
    /// Use coordinates as given.
    None,
    /// Normalize both sets with the target's unit-box record.
    Target,
}

#[derive(Debug, Args, Serialize)]
struct RegisterArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = NormalizeArg::None)]
    normalize: NormalizeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ProtocolArg {
    Rigid,
    Nonrigid,
}

#[derive(Debug, Args, Serialize)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[arg(long, value_enum, default_value_t = OcclusionArg::None)]
    occlusion: OcclusionArg,
    /// Directory of .off meshes or point files. Defaults to the built-in
    /// held-out shapes.
    #[arg(long)]
    shapes: Option<PathBuf>,
    /// FPT checkpoint; repeat to compare several.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2048)]
    num_points: usize,
    #[arg(long, default_value_t = 1)]
    pairs_per_shape: usize,
    #[arg(long, default_value_t = crate::bench::DEFAULT_ICP_ITERATIONS)]
    icp_iterations: usize,
    /// Points removed per occluded set; defaults to a quarter of the set.
    #[arg(long)]
    occlusion_k: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PrealignArg {
    None,
    Centroid,
    CentroidScale,
}

impl From<PrealignArg> for Prealign {
    fn from(p: PrealignArg) -> Self {
        match p {
            PrealignArg::None => Prealign::None,
            PrealignArg::Centroid => Prealign::Centroid,
            PrealignArg::CentroidScale => Prealign::CentroidScale,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct TxaArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Generic spine surface point file.
    #[arg(long)]
    model: PathBuf,
    /// Landmark JSON for the generic model.
    #[arg(long)]
    landmarks: PathBuf,
    /// Reconstruction point file.
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    upper: String,
    #[arg(long)]
    lower: String,
    #[arg(long, value_enum, default_value_t = PrealignArg::Centroid)]
    prealign: PrealignArg,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let message = serde_json::to_string(&e.to_string()).unwrap_or_default();
            eprintln!("error kind={} message={}", e.kind(), message);
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Sample(a) => sample(a),
        Command::Train(a) => train_cmd(a),
        Command::Register(a) => register(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Txa(a) => txa_cmd(a),
    })
}

fn print_config(command: &str, config: &impl Serialize) -> Result<()> {
    println!("{command} config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sample(a: SampleArgs) -> Result<()> {
    print_config("sample", &a)?;
    let spine = a.primitive.as_deref() == Some("spine");
    if !spine && (a.bend_seed.is_some() || a.landmarks_out.is_some()) {
        return Err(Error::Invalid("--bend-seed and --landmarks-out apply to the spine only".into()));
    }
    let (mesh, landmarks) = match (&a.mesh, a.primitive.as_deref()) {
        (Some(path), _) => (parse_off(&read_text(path)?)?, None),
        (None, Some("spine")) => {
            let (m, l) = surrogate_mesh();
            (m, Some(l))
        }
        (None, Some(name)) => (shapes::primitive(name)?, None),
        (None, None) => unreachable!("clap requires --mesh or --primitive"),
    };
    let mut ps = sample_surface(&mesh, a.n, a.seed)?;
    if let Some(s) = a.bend_seed {
        ps = SpineBend::sample(s, 6.4, 11.5).apply(&ps)?;
    }
    if a.normalize {
        ps = normalize_to_unit_box(&ps)?.0;
    }
    write_points(&a.out, &ps)?;
    if let (Some(path), Some(lm)) = (&a.landmarks_out, landmarks) {
        write_text(path, &format_landmarks(&lm, SURROGATE_AP_AXIS)?)?;
    }
    Ok(())
}

/// Loads every `.off` mesh (sampled to `n` points) and point file in `dir`,
/// in file-name order, each normalized to the unit box.
fn load_shape_dir(dir: &Path, n: usize, seed: u64) -> Result<Vec<(String, PointSet)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    let mut out = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let ps = match ext.as_str() {
            "off" => sample_surface(&parse_off(&read_text(p)?)?, n, seed.wrapping_add(i as u64))?,
            "xyz" | "txt" | "pts" => read_points(p)?,
            _ => continue,
        };
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("shape").to_string();
        out.push((name, normalize_to_unit_box(&ps)?.0));
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!("no .off or point files in {}", dir.display())));
    }
    Ok(out)
}

fn builtin_shapes(names: &[&str], n: usize, seed: u64) -> Result<Vec<(String, PointSet)>> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let ps = sample_surface(&shapes::primitive(name)?, n, seed.wrapping_add(i as u64))?;
            Ok((name.to_string(), normalize_to_unit_box(&ps)?.0))
        })
        .collect()
}

fn resolve_training_config(a: &TrainArgs) -> Result<TrainingConfig> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => TrainingConfig::default(),
    };
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v.into();
            }
        };
    }
    set!(a.seed => cfg.seed);
    set!(a.steps => cfg.steps);
    set!(a.batch_size => cfg.batch_size);
    set!(a.lr => cfg.lr);
    set!(a.num_points => cfg.num_points);
    set!(a.checkpoint_every => cfg.checkpoint_every);
    set!(a.occlusion => cfg.augmentation.occlusion);
    set!(a.occlusion_k => cfg.augmentation.occlusion_k);
    set!(a.deform => cfg.augmentation.deform);
    set!(a.rot_range_deg => cfg.augmentation.rot_range_deg);
    set!(a.trans_range => cfg.augmentation.trans_range);
    if let Some(arch) = a.arch {
        cfg.arch = match arch {
            ArchPreset::Default => FptArch::default(),
            ArchPreset::Compact => FptArch::compact(),
        };
    }
    cfg.arch.validate()?;
    cfg.adam().validate()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = resolve_training_config(&a)?;
    print_config("train", &cfg)?;
    let dataset: Vec<PointSet> = match &a.shapes {
        Some(dir) => load_shape_dir(dir, cfg.num_points, cfg.seed)?,
        None => builtin_shapes(&shapes::TRAIN_PRIMITIVES, cfg.num_points, cfg.seed)?,
    }
    .into_iter()
    .map(|(_, ps)| ps)
    .collect();

    let mut model = FptModel::<f32>::init(cfg.arch.clone(), cfg.seed)?;
    let metadata = |steps: usize| -> Result<serde_json::Value> {
        Ok(serde_json::json!({ "steps": steps, "config": serde_json::to_value(&cfg)? }))
    };
    if let Some(dir) = &a.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let log = train(&mut model, &dataset, &cfg, |step, m| match &a.checkpoint_dir {
        Some(dir) => save_checkpoint_with(m, dir.join(format!("step_{step:06}.fpt")), metadata(step)?),
        None => Ok(()),
    })?;
    save_checkpoint_with(&model, &a.out, metadata(cfg.steps)?)?;
    if let Some(path) = &a.loss_log {
        write_loss_log(path, &log)?;
    }
    if let Some(last) = log.last() {
        println!("final loss {:.6} after {} steps", last.loss, cfg.steps);
    }
    Ok(())
}

fn register(a: RegisterArgs) -> Result<()> {
    print_config("register", &a)?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let source = read_points(&a.source)?;
    let target = read_points(&a.target)?;
    let moved = match a.normalize {
        NormalizeArg::None => ck.model.fpt_forward(&source, &target)?.apply(&source)?,
        NormalizeArg::Target => {
            let (lo, hi) = target
                .bounds()
                .ok_or_else(|| Error::Invalid("empty target".into()))?;
            let record = ScaleRecord::from_bounds(lo, hi)?;
            let scale = record.scale();
            let field = ck.model.fpt_forward(&record.apply(&source), &record.apply(&target))?;
            source.map_indexed(|i, p| {
                let d = field.displacement(i);
                std::array::from_fn(|k| p[k] + d[k] / scale[k])
            })?
        }
    };
    write_points(&a.out, &moved)
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let transformation = match a.protocol {
        ProtocolArg::Rigid => Transformation::Rigid,
        ProtocolArg::Nonrigid => Transformation::NonRigid,
    };
    let mut cfg = BenchmarkConfig::new(transformation, a.occlusion.into(), a.seed);
    cfg.icp_iterations = a.icp_iterations;
    cfg.pairs_per_shape = a.pairs_per_shape;
    cfg.augmentation.occlusion_k = a.occlusion_k.unwrap_or(a.num_points / 4);
    print_config("benchmark", &serde_json::json!({ "args": &a, "resolved": &cfg }))?;

    let shapes: Vec<PointSet> = match &a.shapes {
        Some(dir) => load_shape_dir(dir, a.num_points, a.seed)?,
        None => builtin_shapes(&shapes::HELDOUT_PRIMITIVES, a.num_points, a.seed)?,
    }
    .into_iter()
    .map(|(_, ps)| ps)
    .collect();
    let mut models = Vec::with_capacity(a.checkpoint.len());
    for (i, path) in a.checkpoint.iter().enumerate() {
        let name = if a.checkpoint.len() == 1 {
            "fpt".to_string()
        } else {
            format!("fpt{}", i + 1)
        };
        models.push((name, read_checkpoint(path)?.model));
    }
    let rows = run_benchmark(&models, &shapes, &cfg)?;
    write_report(&a.out, &rows)
}

#[derive(Serialize)]
struct TxaReport<'a> {
    #[serde(flatten)]
    result: &'a crate::spine::TxaResult,
    checkpoint_id: String,
    prealign: Prealign,
}

fn txa_cmd(a: TxaArgs) -> Result<()> {
    print_config("txa", &a)?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let (landmarks, ap_axis) = read_landmarks(&a.landmarks)?;
    let model = LabeledSpineModel::new(read_points(&a.model)?, landmarks, ap_axis)?;
    let recon = read_points(&a.recon)?;
    let prealign: Prealign = a.prealign.into();
    let result = measure_case(&model, &recon, &ck.model, &a.upper, &a.lower, prealign)?;
    let report = TxaReport {
        result: &result,
        checkpoint_id: ck.id,
        prealign,
    };
    write_text(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("TxA {:.3} deg", result.angle_deg);
    Ok(())
}
